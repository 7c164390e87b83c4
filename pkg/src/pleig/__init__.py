"""Second eigenpairs of the p-Laplacian on intervals, rectangles and graphs."""
from .eigensolver import EigenReport, init_guess, iterate, second_eigenpair
from .errors import (DegenerateFieldError, InputError, PartitionCollapseError,
                     PleigError, SolverError, StagnationError)
from .graph import (Graph, GraphSolverConfig, build_epsilon_graph, brute_force_rcc,
                    cut_metrics, graph_second_eigenpair, rayleigh_graph, threshold_cut)
from .mesh import Mesh, ScalarField, build_interval_mesh, build_rectangle_mesh
from .pde_solver import SolverConfig, first_eigenpair, solve_p_poisson

__version__ = "0.1.0"

__all__ = [
    "DegenerateFieldError", "EigenReport", "Graph", "GraphSolverConfig", "InputError",
    "Mesh", "PartitionCollapseError", "PleigError", "ScalarField", "SolverConfig",
    "SolverError", "StagnationError", "brute_force_rcc", "build_epsilon_graph",
    "build_interval_mesh", "build_rectangle_mesh", "cut_metrics", "first_eigenpair",
    "graph_second_eigenpair", "init_guess", "iterate", "rayleigh_graph",
    "second_eigenpair", "solve_p_poisson", "threshold_cut",
]
