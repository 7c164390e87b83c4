"""Built-in verification suites against independent oracles.

Each suite returns a list of :class:`Check` rows; the CLI prints them as a
table and exits 0 only when every row passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolver import second_eigenpair
from .errors import InputError
from .graph import (build_epsilon_graph, brute_force_rcc, cut_metrics,
                    graph_from_edges, graph_second_eigenpair, threshold_cut)
from .mesh import build_interval_mesh, build_rectangle_mesh


def pi_p(p: float) -> float:
    """Half-period of the p-sine: 2 pi / (p sin(pi / p))."""
    return 2.0 * math.pi / (p * math.sin(math.pi / p))


def interval_dirichlet_eigenvalue(p: float, a: float, b: float, k: int = 2) -> float:
    """k-th Dirichlet eigenvalue of the 1D p-Laplacian, (p - 1) (k pi_p / (b - a))^p."""
    return (p - 1.0) * (k * pi_p(p) / (b - a)) ** p


def fiedler_value(g) -> float:
    """Second smallest eigenvalue of the dense graph Laplacian."""
    return float(np.linalg.eigvalsh(g.laplacian().toarray())[1])


def same_bipartition(n: int, C1, C2) -> bool:
    a = np.zeros(n, dtype=bool)
    b = np.zeros(n, dtype=bool)
    a[np.asarray(C1, dtype=np.int64)] = True
    b[np.asarray(C2, dtype=np.int64)] = True
    return bool(np.array_equal(a, b) or np.array_equal(a, ~b))


def bridged_cliques(k: int = 4):
    """Two k-cliques joined by one unit edge between node k-1 and node k."""
    clique = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges = clique + [(i + k, j + k) for i, j in clique] + [(k - 1, k)]
    return graph_from_edges(2 * k, edges)


def random_connected_epsilon_graphs(count: int = 10, seed: int = 0, n_max: int = 12,
                                    eps: float = 0.6):
    """Seeded uniform points in the unit square, redrawn until the graph is connected."""
    rng = np.random.default_rng(seed)
    graphs = []
    while len(graphs) < count:
        n = int(rng.integers(6, n_max + 1))
        g = build_epsilon_graph(rng.uniform(0.0, 1.0, size=(n, 2)), eps)
        if not g.disconnected:
            graphs.append(g)
    return graphs


@dataclass
class Check:
    name: str
    measured: float
    target: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<34s} measured {self.measured:.6e}  "
                f"limit {self.target:.3e}  {self.detail}").rstrip()


def suite_1d_closed_form(ps=(1.5, 2.0, 3.0, 5.0), n: int = 2000, rtol: float = 1e-2):
    mesh = build_interval_mesh(-2.0, 2.0, n)
    rows = []
    for p in ps:
        rep = second_eigenpair(mesh, p, "dirichlet")
        exact = interval_dirichlet_eigenvalue(p, -2.0, 2.0)
        err = abs(rep.lambda2 - exact) / exact
        rows.append(Check(f"1d p={p:g}", err, rtol, err <= rtol and rep.converged,
                          f"lambda2 {rep.lambda2:.10g} exact {exact:.10g}"))
    return rows


def suite_square_p2(n: int = 200, atol: float = 2e-3):
    mesh = build_rectangle_mesh(-2.0, 2.0, -2.0, 2.0, n, n)
    rep = second_eigenpair(mesh, 2.0, "dirichlet")
    exact = 5.0 * math.pi ** 2 / 16.0
    err = abs(rep.lambda2 - exact)
    return [Check(f"square dirichlet {n}x{n}", err, atol, err <= atol and rep.converged,
                  f"lambda2 {rep.lambda2:.10g} exact {exact:.10g}")]


def suite_neumann_p2(n: int = 128, rtol: float = 1e-2, mean_tol: float = 1e-10):
    mesh = build_rectangle_mesh(-2.0, 2.0, -2.0, 2.0, n, n)
    rep = second_eigenpair(mesh, 2.0, "neumann")
    exact = math.pi ** 2 / 16.0
    err = abs(rep.lambda2 - exact) / exact
    worst = max(abs(m) for m in rep.p_mean_history)
    return [
        Check(f"square neumann {n}x{n}", err, rtol, err <= rtol and rep.converged,
              f"lambda2 {rep.lambda2:.10g} exact {exact:.10g}"),
        Check("neumann p-mean per sweep", worst, mean_tol, worst <= mean_tol),
    ]


def suite_graph_fiedler(count: int = 10, seed: int = 0, rtol: float = 1e-4):
    rows = []
    for k, g in enumerate(random_connected_epsilon_graphs(count, seed)):
        lam, _, rep = graph_second_eigenpair(g, 2.0)
        exact = fiedler_value(g)
        err = abs(lam - exact) / exact
        rows.append(Check(f"fiedler graph {k} (n={g.n})", err, rtol,
                          err <= rtol and rep.converged))
    return rows


def suite_graph_rcc():
    rows = []
    fixtures = {
        "bridged K4 pair": bridged_cliques(4),
        "bridged triangles": bridged_cliques(3),
    }
    for name, g in fixtures.items():
        _, f, _ = graph_second_eigenpair(g, 2.0)
        C = threshold_cut(f)
        rcc = cut_metrics(g, C).rcc
        best, C_star = brute_force_rcc(g)
        gap = abs(rcc - best)
        rows.append(Check(f"rcc {name}", gap, 1e-12,
                          gap <= 1e-12 and same_bipartition(g.n, C, C_star),
                          f"threshold {rcc:.6g} optimum {best:.6g}"))
    return rows


SUITES = {
    "1d-closed-form": suite_1d_closed_form,
    "square-p2": suite_square_p2,
    "neumann-p2": suite_neumann_p2,
    "graph-fiedler": suite_graph_fiedler,
    "graph-rcc": suite_graph_rcc,
}


def run_suite(name: str, ps=None, seed: int = 0):
    if name not in SUITES:
        raise InputError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if ps is not None and name != "1d-closed-form" and any(p != 2 for p in ps):
        raise InputError(f"suite {name!r} runs at p = 2 only")
    if name == "1d-closed-form":
        return suite_1d_closed_form(tuple(ps) if ps else (1.5, 2.0, 3.0, 5.0))
    if name == "graph-fiedler":
        return suite_graph_fiedler(seed=seed)
    return SUITES[name]()
