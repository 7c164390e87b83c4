"""Exception types raised by the solvers and the CLI."""


class PleigError(Exception):
    """Base class for all library errors."""


class InputError(PleigError, ValueError):
    """Invalid arguments, meshes, graphs or configuration."""


class DegenerateFieldError(PleigError, ValueError):
    """A field (or node vector) that must be nonzero is identically zero."""


class SolverError(PleigError, RuntimeError):
    """A linear or nonlinear inner solve failed to converge."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class StagnationError(PleigError, RuntimeError):
    """Line search could not find any decrease of the energy."""


class PartitionCollapseError(PleigError, RuntimeError):
    """One of the two sign parts vanished during the bipartition iteration."""
