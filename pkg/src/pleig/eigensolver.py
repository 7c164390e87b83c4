"""Second p-Laplace eigenpair by bipartition inverse-power iteration.

Each sweep solves ``-Delta_p u = lam_+ (u~_+)^(p-1) - lam_- (u~_-)^(p-1)``,
splits the solution into its positive and negative parts, normalizes each in
L^p and recomputes ``lam_pm = integral |grad u~_pm|^p``.  Dirichlet and
Neumann boundary conditions are supported; for Neumann the solution is
shifted to zero p-mean after every solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateFieldError, InputError, PartitionCollapseError,
                     SolverError)
from .mesh import (Mesh, ScalarField, grad_energy, lumped_integral, norm_p,
                   normalize_p, p_mean, p_mean_shift, phi_p, split_parts)
from .pde_solver import SolverConfig, dual_norm, solve_p_poisson, weak_operator

__all__ = [
    "BipartitionState", "EigenReport", "IterationDiagnostics", "P_RANGE",
    "build_rhs", "check_iteration_invariants", "eigen_residual", "init_guess",
    "iterate", "make_state", "p_mean", "p_mean_shift", "second_eigenpair",
]

log = logging.getLogger(__name__)

P_RANGE = (1.05, 200.0)
RAYLEIGH_SLACK = 1e-8
LOWER_BOUND_SLACK = 1e-8


def check_p(p: float) -> float:
    p = float(p)
    if not P_RANGE[0] <= p <= P_RANGE[1]:
        raise InputError(f"p must lie in [{P_RANGE[0]}, {P_RANGE[1]}], got {p}")
    return p


@dataclass(frozen=True)
class BipartitionState:
    """One iterate: the solve output and its normalized sign parts."""

    u: ScalarField
    u_plus: ScalarField
    u_minus: ScalarField
    lambda_plus: float
    lambda_minus: float
    rayleigh: float
    raw_norm: float
    raw_part_norms: tuple[float, float]

    @property
    def u_normalized(self) -> ScalarField:
        return self.u_plus - self.u_minus

    @property
    def lambda_max(self) -> float:
        return max(self.lambda_plus, self.lambda_minus)


def make_state(u: ScalarField, p: float) -> BipartitionState:
    """Split ``u``, normalize both parts and evaluate their energies."""
    plus, minus = split_parts(u)
    try:
        u_plus, u_minus = normalize_p(plus, p), normalize_p(minus, p)
    except DegenerateFieldError as exc:
        raise PartitionCollapseError(
            "one sign part vanished; the iterate left the two-nodal-domain regime") from exc
    nrm = norm_p(u, p)
    return BipartitionState(
        u=u,
        u_plus=u_plus,
        u_minus=u_minus,
        lambda_plus=grad_energy(u_plus, p),
        lambda_minus=grad_energy(u_minus, p),
        rayleigh=grad_energy(u, p) / nrm ** p,
        raw_norm=nrm,
        raw_part_norms=(norm_p(plus, p), norm_p(minus, p)),
    )


def init_guess(mesh: Mesh, p: float, bc: str = "dirichlet") -> BipartitionState:
    """Second Laplace eigenfunction of the box, split into a starting state.

    The longer rectangle side carries the sign change.
    """
    b = mesh.bounds
    if bc == "dirichlet":
        if mesh.dim == 1:
            u = mesh.interpolate(lambda x: np.sin(2 * np.pi * (x - b[0]) / (b[1] - b[0])))
        elif b[1] - b[0] >= b[3] - b[2]:
            u = mesh.interpolate(lambda x, y: np.sin(2 * np.pi * (x - b[0]) / (b[1] - b[0]))
                                 * np.sin(np.pi * (y - b[2]) / (b[3] - b[2])))
        else:
            u = mesh.interpolate(lambda x, y: np.sin(np.pi * (x - b[0]) / (b[1] - b[0]))
                                 * np.sin(2 * np.pi * (y - b[2]) / (b[3] - b[2])))
        u = u.with_values(np.where(mesh.boundary_mask, 0.0, u.values))
    elif bc == "neumann":
        if mesh.dim == 2 and b[1] - b[0] == b[3] - b[2]:
            # degenerate pair on a square: take the combination whose nodal
            # line follows the mesh diagonals, so no element is cut
            u = mesh.interpolate(lambda x, y: np.cos(np.pi * (x - b[0]) / (b[1] - b[0]))
                                 - np.cos(np.pi * (y - b[2]) / (b[3] - b[2])))
        elif mesh.dim == 1 or b[1] - b[0] > b[3] - b[2]:
            u = mesh.interpolate(lambda *c: np.cos(np.pi * (c[0] - b[0]) / (b[1] - b[0])))
        else:
            u = mesh.interpolate(lambda x, y: np.cos(np.pi * (y - b[2]) / (b[3] - b[2])))
        u = p_mean_shift(u, p)
    else:
        raise InputError(f"unknown boundary condition {bc!r}")
    # sin/cos evaluated at the nodal line give roundoff-sized values of either sign
    scale = np.max(np.abs(u.values))
    u = u.with_values(np.where(np.abs(u.values) <= 1e-14 * scale, 0.0, u.values))
    if not (np.any(u.values > 0) and np.any(u.values < 0)):
        raise InputError("mesh too coarse to resolve a sign change of the initial guess")
    return make_state(u, p)


def build_rhs(state: BipartitionState, p: float) -> ScalarField:
    """lam_+ (u~_+)^(p-1) - lam_- (u~_-)^(p-1), nodally."""
    f = (state.lambda_plus * state.u_plus.values ** (p - 1.0)
         - state.lambda_minus * state.u_minus.values ** (p - 1.0))
    return state.u.with_values(f)


def eigen_residual(u: ScalarField, lam: float, p: float, bc: str = "dirichlet") -> float:
    """Dual-norm residual of the weak eigen-equation -Delta_p u = lam |u|^(p-2) u."""
    mesh = u.mesh
    r = weak_operator(u, p) - lam * mesh.lumped_mass * phi_p(u.values, p)
    if bc == "dirichlet":
        r[mesh.boundary_mask] = 0.0
    return dual_norm(mesh, r)


@dataclass
class IterationDiagnostics:
    """Margins of the per-sweep bounds; negative margins are violations."""

    rayleigh_margin: float
    lower_bound_margin: float
    identity_errors: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.rayleigh_margin >= 0 and self.lower_bound_margin >= 0


def identity_errors(state: BipartitionState, p: float) -> dict:
    """Relative errors of the disjoint-support identities on normalized parts."""
    mesh = state.u.mesh
    lp, lm = state.lambda_plus, state.lambda_minus
    up, um = state.u_plus.values, state.u_minus.values
    whole = lumped_integral(mesh, np.abs(up - um) ** p)
    parts = lumped_integral(mesh, up ** p) + lumped_integral(mesh, um ** p)
    weighted = lumped_integral(mesh, np.abs(lp * up - lm * um) ** p)
    q = p / (p - 1.0)
    rhs = build_rhs(state, p).values
    dual = lumped_integral(mesh, np.abs(rhs) ** q)

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    return {
        "split_norm": rel(whole, parts),
        "weighted_norm": rel(weighted, lp ** p + lm ** p),
        "rhs_dual_norm": rel(dual, lp ** q + lm ** q),
    }


def check_iteration_invariants(prev: BipartitionState, nxt: BipartitionState,
                               p: float) -> IterationDiagnostics:
    """Rayleigh bound against the previous sweep and the lower bound on the solve norm."""
    rayleigh_margin = prev.lambda_max + RAYLEIGH_SLACK - nxt.rayleigh
    lower = 2.0 ** (-(p - 1.0) / p)
    lower_margin = nxt.raw_norm - (lower - LOWER_BOUND_SLACK)
    return IterationDiagnostics(rayleigh_margin, lower_margin, identity_errors(nxt, p))


@dataclass
class EigenReport:
    p: float
    bc: str
    lambda2: float
    rayleigh: float
    lambda_plus_history: list
    lambda_minus_history: list
    rayleigh_history: list
    iterations: int
    converged: bool
    u2: ScalarField
    state: BipartitionState
    diagnostics: list = field(default_factory=list)
    invariant_violations: list = field(default_factory=list)
    p_mean_history: list = field(default_factory=list)
    raw_part_norm_history: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_energy_monotone: list = field(default_factory=list)

    @property
    def lambda_gap(self) -> float:
        return abs(self.state.lambda_plus - self.state.lambda_minus)


def iterate(state: BipartitionState, p: float, bc: str = "dirichlet",
            solver_config: SolverConfig | None = None, outer_tol: float = 1e-6,
            max_outer: int = 200) -> EigenReport:
    """Run bipartition sweeps from ``state`` until both energies settle.

    Stops when ``|lam_pm^(k+1) - lam_pm^k| < outer_tol * max(1, lam_pm^k)`` for
    both signs.  Bound violations are recorded in the report, not raised.
    """
    p = check_p(p)
    config = (solver_config or SolverConfig(p=p)).with_p(p)
    mesh = state.u.mesh
    report = EigenReport(p=p, bc=bc, lambda2=state.lambda_max, rayleigh=state.rayleigh,
                         lambda_plus_history=[], lambda_minus_history=[],
                         rayleigh_history=[], iterations=0, converged=False,
                         u2=state.u_normalized, state=state)
    for k in range(1, max_outer + 1):
        f = build_rhs(state, p)
        if bc == "neumann":
            m = mesh.lumped_mass
            f = f.with_values(f.values - np.dot(m, f.values) / m.sum())
        u, inner = solve_p_poisson(f, config, bc, u0=state.u_normalized)
        if not inner.converged:
            final = inner.residual_history[-1]
            if final > 1e3 * config.outer_tol:
                raise SolverError(f"inner p-Poisson solve failed at sweep {k} "
                                  f"(relative residual {final:.3e})",
                                  iterations=inner.iterations)
            log.debug("sweep %d: inner solve stalled at residual %.3e, accepted", k, final)
        new = make_state(u, p)
        diag = check_iteration_invariants(state, new, p)
        report.diagnostics.append(diag)
        if diag.rayleigh_margin < 0:
            report.invariant_violations.append(
                {"iteration": k, "kind": "rayleigh_bound", "margin": diag.rayleigh_margin})
        if diag.lower_bound_margin < 0:
            report.invariant_violations.append(
                {"iteration": k, "kind": "norm_lower_bound", "margin": diag.lower_bound_margin})
        if bc == "neumann":
            report.p_mean_history.append(p_mean(u, p))
        report.raw_part_norm_history.append(new.raw_part_norms)
        report.inner_iterations.append(inner.iterations)
        E = inner.energy_history
        report.inner_energy_monotone.append(all(b <= a for a, b in zip(E, E[1:])))
        report.lambda_plus_history.append(new.lambda_plus)
        report.lambda_minus_history.append(new.lambda_minus)
        report.rayleigh_history.append(new.rayleigh)
        report.iterations = k
        log.info("sweep %3d  lam+ %.10g  lam- %.10g  rayleigh %.10g  inner %d",
                 k, new.lambda_plus, new.lambda_minus, new.rayleigh, inner.iterations)
        done = (abs(new.lambda_plus - state.lambda_plus)
                < outer_tol * max(1.0, state.lambda_plus)
                and abs(new.lambda_minus - state.lambda_minus)
                < outer_tol * max(1.0, state.lambda_minus))
        state = new
        if done:
            report.converged = True
            break
    report.state = state
    report.lambda2 = state.lambda_max
    report.u2 = state.u_normalized
    report.rayleigh = grad_energy(report.u2, p) / norm_p(report.u2, p) ** p
    return report


def second_eigenpair(mesh: Mesh, p: float, bc: str = "dirichlet",
                     solver_config: SolverConfig | None = None,
                     outer_tol: float = 1e-6, max_outer: int = 200) -> EigenReport:
    """Initial guess plus :func:`iterate`."""
    p = check_p(p)
    return iterate(init_guess(mesh, p, bc), p, bc, solver_config, outer_tol, max_outer)
