"""p-Poisson solver: energy descent along a linearized weighted-Laplacian direction.

Each step solves ``K(u) w = R(u)`` where ``K`` is the P1 stiffness matrix with
per-element weight ``clamp((eps + |grad u|)^(p-2))`` and ``R`` the weak
residual, then picks ``alpha`` by golden-section search on ``E(u + alpha w)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InputError, SolverError, StagnationError
from .mesh import (Mesh, ScalarField, grad_energy, gradients, normalize_p,
                   p_mean_shift, phi_p)

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
RESIDUAL_FLOOR = 1e-300
_MAX_BRACKET_SHRINKS = 8
_STALL_WINDOW = 1e4
LINEAR_SOLVERS = ("auto", "cg", "direct")


@dataclass(frozen=True)
class SolverConfig:
    """Inner-solver parameters.

    ``eps_reg=None`` resolves to ``1e-8 / diameter`` of the domain and
    ``alpha_max=None`` to ``max(2, 2 / (p - 1))``.  ``linear_solver`` is
    ``"cg"``, ``"direct"`` or ``"auto"`` (CG, falling back to a sparse LU
    factorization when CG fails on badly scaled weights at large p).
    """

    p: float = 2.0
    eps_reg: float | None = None
    weight_clamp: tuple[float, float] = (1e-10, 1e10)
    outer_tol: float = 1e-10
    max_outer: int = 200
    cg_tol: float = 1e-12
    cg_max_iter: int | None = None
    alpha_max: float | None = None
    line_search_evals: int = 40
    stall_patience: int = 5
    linear_solver: str = "auto"

    def __post_init__(self):
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InputError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if not self.p > 1:
            raise InputError(f"p must exceed 1, got {self.p}")
        w_min, w_max = self.weight_clamp
        if not 0 < w_min <= w_max:
            raise InputError(f"weight clamp must satisfy 0 < w_min <= w_max, got {self.weight_clamp}")
        if self.eps_reg is not None and self.eps_reg < 0:
            raise InputError("eps_reg must be non-negative")
        if min(self.outer_tol, self.cg_tol) <= 0:
            raise InputError("tolerances must be positive")
        if self.max_outer < 1:
            raise InputError("max_outer must be at least 1")
        if self.alpha_max is not None and self.alpha_max <= 0:
            raise InputError("alpha_max must be positive")

    def eps_for(self, diameter: float) -> float:
        return 1e-8 / diameter if self.eps_reg is None else self.eps_reg

    @property
    def alpha_upper(self) -> float:
        if self.alpha_max is not None:
            return self.alpha_max
        return max(2.0, 2.0 / (self.p - 1.0))

    def with_p(self, p: float) -> "SolverConfig":
        return replace(self, p=p)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    alpha_history: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def pcg(A, b, tol=1e-12, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||r|| <= tol * ||b||``.  Returns ``(x, iterations)``.
    """
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x if x0 is not None else b.copy()
    z = dinv * r
    d = z.copy()
    rz = r @ z
    target = tol * bnorm
    for k in range(1, max_iter + 1):
        Ad = A @ d
        dAd = d @ Ad
        if dAd <= 0:
            raise SolverError("CG met a non-positive curvature direction", iterations=k)
        a = rz / dAd
        x += a * d
        r -= a * Ad
        if np.linalg.norm(r) <= target:
            return x, k
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations "
                      f"(relative residual {np.linalg.norm(r) / bnorm:.3e})",
                      iterations=max_iter)


def solve_spd(A, b, method: str = "auto", tol: float = 1e-12, max_iter=None):
    """Solve ``A x = b`` for sparse SPD ``A``; returns ``(x, cg_iterations)``."""
    if method == "direct":
        return spla.spsolve(A.tocsc(), b), 0
    try:
        return pcg(A, b, tol=tol, max_iter=max_iter)
    except SolverError as exc:
        if method == "cg":
            raise
        log.debug("%s; falling back to a direct solve", exc)
        return spla.spsolve(A.tocsc(), b), exc.iterations or 0


def assemble_stiffness(mesh: Mesh, element_weights: np.ndarray) -> sp.csr_matrix:
    """Sum over elements of weight_e * |e| * grad(phi_a) . grad(phi_b)."""
    k = mesh.dim + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    data = (element_weights[:, None, None] * mesh.local_stiffness).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def free_nodes(mesh: Mesh, bc: str) -> np.ndarray:
    """Indices of unknowns: interior nodes (Dirichlet) or all but node 0 (Neumann)."""
    if bc == "dirichlet":
        return np.flatnonzero(~mesh.boundary_mask)
    if bc == "neumann":
        return np.arange(1, mesh.n_nodes)
    raise InputError(f"unknown boundary condition {bc!r}")


# ---------------------------------------------------------------------------
# energy, residual, descent
# ---------------------------------------------------------------------------

def _same_mesh(u: ScalarField, f: ScalarField):
    if u.mesh is not f.mesh:
        raise InputError("u and f live on different meshes")


def energy(u: ScalarField, f: ScalarField, p: float) -> float:
    """E(u) = (1/p) * integral |grad u|^p - lumped integral of f u."""
    _same_mesh(u, f)
    load = float(np.dot(u.mesh.lumped_mass, f.values * u.values))
    return grad_energy(u, p) / p - load


def _flux(g: np.ndarray, p: float) -> np.ndarray:
    s = np.sqrt(np.einsum("ei,ei->e", g, g))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(s > 0, s ** (p - 2.0), 0.0)
    return coef[:, None] * g


def weak_operator(u: ScalarField, p: float) -> np.ndarray:
    """Nodal vector sum_e |e| |grad u|^(p-2) grad u . grad phi_i."""
    mesh = u.mesh
    flux = _flux(gradients(mesh, u.values), p)
    contrib = mesh.element_measure[:, None] * np.einsum("ei,eai->ea", flux, mesh.basis_gradients)
    return np.bincount(mesh.elements.ravel(), weights=contrib.ravel(), minlength=mesh.n_nodes)


def residual(u: ScalarField, f: ScalarField, p: float, bc: str = "dirichlet") -> ScalarField:
    """Discrete weak residual tested against every hat function."""
    _same_mesh(u, f)
    mesh = u.mesh
    R = mesh.lumped_mass * f.values - weak_operator(u, p)
    if bc == "dirichlet":
        R[mesh.boundary_mask] = 0.0
    return u.with_values(R)


def dual_norm(mesh: Mesh, r: np.ndarray) -> float:
    """Norm of a nodal load vector in the lumped dual metric."""
    return float(np.sqrt(np.sum(r * r / mesh.lumped_mass)))


def _power_increment(base_sq, cross, step_sq, alpha, p):
    """|g + alpha h|^p - |g|^p per element, free of cancellation.

    ``base_sq = |g|^2``, ``cross = 2 g.h``, ``step_sq = |h|^2``.
    """
    delta = alpha * cross + alpha * alpha * step_sq
    out = np.empty_like(base_sq)
    flat = base_sq == 0.0
    with np.errstate(over="ignore"):
        out[flat] = np.maximum(delta[flat], 0.0) ** (0.5 * p)
    nz = ~flat
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.maximum(delta[nz] / base_sq[nz], -1.0)
        t = 0.5 * p * np.log1p(ratio)
        base_p = base_sq[nz] ** (0.5 * p)
        big = t > 1.0
        inc = np.where(big, 0.0, base_p * np.expm1(np.minimum(t, 1.0)))
        inc[big] = np.maximum(base_sq[nz][big] + delta[nz][big], 0.0) ** (0.5 * p) - base_p[big]
    out[nz] = inc
    return out


class _LineFunction:
    """alpha -> E(u + alpha w) - E(u), evaluated elementwise in difference form."""

    def __init__(self, u: ScalarField, w: np.ndarray, f: ScalarField, p: float):
        mesh = u.mesh
        g = gradients(mesh, u.values)
        h = gradients(mesh, w)
        self.base_sq = np.einsum("ei,ei->e", g, g)
        self.cross = 2.0 * np.einsum("ei,ei->e", g, h)
        self.step_sq = np.einsum("ei,ei->e", h, h)
        self.measure = mesh.element_measure
        self.load = float(np.dot(mesh.lumped_mass, f.values * w))
        self.p = p

    def __call__(self, alpha: float) -> float:
        inc = _power_increment(self.base_sq, self.cross, self.step_sq, alpha, self.p)
        return float(np.dot(self.measure, inc)) / self.p - alpha * self.load


def golden_section(func, upper: float, n_evals: int = 40, candidates=(1.0,)):
    """Minimize a unimodal ``func`` on (0, upper]; return the best (alpha, value) seen.

    ``candidates`` are evaluated in addition to the golden-section points.
    """
    best_a, best_v = 0.0, 0.0  # func(0) == 0 for increment functions
    seen = {}

    def ev(a):
        nonlocal best_a, best_v
        if a not in seen:
            seen[a] = func(a)
            if seen[a] < best_v:
                best_a, best_v = a, seen[a]
        return seen[a]

    for a in candidates:
        if 0 < a <= upper:
            ev(a)
    lo, hi = 0.0, upper
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = ev(x1), ev(x2)
    for _ in range(max(0, n_evals - 2)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = ev(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = ev(x2)
    ev(upper)
    return best_a, best_v


def element_weights(u: ScalarField, p: float, config: SolverConfig) -> np.ndarray:
    eps = config.eps_for(u.mesh.diameter)
    g = gradients(u.mesh, u.values)
    s = np.sqrt(np.einsum("ei,ei->e", g, g))
    with np.errstate(divide="ignore", over="ignore"):
        w = (eps + s) ** (p - 2.0)
    return np.clip(w, *config.weight_clamp)


def descent_direction(u: ScalarField, f: ScalarField, p: float, config: SolverConfig,
                      bc: str = "dirichlet", R: ScalarField | None = None):
    """Solve the linearized weighted-Laplacian system; returns (w, cg_iterations)."""
    mesh = u.mesh
    if R is None:
        R = residual(u, f, p, bc)
    free = free_nodes(mesh, bc)
    K = assemble_stiffness(mesh, element_weights(u, p, config))[free][:, free]
    w = np.zeros(mesh.n_nodes)
    w[free], iters = solve_spd(K.tocsr(), R.values[free], config.linear_solver,
                               tol=config.cg_tol, max_iter=config.cg_max_iter)
    return w, iters


def descent_step(u: ScalarField, f: ScalarField, p: float, config: SolverConfig,
                 bc: str = "dirichlet", _stats: dict | None = None):
    """One energy-descent update; returns ``(u_next, alpha, energy_next)``.

    Raises :class:`StagnationError` when no step length decreases the energy.
    """
    u_next, alpha, dE = _step(u, f, p, config, bc, _stats)
    return u_next, alpha, energy(u, f, p) + dE


def _step(u, f, p, config, bc, _stats=None):
    w, iters = descent_direction(u, f, p, config, bc)
    line = _LineFunction(u, w, f, p)
    upper = config.alpha_upper
    alpha, dE = golden_section(line, upper, config.line_search_evals)
    # badly scaled directions (clamped weights far from the solution) need
    # step lengths below the bracket resolution
    for _ in range(_MAX_BRACKET_SHRINKS):
        if dE < 0.0:
            break
        upper *= 1e-6
        alpha, dE = golden_section(line, upper, config.line_search_evals)
    if _stats is not None:
        _stats["cg_iterations"] = iters
    if not dE < 0.0:
        raise StagnationError("line search found no energy decrease")
    return u.with_values(u.values + alpha * w), alpha, dE


# ---------------------------------------------------------------------------
# p-Poisson solves
# ---------------------------------------------------------------------------

def _solve(f: ScalarField, config: SolverConfig, bc: str, u0: ScalarField | None):
    mesh = f.mesh
    p = config.p
    load = mesh.lumped_mass * f.values
    if bc == "dirichlet":
        load = np.where(mesh.boundary_mask, 0.0, load)
    scale = max(dual_norm(mesh, load), RESIDUAL_FLOOR)

    if u0 is None:
        u = f.with_values(np.zeros(mesh.n_nodes))
    elif bc == "dirichlet":
        u = f.with_values(np.where(mesh.boundary_mask, 0.0, u0.values))
    else:
        u = f.with_values(u0.values - u0.values[0])

    report = SolveReport()
    E = energy(u, f, p)
    report.energy_history.append(E)
    stats = {}
    best, since_best = math.inf, 0
    for it in range(config.max_outer + 1):
        R = residual(u, f, p, bc)
        rel = dual_norm(mesh, R.values) / scale
        report.residual_history.append(rel)
        if rel <= config.outer_tol:
            report.converged = True
            break
        if it == config.max_outer:
            break
        # roundoff floor: near the target the residual can stop improving
        if rel < 0.5 * best:
            best, since_best = rel, 0
        elif best <= _STALL_WINDOW * config.outer_tol:
            since_best += 1
            if since_best >= config.stall_patience:
                report.stalled = True
                break
        try:
            u, alpha, dE = _step(u, f, p, config, bc, _stats=stats)
        except StagnationError:
            log.debug("p-Poisson stagnated at relative residual %.3e", rel)
            break
        # accumulate exact increments: a direct recomputation loses them to roundoff
        E = E + dE
        report.iterations += 1
        report.energy_history.append(E)
        report.alpha_history.append(alpha)
        report.cg_iterations.append(stats.get("cg_iterations", 0))
    log.debug("p-Poisson (%s, p=%g): %d steps, residual %.3e, converged=%s",
              bc, p, report.iterations, report.residual_history[-1], report.converged)
    return u, report


def solve_p_poisson_dirichlet(f: ScalarField, config: SolverConfig,
                              u0: ScalarField | None = None):
    """Solve -Delta_p u = f, u = 0 on the boundary.  Returns ``(u, report)``."""
    return _solve(f, config, "dirichlet", u0)


def solve_p_poisson_neumann(f: ScalarField, config: SolverConfig,
                            u0: ScalarField | None = None):
    """Solve -Delta_p u = f with natural boundary conditions and zero p-mean.

    ``f`` must satisfy the compatibility condition sum_i m_i f_i = 0.
    """
    load = f.mesh.lumped_mass * f.values
    if abs(load.sum()) > 1e-10 * max(np.abs(load).sum(), RESIDUAL_FLOOR):
        raise InputError(f"incompatible Neumann data: lumped integral of f is {load.sum():.3e}")
    u, report = _solve(f, config, "neumann", u0)
    return p_mean_shift(u, config.p), report


def solve_p_poisson(f: ScalarField, config: SolverConfig, bc: str = "dirichlet",
                    u0: ScalarField | None = None):
    if bc == "dirichlet":
        return solve_p_poisson_dirichlet(f, config, u0)
    if bc == "neumann":
        return solve_p_poisson_neumann(f, config, u0)
    raise InputError(f"unknown boundary condition {bc!r}")


def first_eigen_guess(mesh: Mesh) -> ScalarField:
    """Single-bump positive function vanishing on the boundary."""
    b = mesh.bounds
    if mesh.dim == 1:
        return mesh.interpolate(lambda x: np.sin(np.pi * (x - b[0]) / (b[1] - b[0])))
    return mesh.interpolate(lambda x, y: np.sin(np.pi * (x - b[0]) / (b[1] - b[0]))
                            * np.sin(np.pi * (y - b[2]) / (b[3] - b[2])))


@dataclass
class FirstEigenReport:
    lambda1: float
    lambda_history: list
    iterations: int
    converged: bool


def first_eigenpair(mesh: Mesh, p: float, bc: str = "dirichlet",
                    config: SolverConfig | None = None, tol: float = 1e-8,
                    max_outer: int = 500, return_report: bool = False):
    """Inverse power method for the first Dirichlet eigenpair.

    Iterates ``v <- solve(phi_p(v~))`` with ``v~`` normalized in L^p and
    returns ``(lambda1, w1)`` where ``w1`` is the normalized, nonnegative
    eigenfunction.
    """
    if bc != "dirichlet":
        raise InputError("first_eigenpair supports Dirichlet conditions only "
                         "(the Neumann first eigenpair is the constant with lambda = 0)")
    config = (config or SolverConfig(p=p)).with_p(p)
    v = normalize_p(first_eigen_guess(mesh), p)
    lam = grad_energy(v, p)
    history = [lam]
    converged = False
    warm = None
    for _ in range(max_outer):
        rhs = v.with_values(phi_p(v.values, p))
        sol, rep = solve_p_poisson_dirichlet(rhs, config, u0=warm)
        if not rep.converged and rep.residual_history[-1] > 1e3 * config.outer_tol:
            raise SolverError("inner p-Poisson solve failed in first_eigenpair",
                              iterations=rep.iterations)
        v = normalize_p(sol, p)
        warm = v * (lam ** (-1.0 / (p - 1.0)))
        lam_new = grad_energy(v, p)
        history.append(lam_new)
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            converged = True
            break
        lam = lam_new
    if not converged:
        raise SolverError(f"first_eigenpair did not converge in {max_outer} iterations",
                          iterations=max_outer)
    if np.sum(v.values) < 0:
        v = -v
    report = FirstEigenReport(lam, history, len(history) - 1, converged)
    return (lam, v, report) if return_report else (lam, v)
