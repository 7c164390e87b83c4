"""Graph p-Laplacian: epsilon-graphs, p-Rayleigh quotient, second eigenvector, Cheeger cuts.

The operator carries the edge weights, ``(Delta_p f)_i = sum_j w_ij phi_p(f_i - f_j)``,
so it is the exact gradient of ``Q_p(f) = 1/2 sum_ij w_ij |f_i - f_j|^p``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InputError, PartitionCollapseError, SolverError
from .mesh import phi_p, zero_phi_mean
from .pde_solver import LINEAR_SOLVERS, _power_increment, golden_section, solve_spd

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted undirected graph; ``adjacency`` is symmetric CSR with zero diagonal."""

    adjacency: sp.csr_matrix
    eps: float | None = None
    edge_i: np.ndarray = field(init=False, repr=False)
    edge_j: np.ndarray = field(init=False, repr=False)
    edge_w: np.ndarray = field(init=False, repr=False)
    degrees: np.ndarray = field(init=False, repr=False)
    node_mass: np.ndarray = field(init=False, repr=False)
    component_labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        W = sp.csr_matrix(self.adjacency, dtype=float)
        W.sum_duplicates()
        if W.shape[0] != W.shape[1]:
            raise InputError("adjacency matrix must be square")
        if W.nnz and W.data.min() < 0:
            raise InputError("edge weights must be non-negative")
        if W.diagonal().any():
            raise InputError("adjacency must have a zero diagonal")
        if (W != W.T).nnz:
            raise InputError("adjacency must be exactly symmetric")
        W.eliminate_zeros()
        upper = sp.triu(W, k=1).tocoo()
        object.__setattr__(self, "adjacency", W)
        object.__setattr__(self, "edge_i", upper.row.astype(np.int64))
        object.__setattr__(self, "edge_j", upper.col.astype(np.int64))
        object.__setattr__(self, "edge_w", upper.data.copy())
        object.__setattr__(self, "degrees", np.asarray(W.sum(axis=1)).ravel())
        object.__setattr__(self, "node_mass", np.ones(W.shape[0]))
        _, labels = connected_components(W, directed=False)
        object.__setattr__(self, "component_labels", labels)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.edge_w.size)

    @property
    def n_components(self) -> int:
        return int(self.component_labels.max()) + 1 if self.n else 0

    @property
    def disconnected(self) -> bool:
        """Warning flag: the second eigenvector is then a component indicator."""
        return self.n_components > 1

    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.degrees) - self.adjacency).tocsr()

    def summary(self) -> dict:
        return {"n": self.n, "edges": self.n_edges, "eps": self.eps}


def graph_from_edges(n: int, edges, weights=None) -> Graph:
    """Build a graph from an iterable of (i, j) pairs (each undirected edge once)."""
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=float)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise InputError("edge endpoint out of range")
    W = sp.coo_matrix((np.concatenate([w, w]),
                       (np.concatenate([edges[:, 0], edges[:, 1]]),
                        np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n))
    return Graph(W.tocsr())


def build_epsilon_graph(points, eps: float, weights: str = "unit",
                        sigma: float | None = None, block: int = 1024) -> Graph:
    """Connect points at Euclidean distance in (0, eps].

    ``weights`` is ``"unit"`` or ``"gaussian"`` (``exp(-d^2 / (2 sigma^2))``,
    ``sigma`` defaulting to ``eps``).  Distances are scanned in row blocks.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise InputError("need at least two points")
    if not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    if weights in ("gauss", "gaussian"):
        sigma = eps if sigma is None else float(sigma)
        if not sigma > 0:
            raise InputError("sigma must be positive")
    elif weights != "unit":
        raise InputError(f"unknown weight kind {weights!r}")
    rows, cols, dists = [], [], []
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = X[start:stop, None, :] - X[None, :, :]
        d = np.sqrt(np.einsum("abk,abk->ab", diff, diff))
        i, j = np.nonzero((d > 0) & (d <= eps))
        keep = start + i < j
        rows.append(start + i[keep])
        cols.append(j[keep])
        dists.append(d[i[keep], j[keep]])
    I, J, D = (np.concatenate(a) for a in (rows, cols, dists))
    w = np.ones_like(D) if weights == "unit" else np.exp(-D ** 2 / (2.0 * sigma ** 2))
    W = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([I, J]), np.concatenate([J, I]))),
                      shape=(n, n)).tocsr()
    g = Graph(W, eps=float(eps))
    if g.disconnected:
        log.warning("epsilon-graph has %d connected components", g.n_components)
    return g


# ---------------------------------------------------------------------------
# operator and Rayleigh quotient
# ---------------------------------------------------------------------------

def apply_p_laplacian(g: Graph, f, p: float) -> np.ndarray:
    """(Delta_p f)_i = sum_j w_ij phi_p(f_i - f_j)."""
    f = _vector(g, f)
    flow = g.edge_w * phi_p(f[g.edge_i] - f[g.edge_j], p)
    return (np.bincount(g.edge_i, weights=flow, minlength=g.n)
            - np.bincount(g.edge_j, weights=flow, minlength=g.n))


def p_dirichlet_energy(g: Graph, f, p: float) -> float:
    """Q_p(f) = 1/2 sum_ij w_ij |f_i - f_j|^p = sum over edges."""
    f = _vector(g, f)
    return float(np.dot(g.edge_w, np.abs(f[g.edge_i] - f[g.edge_j]) ** p))


def rayleigh_graph(g: Graph, f, p: float) -> float:
    f = _vector(g, f)
    denom = float(np.sum(np.abs(f) ** p))
    if denom == 0.0:
        raise InputError("Rayleigh quotient of the zero vector is undefined")
    return p_dirichlet_energy(g, f, p) / denom


def _vector(g: Graph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise InputError(f"node vector has shape {f.shape}, graph has {g.n} nodes")
    return f


def phi_mean_shift(f: np.ndarray, p: float) -> np.ndarray:
    """Return ``f - c`` with ``sum_i phi_p(f_i - c) = 0`` (exact mean at p = 2)."""
    return zero_phi_mean(np.asarray(f, dtype=float), np.ones(len(f)), p)


# ---------------------------------------------------------------------------
# inner solve: minimize (1/p) Q_p(f) - <rhs, f> with one pinned node per component
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphSolverConfig:
    """Inner and outer iteration parameters for the graph eigen-iteration.

    ``alpha_max=None`` resolves to ``max(2, 2 / (p - 1))``.  Inner solves are
    warm-started descent runs; one that stops short of ``inner_tol`` is still
    used when its relative residual is at most ``inner_accept``.  For p near 1
    the reweighted steps converge slowly, so partial solves are the norm.
    """

    p: float = 2.0
    eps_reg: float = 1e-8
    weight_clamp: tuple[float, float] = (1e-10, 1e10)
    inner_tol: float = 1e-10
    inner_max_iter: int = 50
    inner_accept: float = 1.0
    cg_tol: float = 1e-12
    cg_max_iter: int | None = None
    alpha_max: float | None = None
    line_search_evals: int = 40
    stall_patience: int = 5
    outer_tol: float = 1e-8
    max_outer: int = 1000
    seed: int = 0
    linear_solver: str = "auto"

    def __post_init__(self):
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InputError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if not self.p > 1:
            raise InputError(f"p must exceed 1, got {self.p}")
        if not 0 < self.weight_clamp[0] <= self.weight_clamp[1]:
            raise InputError("weight clamp must satisfy 0 < w_min <= w_max")
        if min(self.inner_tol, self.cg_tol, self.outer_tol) <= 0:
            raise InputError("tolerances must be positive")

    @property
    def alpha_upper(self) -> float:
        if self.alpha_max is not None:
            return self.alpha_max
        return max(2.0, 2.0 / (self.p - 1.0))


def pinned_nodes(g: Graph) -> np.ndarray:
    """Lowest-index node of every connected component."""
    _, first = np.unique(g.component_labels, return_index=True)
    return np.sort(first)


def _component_center(g: Graph, v: np.ndarray) -> np.ndarray:
    labels = g.component_labels
    sums = np.bincount(labels, weights=v)
    counts = np.bincount(labels)
    return v - (sums / counts)[labels]


class _EdgeLine:
    def __init__(self, g: Graph, f, w, rhs, p):
        d = f[g.edge_i] - f[g.edge_j]
        h = w[g.edge_i] - w[g.edge_j]
        self.base_sq, self.cross, self.step_sq = d * d, 2.0 * d * h, h * h
        self.weights = g.edge_w
        self.load = float(np.dot(rhs, w))
        self.p = p

    def __call__(self, alpha):
        inc = _power_increment(self.base_sq, self.cross, self.step_sq, alpha, self.p)
        return float(np.dot(self.weights, inc)) / self.p - alpha * self.load


@dataclass
class GraphSolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


def solve_graph_p_poisson(g: Graph, rhs: np.ndarray, config: GraphSolverConfig,
                          f0: np.ndarray | None = None):
    """Minimize (1/p) Q_p(f) - <rhs, f> with pinned nodes held at zero."""
    p = config.p
    pinned = pinned_nodes(g)
    free = np.setdiff1d(np.arange(g.n), pinned)
    f = np.zeros(g.n) if f0 is None else f0.astype(float).copy()
    f -= f[pinned][g.component_labels] if f0 is not None else 0.0
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    report = GraphSolveReport()
    best, since_best = math.inf, 0
    for it in range(config.inner_max_iter + 1):
        R = rhs - apply_p_laplacian(g, f, p)
        R[pinned] = 0.0
        rel = float(np.linalg.norm(R)) / scale
        report.residual_history.append(rel)
        if rel <= config.inner_tol:
            report.converged = True
            break
        if it == config.inner_max_iter:
            break
        if rel < 0.5 * best:
            best, since_best = rel, 0
        elif best <= 1e4 * config.inner_tol:
            since_best += 1
            if since_best >= config.stall_patience:
                report.stalled = True
                break
        d = np.abs(f[g.edge_i] - f[g.edge_j])
        with np.errstate(divide="ignore", over="ignore"):
            c = g.edge_w * np.clip((config.eps_reg + d) ** (p - 2.0), *config.weight_clamp)
        C = sp.coo_matrix((np.concatenate([c, c]),
                           (np.concatenate([g.edge_i, g.edge_j]),
                            np.concatenate([g.edge_j, g.edge_i]))), shape=(g.n, g.n)).tocsr()
        L = (sp.diags(np.asarray(C.sum(axis=1)).ravel()) - C).tocsr()[free][:, free]
        w = np.zeros(g.n)
        w[free], _ = solve_spd(L.tocsr(), R[free], config.linear_solver,
                               tol=config.cg_tol, max_iter=config.cg_max_iter)
        line = _EdgeLine(g, f, w, rhs, p)
        upper = config.alpha_upper
        alpha, dJ = golden_section(line, upper, config.line_search_evals)
        for _ in range(8):
            if dJ < 0:
                break
            upper *= 1e-6
            alpha, dJ = golden_section(line, upper, config.line_search_evals)
        if not dJ < 0:
            log.debug("graph p-Poisson stagnated at residual %.3e", rel)
            report.stalled = True
            break
        f = f + alpha * w
        report.iterations += 1
    return f, report


# ---------------------------------------------------------------------------
# second eigenpair
# ---------------------------------------------------------------------------

@dataclass
class GraphEigenReport:
    p: float
    lambda2: float
    lambda_plus_history: list
    lambda_minus_history: list
    rayleigh_history: list
    iterations: int
    converged: bool
    f: np.ndarray
    lambda_plus: float = math.nan
    lambda_minus: float = math.nan
    invariant_violations: list = field(default_factory=list)
    rayleigh_margins: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)


def _parts(f: np.ndarray, p: float, g: Graph):
    """Sign parts scaled by the norm of ``f`` and their weak-form energies.

    ``lam_pm = <Delta_p f, +-f_pm> / ||f_pm||_p^p``.  On a graph, edges crossing
    the sign change couple the two parts, so ``Q_p(f_pm)`` would overcount
    them.  These weak energies satisfy ``Q_p(f) = lam_+ ||f_+||^p + lam_- ||f_-||^p``
    and coincide at every eigenvector.
    """
    plus, minus = np.maximum(f, 0.0), np.maximum(-f, 0.0)
    if not plus.any() or not minus.any():
        raise PartitionCollapseError("one sign part of the graph iterate vanished")
    flux = apply_p_laplacian(g, f, p)
    mass_plus, mass_minus = float(np.sum(plus ** p)), float(np.sum(minus ** p))
    lam_plus = float(np.dot(flux, plus)) / mass_plus
    lam_minus = -float(np.dot(flux, minus)) / mass_minus
    scale = (mass_plus + mass_minus) ** (1.0 / p)
    return plus / scale, minus / scale, lam_plus, lam_minus


def default_start(g: Graph, seed: int = 0) -> np.ndarray:
    """Seeded Gaussian start vector."""
    return np.random.default_rng(seed).standard_normal(g.n)


def graph_second_eigenpair(g: Graph, p: float, config: GraphSolverConfig | None = None,
                           f0=None):
    """Second p-eigenpair by the bipartition inverse-power iteration.

    Returns ``(lambda2, f, report)`` with ``lambda2 = R_p(f)`` at the final
    iterate.  Without ``f0`` the iteration starts from a seeded random vector;
    for ``p != 2`` that start is first refined by the ``p = 2`` iteration.
    """
    config = replace(config or GraphSolverConfig(), p=float(p))
    p = config.p
    if f0 is None:
        f0 = default_start(g, config.seed)
        if p != 2:
            _, f0, _ = graph_second_eigenpair(g, 2.0, replace(config, p=2.0), f0)
    f = phi_mean_shift(_vector(g, f0).astype(float), p)
    up, um, lp, lm = _parts(f, p, g)
    report = GraphEigenReport(p=p, lambda2=math.nan, lambda_plus_history=[],
                              lambda_minus_history=[], rayleigh_history=[],
                              iterations=0, converged=False, f=f)
    for k in range(1, config.max_outer + 1):
        rhs = lp * phi_p(up, p) - lm * phi_p(um, p)
        rhs = _component_center(g, rhs)
        f_new, inner = solve_graph_p_poisson(g, rhs, config, f0=up - um)
        if not inner.converged and inner.residual_history[-1] > config.inner_accept:
            raise SolverError(f"graph inner solve failed at sweep {k} "
                              f"(relative residual {inner.residual_history[-1]:.3e})",
                              iterations=inner.iterations)
        f_new = phi_mean_shift(f_new, p)
        ray = rayleigh_graph(g, f_new, p)
        margin = max(lp, lm) + 1e-8 - ray
        report.rayleigh_margins.append(margin)
        if margin < 0:
            report.invariant_violations.append(
                {"iteration": k, "kind": "rayleigh_bound", "margin": margin})
        up_new, um_new, lp_new, lm_new = _parts(f_new, p, g)
        report.lambda_plus_history.append(lp_new)
        report.lambda_minus_history.append(lm_new)
        report.rayleigh_history.append(ray)
        report.inner_iterations.append(inner.iterations)
        report.iterations = k
        log.debug("graph sweep %d: lam+ %.10g lam- %.10g R_p %.10g", k, lp_new, lm_new, ray)
        done = (abs(lp_new - lp) < config.outer_tol * max(1.0, lp)
                and abs(lm_new - lm) < config.outer_tol * max(1.0, lm))
        f, up, um, lp, lm = f_new, up_new, um_new, lp_new, lm_new
        if done:
            report.converged = True
            break
    report.f = f
    report.lambda2 = rayleigh_graph(g, f, p)
    report.lambda_plus, report.lambda_minus = lp, lm
    return report.lambda2, f, report


# ---------------------------------------------------------------------------
# cuts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutMetrics:
    cut_value: float
    rcc: float
    ncc: float
    side_sizes: tuple[int, int]
    side_volumes: tuple[float, float]


def threshold_cut(f) -> np.ndarray:
    """Sorted indices of {i : f_i > 0}; zeros go to the complement."""
    f = np.asarray(f, dtype=float)
    C = np.flatnonzero(f > 0)
    if C.size == 0 or C.size == f.size:
        raise InputError("threshold cut needs a vector with both signs")
    return C


def _membership(g: Graph, C) -> np.ndarray:
    C = np.asarray(C)
    if C.dtype == bool:
        if C.shape != (g.n,):
            raise InputError("boolean cut mask has the wrong length")
        mask = C.copy()
    else:
        mask = np.zeros(g.n, dtype=bool)
        idx = C.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= g.n):
            raise InputError("cut node index out of range")
        mask[idx] = True
    if not mask.any() or mask.all():
        raise InputError("a cut needs a nonempty proper subset of the nodes")
    return mask


def cut_metrics(g: Graph, C) -> CutMetrics:
    mask = _membership(g, C)
    crossing = mask[g.edge_i] != mask[g.edge_j]
    cut = float(g.edge_w[crossing].sum())
    sizes = (int(mask.sum()), int((~mask).sum()))
    vols = (float(g.degrees[mask].sum()), float(g.degrees[~mask].sum()))
    min_vol = min(vols)
    return CutMetrics(
        cut_value=cut,
        rcc=cut / min(sizes),
        ncc=cut / min_vol if min_vol > 0 else math.inf,
        side_sizes=sizes,
        side_volumes=vols,
    )


def brute_force_rcc(g: Graph):
    """Optimal ratio Cheeger cut by enumerating all 2^(n-1) - 1 bipartitions.

    Node ``n - 1`` is kept in the complement so each bipartition is seen once.
    Returns ``(rcc_star, C_star)``; the first minimizer in enumeration order wins.
    """
    n = g.n
    if n > BRUTE_FORCE_MAX_N:
        raise InputError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    if n < 2:
        raise InputError("need at least two nodes")
    W = g.adjacency.toarray()
    best, best_mask = math.inf, None
    codes = np.arange(1, 2 ** (n - 1), dtype=np.int64)
    bits = 1 << np.arange(n - 1, dtype=np.int64)
    for chunk in np.array_split(codes, max(1, codes.size // 65536)):
        X = ((chunk[:, None] & bits) != 0).astype(float)
        X = np.hstack([X, np.zeros((X.shape[0], 1))])
        cut = np.einsum("ci,ci->c", X @ W, 1.0 - X)
        size = X.sum(axis=1)
        rcc = cut / np.minimum(size, n - size)
        k = int(np.argmin(rcc))
        if rcc[k] < best:
            best, best_mask = float(rcc[k]), X[k].astype(bool)
    return best, np.flatnonzero(best_mask)


# ---------------------------------------------------------------------------
# point sets and CSV I/O
# ---------------------------------------------------------------------------

def two_blobs(n: int = 500, seed: int = 0, gap: float = 0.04):
    """Two uniform unit squares side by side, ``gap`` apart; returns (points, labels)."""
    rng = np.random.default_rng(seed)
    n0 = n // 2
    a = rng.uniform(0.0, 1.0, size=(n0, 2))
    b = rng.uniform(0.0, 1.0, size=(n - n0, 2))
    b[:, 0] += 1.0 + gap
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n - n0, dtype=int)])
    return np.vstack([a, b]), labels


def read_points_csv(path) -> np.ndarray:
    """Rows ``x[,y[,z]]``; a non-numeric first row is treated as a header."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"points file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if k == 0:
                    continue
                raise InputError(f"{path}: non-numeric row {k + 1}: {row}")
    if not rows:
        raise InputError(f"{path}: no points")
    width = {len(r) for r in rows}
    if len(width) != 1 or not 1 <= width.pop() <= 3:
        raise InputError(f"{path}: rows must all have 1 to 3 coordinates")
    return np.array(rows)


def write_labels_csv(labels, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])


def labels_from_cut(n: int, C) -> np.ndarray:
    labels = np.zeros(n, dtype=int)
    labels[np.asarray(C, dtype=np.int64)] = 1
    return labels


def label_agreement(labels, planted) -> float:
    """Fraction of matching labels, up to swapping the two label names."""
    labels, planted = np.asarray(labels), np.asarray(planted)
    same = float(np.mean(labels == planted))
    return max(same, 1.0 - same)


__all__ = [
    "BRUTE_FORCE_MAX_N", "CutMetrics", "Graph", "GraphEigenReport", "GraphSolveReport",
    "GraphSolverConfig", "apply_p_laplacian", "brute_force_rcc", "build_epsilon_graph",
    "cut_metrics", "default_start", "graph_from_edges", "graph_second_eigenpair",
    "label_agreement", "labels_from_cut", "p_dirichlet_energy", "phi_mean_shift",
    "pinned_nodes", "rayleigh_graph", "read_points_csv", "solve_graph_p_poisson",
    "threshold_cut", "two_blobs", "write_labels_csv",
]
