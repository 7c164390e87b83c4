"""Structured P1 meshes on intervals and rectangles, and the nodal field calculus.

All integrals of |u|^p use lumped (nodal) quadrature; gradient integrals are
exact because P1 gradients are constant on each element.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFieldError, InputError


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial P1 mesh.

    ``basis_gradients[e, a]`` is the (constant) gradient of the local hat
    function of vertex ``a`` on element ``e``.
    """

    dim: int
    nodes: np.ndarray  # (N, dim)
    elements: np.ndarray  # (E, dim + 1)
    element_measure: np.ndarray  # (E,)
    basis_gradients: np.ndarray  # (E, dim + 1, dim)
    boundary_mask: np.ndarray  # (N,) bool
    lumped_mass: np.ndarray  # (N,)
    kind: str = "interval"
    bounds: tuple = ()
    resolution: tuple = ()
    _local_stiffness: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("nodes", "elements", "element_measure", "basis_gradients",
                     "boundary_mask", "lumped_mass"):
            getattr(self, name).setflags(write=False)
        # per-element |e| * grad_a . grad_b, reused by every stiffness assembly
        G = self.basis_gradients
        local = self.element_measure[:, None, None] * np.einsum("eai,ebi->eab", G, G)
        local.setflags(write=False)
        object.__setattr__(self, "_local_stiffness", local)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def volume(self) -> float:
        """|Omega| as the product of side lengths."""
        b = self.bounds
        if self.dim == 1:
            return float(b[1] - b[0])
        return float((b[1] - b[0]) * (b[3] - b[2]))

    @property
    def diameter(self) -> float:
        b = self.bounds
        if self.dim == 1:
            return float(b[1] - b[0])
        return float(np.hypot(b[1] - b[0], b[3] - b[2]))

    @property
    def local_stiffness(self) -> np.ndarray:
        return self._local_stiffness

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.asarray(values, dtype=float))

    def interpolate(self, func) -> "ScalarField":
        """Nodal interpolant of ``func(x)`` (1D) or ``func(x, y)`` (2D)."""
        coords = [self.nodes[:, k] for k in range(self.dim)]
        return self.field(np.broadcast_to(func(*coords), (self.n_nodes,)).astype(float))

    def summary(self) -> dict:
        return {"kind": self.kind, "bounds": list(self.bounds),
                "resolution": list(self.resolution)}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal coefficients of a continuous piecewise linear function."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_nodes,):
            raise InputError(
                f"field has {self.values.shape} values, mesh has {self.mesh.n_nodes} nodes")

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.mesh, np.asarray(values, dtype=float))

    def is_dirichlet_admissible(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values[self.mesh.boundary_mask]) <= atol))

    def __neg__(self):
        return self.with_values(-self.values)

    def __sub__(self, other):
        return self.with_values(self.values - _values(other))

    def __add__(self, other):
        return self.with_values(self.values + _values(other))

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__


def _values(x):
    return x.values if isinstance(x, ScalarField) else x


def build_interval_mesh(a: float, b: float, n_cells: int) -> Mesh:
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise InputError(f"interval bounds must satisfy a < b, got ({a}, {b})")
    if int(n_cells) != n_cells or n_cells < 2:
        raise InputError(f"n_cells must be an integer >= 2, got {n_cells}")
    n_cells = int(n_cells)
    x = np.linspace(a, b, n_cells + 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    h = np.diff(x)
    grads = np.empty((n_cells, 2, 1))
    grads[:, 0, 0] = -1.0 / h
    grads[:, 1, 0] = 1.0 / h
    boundary = np.zeros(n_cells + 1, dtype=bool)
    boundary[[0, -1]] = True
    return Mesh(
        dim=1,
        nodes=x[:, None],
        elements=elements,
        element_measure=h,
        basis_gradients=grads,
        boundary_mask=boundary,
        lumped_mass=_lumped_mass(elements, h, n_cells + 1, 1),
        kind="interval",
        bounds=(float(a), float(b)),
        resolution=(n_cells,),
    )


def build_rectangle_mesh(x0: float, x1: float, y0: float, y1: float,
                         nx: int, ny: int) -> Mesh:
    """Uniform grid, every cell cut along its lower-left to upper-right diagonal."""
    if not (x0 < x1 and y0 < y1):
        raise InputError(f"degenerate rectangle ({x0}, {x1}) x ({y0}, {y1})")
    for n in (nx, ny):
        if int(n) != n or n < 2:
            raise InputError(f"nx and ny must be integers >= 2, got ({nx}, {ny})")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # node index = j * (nx + 1) + i
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (j * (nx + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    elements = np.empty((2 * n00.size, 3), dtype=np.int64)
    elements[0::2] = np.column_stack([n00, n10, n11])
    elements[1::2] = np.column_stack([n00, n11, n01])

    P = nodes[elements]
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns are edges
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    if np.any(det <= 0):
        raise InputError("mesh produced a non-positively oriented triangle")
    # rows of B^{-1} are the gradients of the barycentric coordinates 1 and 2
    inv = np.empty_like(B)
    inv[:, 0, 0] = B[:, 1, 1] / det
    inv[:, 0, 1] = -B[:, 0, 1] / det
    inv[:, 1, 0] = -B[:, 1, 0] / det
    inv[:, 1, 1] = B[:, 0, 0] / det
    grads = np.empty((elements.shape[0], 3, 2))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    area = 0.5 * det

    on_x = (X == x0) | (X == x1)
    on_y = (Y == y0) | (Y == y1)
    boundary = (on_x | on_y).ravel()
    return Mesh(
        dim=2,
        nodes=nodes,
        elements=elements,
        element_measure=area,
        basis_gradients=grads,
        boundary_mask=boundary,
        lumped_mass=_lumped_mass(elements, area, nodes.shape[0], 2),
        kind="rect",
        bounds=(float(x0), float(x1), float(y0), float(y1)),
        resolution=(nx, ny),
    )


def _lumped_mass(elements, measure, n_nodes, dim):
    share = np.repeat(measure / (dim + 1), dim + 1)
    return np.bincount(elements.ravel(), weights=share, minlength=n_nodes)


# ---------------------------------------------------------------------------
# field calculus
# ---------------------------------------------------------------------------

def gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-element constant gradient, shape (E, dim)."""
    return np.einsum("ea,eai->ei", values[mesh.elements], mesh.basis_gradients)


def grad_norms(u: ScalarField) -> np.ndarray:
    g = gradients(u.mesh, u.values)
    return np.sqrt(np.einsum("ei,ei->e", g, g))


def grad_energy(u: ScalarField, p: float) -> float:
    """Integral of |grad u|^p, exact for P1 fields."""
    return float(np.dot(u.mesh.element_measure, grad_norms(u) ** p))


def lumped_integral(mesh: Mesh, nodal: np.ndarray) -> float:
    return float(np.dot(mesh.lumped_mass, nodal))


def norm_p(u: ScalarField, p: float) -> float:
    if p <= 1:
        raise InputError(f"p must exceed 1, got {p}")
    return lumped_integral(u.mesh, np.abs(u.values) ** p) ** (1.0 / p)


def inner(u: ScalarField, v: ScalarField) -> float:
    """Lumped L2 inner product."""
    return lumped_integral(u.mesh, u.values * v.values)


def split_parts(u: ScalarField) -> tuple[ScalarField, ScalarField]:
    v = u.values
    return u.with_values(np.maximum(v, 0.0)), u.with_values(np.maximum(-v, 0.0))


def normalize_p(u: ScalarField, p: float) -> ScalarField:
    nrm = norm_p(u, p)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise DegenerateFieldError("cannot normalize a zero field")
    return u.with_values(u.values / nrm)


def write_field_csv(u: ScalarField, path) -> None:
    """One node per row in node-index order, 17 significant digits."""
    mesh = u.mesh
    header = ["x", "u"] if mesh.dim == 1 else ["x", "y", "u"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for coords, val in zip(mesh.nodes, u.values):
            w.writerow([f"{c:.17g}" for c in coords] + [f"{val:.17g}"])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_field_csv`; returns (coords, values)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def phi_p(t, p: float):
    """|t|^(p-1) sign(t), elementwise; phi_p(0) = 0."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def p_mean(u: ScalarField, p: float) -> float:
    """(1/|Omega|) * integral of |u|^(p-2) u, lumped."""
    m = u.mesh.lumped_mass
    return float(np.dot(m, phi_p(u.values, p)) / m.sum())


def p_mean_shift(u: ScalarField, p: float) -> ScalarField:
    """Return ``u - c`` with ``p_mean(u - c) = 0``.

    ``c -> p_mean(u - c)`` is strictly decreasing, so ``c`` is bracketed by
    ``[min u, max u]`` and found by bisection (closed form for p = 2).
    """
    return u.with_values(zero_phi_mean(u.values, u.mesh.lumped_mass, p))


def phi_scale(v: np.ndarray, mass: np.ndarray, p: float) -> float:
    """max(1, mass-weighted mean of |phi_p(v - median)|): the size of the p-mean terms."""
    w = np.abs(v - np.median(v)) ** (p - 1.0)
    return max(1.0, float(np.dot(mass, w)) / float(mass.sum()))


def zero_phi_mean(v: np.ndarray, mass: np.ndarray, p: float) -> np.ndarray:
    """Shift ``v`` by a constant so that ``sum_i mass_i phi_p(v_i - c) = 0``.

    For p near 1, phi_p is nearly a jump at 0, so if a value sits within
    rounding of the root the bisection in ``c`` cannot resolve it.  That value
    is then set directly from the scalar equation it must satisfy.
    """
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return np.zeros_like(v)
    vol = float(mass.sum())
    if p == 2:
        return v - float(np.dot(mass, v)) / vol
    target = 1e-12 * phi_scale(v, mass, p)

    def mean_at(c):
        return float(np.dot(mass, phi_p(v - c, p))) / vol

    c = 0.5 * (lo + hi)
    for _ in range(200):
        val = mean_at(c)
        if abs(val) <= target:
            break
        if val > 0:
            lo = c
        else:
            hi = c
        mid = 0.5 * (lo + hi)
        if mid == c or mid in (lo, hi):
            break
        c = mid
    w = v - c
    before = abs(float(np.dot(mass, phi_p(w, p)))) / vol
    if before > target:
        k = int(np.argmin(np.abs(w)))
        rest = float(np.dot(mass, phi_p(w, p))) - mass[k] * float(phi_p(w[k], p))
        t = -np.sign(rest) * (abs(rest) / mass[k]) ** (1.0 / (p - 1.0))
        if abs(t - w[k]) <= 1e-13 * max(1.0, abs(c), float(np.max(np.abs(v)))):
            trial = w.copy()
            trial[k] = t
            if abs(float(np.dot(mass, phi_p(trial, p)))) / vol < before:
                w = trial
    return w
