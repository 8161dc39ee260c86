"""Discrete Riemannian geometry on flat periodic grids.

Fields are plain numpy arrays shaped like the grid (scalars), ``(m, *shape)``
(vectors) or ``(ncomp, *shape)`` (symmetric tensors, ``ncomp`` = 1 in 1D and
3 in 2D with component order ``(T11, T12, T22)``). Metrics are wrapped in
:class:`MetricField`, which validates positive definiteness once and caches
the derived quantities.

First derivatives are centered differences. Divergence-form operators are
the exact variational derivatives of a face-based discrete energy, so they
telescope: ``integrate(p_laplacian(f, g), g)`` vanishes to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels


class GridMismatchError(ValueError):
    """Fields or metrics defined on incompatible grids."""


class DegenerateMetricError(ValueError):
    """Metric fails to be positive definite (or finite) somewhere."""


class ParameterError(ValueError):
    """Invalid numerical parameter."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the m-torus, m in {1, 2}."""

    dim: int
    n: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ParameterError(f"need at least 8 points per axis, got {self.n}")
        lengths = tuple(float(x) for x in self.lengths)
        if len(lengths) != self.dim or any(not (x > 0) for x in lengths):
            raise ParameterError(f"need {self.dim} positive axis lengths, got {self.lengths}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def circle(cls, n: int, length: float = 2 * np.pi) -> "Grid":
        return cls(1, n, (length,))

    @classmethod
    def torus(cls, n: int, l1: float = 2 * np.pi, l2: float | None = None) -> "Grid":
        return cls(2, n, (l1, l1 if l2 is None else l2))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(L / self.n for L in self.lengths)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array per axis, broadcast to the grid shape."""
        axes = [np.arange(self.n) * hi for hi in self.h]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def check(self, f: np.ndarray, what: str = "field", lead: int = 0) -> None:
        if f.shape[lead:] != self.shape:
            raise GridMismatchError(f"{what} has shape {f.shape}, grid expects {self.shape}")


def _ncomp(dim: int) -> int:
    return 1 if dim == 1 else 3


@dataclass
class FaceMetric:
    gi: np.ndarray
    sg: np.ndarray
    g: np.ndarray


class MetricField:
    """Pointwise symmetric positive-definite metric on a grid.

    ``comps`` has shape ``(1, n)`` in 1D and ``(3, n, n)`` holding
    ``(g11, g12, g22)`` in 2D. Instances are immutable; the array is copied
    and frozen on construction.
    """

    def __init__(self, grid: Grid, comps: np.ndarray):
        comps = np.array(comps, dtype=float)
        if comps.shape != (_ncomp(grid.dim),) + grid.shape:
            raise GridMismatchError(
                f"metric components have shape {comps.shape}, expected "
                f"{(_ncomp(grid.dim),) + grid.shape}"
            )
        if not np.all(np.isfinite(comps)):
            raise DegenerateMetricError("metric has non-finite components")
        det = _det(comps)
        bad = (comps[0] <= 0) | (det <= 0)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DegenerateMetricError(
                f"metric not positive definite at node {idx}: "
                f"g11={comps[0][idx]:.3e}, det={det[idx]:.3e}"
            )
        comps.setflags(write=False)
        self.grid = grid
        self.comps = comps

    @classmethod
    def flat(cls, grid: Grid) -> "MetricField":
        return cls.constant(grid, (1.0,) if grid.dim == 1 else (1.0, 0.0, 1.0))

    @classmethod
    def constant(cls, grid: Grid, values) -> "MetricField":
        values = np.asarray(values, dtype=float).reshape((-1,) + (1,) * grid.dim)
        return cls(grid, np.broadcast_to(values, (_ncomp(grid.dim),) + grid.shape))

    @classmethod
    def conformal(cls, grid: Grid, w: np.ndarray) -> "MetricField":
        """The metric ``exp(2w)`` times the flat one."""
        grid.check(w, "conformal factor")
        e = np.exp(2.0 * w)
        if grid.dim == 1:
            return cls(grid, e[None])
        return cls(grid, np.stack([e, np.zeros_like(e), e]))

    def scaled(self, c: float) -> "MetricField":
        return MetricField(self.grid, c * self.comps)

    def __add__(self, other: np.ndarray) -> "MetricField":
        return MetricField(self.grid, self.comps + other)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def det(self) -> np.ndarray:
        return _det(self.comps)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)

    @cached_property
    def inv(self) -> np.ndarray:
        return _inv(self.comps, self.det)

    @cached_property
    def mass(self) -> np.ndarray:
        """Nodal quadrature weights ``sqrt(det g) * prod(h)``."""
        return self.sqrt_det * self.grid.cell_volume

    @cached_property
    def faces(self) -> FaceMetric:
        """Metric averaged onto the faces used by divergence-form operators."""
        if self.dim == 1:
            g = face_average(self.comps, self.grid)
            return FaceMetric(np.ascontiguousarray(1.0 / g), np.ascontiguousarray(np.sqrt(g[0])), g)
        g = face_average(self.comps, self.grid)
        det = _det(g.reshape(6, *self.grid.shape)).reshape(2, *self.grid.shape)
        gi = np.stack([_inv(g[d], det[d]) for d in range(2)])
        return FaceMetric(np.ascontiguousarray(gi), np.ascontiguousarray(np.sqrt(det)), g)


def _det(c: np.ndarray) -> np.ndarray:
    if c.shape[0] == 1:
        return c[0]
    if c.shape[0] == 6:  # stacked face families
        return np.stack([c[0] * c[2] - c[1] ** 2, c[3] * c[5] - c[4] ** 2])
    return c[0] * c[2] - c[1] ** 2


def _inv(c: np.ndarray, det: np.ndarray) -> np.ndarray:
    if c.shape[0] == 1:
        return 1.0 / c
    return np.stack([c[2] / det, -c[1] / det, c[0] / det])


def face_average(t: np.ndarray, grid: Grid) -> np.ndarray:
    """Arithmetic mean of a nodal tensor onto faces.

    1D: shape ``(ncomp, n)`` on faces ``i+1/2``. 2D: shape
    ``(2, ncomp, n, n)``, index 0 for x-faces ``(i+1/2, j)``, 1 for y-faces.
    """
    lead = t.ndim - grid.dim
    if grid.dim == 1:
        return 0.5 * (t + np.roll(t, -1, lead))
    return np.stack([0.5 * (t + np.roll(t, -1, lead)), 0.5 * (t + np.roll(t, -1, lead + 1))])


@dataclass(frozen=True)
class CoupledState:
    """One snapshot ``(g, phi, t)`` of the coupled metric / map flow."""

    g: MetricField
    phi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.g.grid.check(self.phi, "phi")
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("phi has non-finite values")
        if self.t < 0:
            raise ValueError(f"negative time {self.t}")

    @property
    def grid(self) -> Grid:
        return self.g.grid


# --------------------------------------------------------------------------
# derivatives


def partials(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered first differences, shape ``(m, *shape)``."""
    grid.check(f, lead=f.ndim - grid.dim)
    lead = f.ndim - grid.dim
    return np.stack([
        (np.roll(f, -1, lead + d) - np.roll(f, 1, lead + d)) / (2.0 * grid.h[d])
        for d in range(grid.dim)
    ])


def _second(f: np.ndarray, grid: Grid, d: int) -> np.ndarray:
    return (np.roll(f, -1, d) - 2.0 * f + np.roll(f, 1, d)) / grid.h[d] ** 2


def _mixed(f: np.ndarray, grid: Grid) -> np.ndarray:
    fp = np.roll(f, -1, 0)
    fm = np.roll(f, 1, 0)
    return (np.roll(fp, -1, 1) - np.roll(fp, 1, 1) - np.roll(fm, -1, 1) + np.roll(fm, 1, 1)) / (
        4.0 * grid.h[0] * grid.h[1]
    )


def _same_grid(f: np.ndarray, g: MetricField, what="field") -> None:
    g.grid.check(f, what)


def raise_index(df: np.ndarray, g: MetricField) -> np.ndarray:
    if g.dim == 1:
        return g.inv * df
    i11, i12, i22 = g.inv
    return np.stack([i11 * df[0] + i12 * df[1], i12 * df[0] + i22 * df[1]])


def quad_form(t: np.ndarray, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``t_ij a^i b^j`` for symmetric tensor components ``t``."""
    b = a if b is None else b
    if t.shape[0] == 1:
        return t[0] * a[0] * b[0]
    return t[0] * a[0] * b[0] + t[1] * (a[0] * b[1] + a[1] * b[0]) + t[2] * a[1] * b[1]


def outer(df: np.ndarray) -> np.ndarray:
    """Components of ``df (x) df`` for a covector field ``df``."""
    if df.shape[0] == 1:
        return df * df
    return np.stack([df[0] ** 2, df[0] * df[1], df[1] ** 2])


def trace(t: np.ndarray, g: MetricField) -> np.ndarray:
    """``g^ij t_ij``."""
    gi = g.inv
    if g.dim == 1:
        return gi[0] * t[0]
    return gi[0] * t[0] + 2.0 * gi[1] * t[1] + gi[2] * t[2]


def gradient(f: np.ndarray, g: MetricField) -> np.ndarray:
    """Contravariant metric gradient ``g^ij d_j f`` (centered differences)."""
    _same_grid(f, g)
    return raise_index(partials(f, g.grid), g)


def grad_norm_sq(f: np.ndarray, g: MetricField) -> np.ndarray:
    _same_grid(f, g)
    return trace(outer(partials(f, g.grid)), g)


def p_laplacian(f: np.ndarray, g: MetricField, p: float, delta: float = 0.0) -> np.ndarray:
    """Regularized p-Laplacian ``div((|grad f|^2 + delta^2)^((p-2)/2) grad f)``."""
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if delta < 0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    _same_grid(f, g)
    _, grad = dirichlet_energy(f, g, p, delta)
    return -grad / g.mass


def laplace_beltrami(f: np.ndarray, g: MetricField) -> np.ndarray:
    return p_laplacian(f, g, 2.0, 0.0)


def dirichlet_energy(f: np.ndarray, g: MetricField, p: float, delta: float = 0.0):
    """Discrete ``(1/p) * int |grad f|^p dmu`` and its gradient w.r.t. nodal values."""
    fm = g.faces
    f = np.ascontiguousarray(f, dtype=float)
    if g.dim == 1:
        return kernels.energy_grad_1d(f, fm.gi, fm.sg, g.grid.h[0], float(p), float(delta))
    return kernels.energy_grad_2d(f, fm.gi, fm.sg, *g.grid.h, float(p), float(delta))


def face_gradients(f: np.ndarray, grid: Grid):
    """Covariant gradients on faces: ``(m, n)`` in 1D, ``(2, 2, n, n)`` in 2D."""
    if grid.dim == 1:
        return np.stack(kernels.face_gradients_1d(f, grid.h[0]))
    return np.array(kernels.face_gradients_2d(f, *grid.h))


def face_weights(grid: Grid) -> float:
    return grid.h[0] if grid.dim == 1 else 0.5 * grid.h[0] * grid.h[1]


# --------------------------------------------------------------------------
# curvature


def gauss_curvature(g: MetricField) -> np.ndarray:
    """Gaussian curvature of a 2D metric via the Brioschi formula."""
    if g.dim != 2:
        raise ParameterError("Gaussian curvature needs a 2D metric")
    E, F, G = g.comps
    gr = g.grid
    Eu, Ev = partials(E, gr)
    Fu, Fv = partials(F, gr)
    Gu, Gv = partials(G, gr)
    Evv = _second(E, gr, 1)
    Guu = _second(G, gr, 0)
    Fuv = _mixed(F, gr)

    a11 = -0.5 * Evv + Fuv - 0.5 * Guu
    a12, a13 = 0.5 * Eu, Fu - 0.5 * Ev
    a21, a31 = Fv - 0.5 * Gu, 0.5 * Gv
    det1 = (a11 * (E * G - F * F) - a12 * (a21 * G - F * a31) + a13 * (a21 * F - E * a31))
    b12, b13 = 0.5 * Ev, 0.5 * Gu
    det2 = -b12 * (b12 * G - F * b13) + b13 * (b12 * F - E * b13)
    return (det1 - det2) / g.det**2


def ricci_and_scalar(g: MetricField):
    """Ricci tensor components and scalar curvature.

    On a surface ``Ric = (R/2) g`` with ``R = 2K``; a curve is Ricci flat.
    """
    if g.dim == 1:
        return np.zeros_like(g.comps), np.zeros(g.grid.shape)
    K = gauss_curvature(g)
    return K * g.comps, 2.0 * K


def conformal_scalar_curvature(w: np.ndarray, grid: Grid) -> np.ndarray:
    """``R = -2 exp(-2w) lap_flat(w)`` for the metric ``exp(2w)`` times flat."""
    if grid.dim != 2:
        raise ParameterError("conformal curvature path is 2D only")
    lap = _second(w, grid, 0) + _second(w, grid, 1)
    return -2.0 * np.exp(-2.0 * w) * lap


def coupling_tensors(state: CoupledState, kappa: float):
    """``(Ric - kappa dphi(x)dphi, R - kappa |grad phi|^2)``."""
    if kappa < 0:
        raise ParameterError(f"kappa must be nonnegative, got {kappa}")
    ric, R = ricci_and_scalar(state.g)
    if kappa == 0:
        return ric, R
    dd = outer(partials(state.phi, state.grid))
    return ric - kappa * dd, R - kappa * trace(dd, state.g)


def tension_field(state: CoupledState) -> np.ndarray:
    """Tension field of a real-valued map: its Laplace-Beltrami."""
    return laplace_beltrami(state.phi, state.g)


# --------------------------------------------------------------------------
# integrals and pointwise algebra


def integrate(f, g: MetricField) -> float:
    f = np.broadcast_to(np.asarray(f, dtype=float), g.grid.shape)
    return float(np.sum(f * g.mass))


def volume(g: MetricField) -> float:
    return float(np.sum(g.mass))


def generalized_eigenvalues(t: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise roots of ``det(t - mu g) = 0``, ascending, shape ``(m, *shape)``.

    Both arguments are symmetric tensor component arrays on the same nodes
    (``g`` positive definite).
    """
    if t.shape[0] == 1:
        return t / g
    t11, t12, t22 = t
    g11, g12, g22 = g
    det = g11 * g22 - g12**2
    # M = g^-1 t; the traceless part keeps proportional pencils exact
    m11 = (g22 * t11 - g12 * t12) / det
    m12 = (g22 * t12 - g12 * t22) / det
    m21 = (g11 * t12 - g12 * t11) / det
    m22 = (g11 * t22 - g12 * t12) / det
    mean = 0.5 * (m11 + m22)
    disc = np.sqrt(np.maximum(0.25 * (m11 - m22) ** 2 + m12 * m21, 0.0))
    return np.stack([mean - disc, mean + disc])


def min_generalized_eigenvalue(t: np.ndarray, g: MetricField):
    """Smallest ``mu`` with ``t - mu g`` singular, and the node where it occurs."""
    lo = generalized_eigenvalues(t, g.comps)[0]
    idx = np.unravel_index(int(np.argmin(lo)), lo.shape)
    return float(lo[idx]), tuple(int(i) for i in idx)
