"""Velocity and space grids, quadrature, exponential weights and symmetry maps.

Every other module consumes a :class:`VelocityGrid` only through its
``nodes`` and ``weights`` (plus the tensor axes when interpolation is
needed), so the quadrature scheme can be swapped freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def axis_rule(radius: float, n: int, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    """One-dimensional rule on [-radius, radius].

    ``uniform`` is the midpoint rule (exact for degree 1, spectrally accurate
    for Gaussians), ``gauss`` is Gauss-Legendre (exact for degree 2n-1).
    """
    if scheme == "uniform":
        h = 2.0 * radius / n
        x = -radius + h * (np.arange(n) + 0.5)
        w = np.full(n, h)
    elif scheme == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        x, w = radius * x, radius * w
    else:
        raise ValueError(f"unknown velocity scheme {scheme!r} (expected 'uniform' or 'gauss')")
    return x, w


@dataclass(frozen=True)
class VelocityGrid:
    """Tensor-product velocity grid with quadrature weights.

    Nodes are stored in C order over the three axes, so node
    ``(i1, i2, i3)`` has flat index ``(i1 * n2 + i2) * n3 + i3``.
    ``perm_R`` realizes the reflection (xi1, xi2, xi3) -> (xi1, -xi2, -xi3).
    """

    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    axis_weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    radius: float
    n_axis: int
    scheme: str
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    perm_R: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        a1, a2, a3 = (np.asarray(a, float) for a in self.axes)
        w1, w2, w3 = (np.asarray(w, float) for w in self.axis_weights)
        for a, w in zip((a1, a2, a3), (w1, w2, w3)):
            if a.shape != w.shape or a.ndim != 1:
                raise ValueError("axis nodes and weights must be matching 1-D arrays")
            if np.any(w <= 0):
                raise ValueError("quadrature weights must be positive")
        for a in (a2, a3):
            if not np.allclose(a, -a[::-1], atol=1e-13):
                raise ValueError("transverse axes must be symmetric about 0 for the R map")
        g1, g2, g3 = np.meshgrid(a1, a2, a3, indexing="ij")
        nodes = np.stack([g1.ravel(), g2.ravel(), g3.ravel()], axis=1)
        weights = (w1[:, None, None] * w2[None, :, None] * w3[None, None, :]).ravel()
        n1, n2, n3 = len(a1), len(a2), len(a3)
        i1, i2, i3 = np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij")
        perm = ((i1 * n2 + (n2 - 1 - i2)) * n3 + (n3 - 1 - i3)).ravel()
        object.__setattr__(self, "axes", tuple(_frozen(a) for a in (a1, a2, a3)))
        object.__setattr__(self, "axis_weights", tuple(_frozen(w) for w in (w1, w2, w3)))
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "perm_R", _frozen(perm))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(len(a) for a in self.axes)  # type: ignore[return-value]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def speed(self) -> np.ndarray:
        return np.sqrt(np.sum(self.nodes**2, axis=1))

    @property
    def spacing1(self) -> float:
        """Representative node spacing along xi1 (mean gap)."""
        a = self.axes[0]
        return float(np.mean(np.diff(a))) if len(a) > 1 else float(2 * self.radius)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Quadrature over the last axis of ``f``."""
        return np.asarray(f) @ self.weights

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return (np.asarray(f) * np.asarray(g)) @ self.weights

    def check_no_grazing(self, u: float, tol: float = 1e-12) -> None:
        b = self.axes[0] + u
        if np.any(np.abs(b) < tol):
            raise ValueError(
                f"a velocity node sits on the grazing set xi1 + u = 0 (u={u}); "
                "choose an even per-axis count or a different drift"
            )

    def describe(self) -> dict:
        return {"radius": self.radius, "n": self.n_axis, "scheme": self.scheme, "shape": list(self.shape)}


def build_velocity_grid(radius: float, n: int, scheme: str = "uniform") -> VelocityGrid:
    """Tensor grid on [-V, V]^3 with ``n`` nodes per axis.

    Odd ``n`` is rejected: with a symmetric rule it would put a node on
    xi1 = 0, i.e. on (or next to) the grazing set xi1 + u = 0 for small u.
    """
    if radius <= 0:
        raise ValueError("velocity radius must be positive")
    if n < 4:
        raise ValueError("need at least 4 nodes per axis")
    if n % 2:
        raise ValueError(
            f"odd per-axis count n={n} places a node at xi1 = 0, on the grazing set "
            "xi1 + u = 0 as u -> 0; use an even count"
        )
    x, w = axis_rule(radius, n, scheme)
    return VelocityGrid(axes=(x, x, x), axis_weights=(w, w, w), radius=float(radius), n_axis=int(n), scheme=scheme)


def grid_from_axes(
    axis1: tuple[np.ndarray, np.ndarray],
    axis2: tuple[np.ndarray, np.ndarray],
    axis3: tuple[np.ndarray, np.ndarray] | None = None,
    scheme: str = "custom",
) -> VelocityGrid:
    """Tensor grid from explicit (nodes, weights) pairs per axis."""
    axis3 = axis2 if axis3 is None else axis3
    radius = float(max(np.max(np.abs(a[0])) for a in (axis1, axis2, axis3)))
    return VelocityGrid(
        axes=(axis1[0], axis2[0], axis3[0]),
        axis_weights=(axis1[1], axis2[1], axis3[1]),
        radius=radius,
        n_axis=len(axis1[0]),
        scheme=scheme,
    )


@dataclass(frozen=True)
class SpatialGrid:
    """Nodes 0 = x_0 < ... < x_J = L, geometrically graded toward x = 0."""

    nodes: np.ndarray
    ratio: float
    min_cell: float

    def __post_init__(self) -> None:
        x = np.asarray(self.nodes, float)
        if x[0] != 0.0 or np.any(np.diff(x) <= 0):
            raise ValueError("spatial nodes must start at 0 and increase strictly")
        object.__setattr__(self, "nodes", _frozen(x))

    @property
    def L(self) -> float:
        return float(self.nodes[-1])

    @property
    def cells(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def trapezoid_weights(self) -> np.ndarray:
        h = self.widths
        w = np.zeros(len(self.nodes))
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    def refined(self) -> "SpatialGrid":
        """Bisect every cell."""
        x = self.nodes
        mid = 0.5 * (x[:-1] + x[1:])
        y = np.empty(2 * len(x) - 1)
        y[0::2] = x
        y[1::2] = mid
        return SpatialGrid(y, self.ratio, self.min_cell / 2)

    def index_near(self, x: float) -> int:
        return int(np.argmin(np.abs(self.nodes - x)))


def build_spatial_grid(L: float, cells: int, ratio: float = 1.15, min_cell: float = 1e-4) -> SpatialGrid:
    """Geometric cells from ``min_cell`` growing by ``ratio``, then uniform.

    The geometric run is as long as possible while the uniform remainder
    keeps cell sizes non-decreasing.
    """
    if L <= 0 or cells < 2:
        raise ValueError("need L > 0 and at least two cells")
    if ratio < 1.0 or min_cell <= 0:
        raise ValueError("grading ratio must be >= 1 and min_cell positive")
    if min_cell * cells >= L:
        x = np.linspace(0.0, L, cells + 1)
        return SpatialGrid(x, 1.0, L / cells)
    best = None
    for k in range(cells + 1):
        geo = min_cell * (ratio**np.arange(k))
        used = geo.sum()
        rest = cells - k
        if used > L:
            break
        if rest == 0:
            if np.isclose(used, L, rtol=1e-9):
                best = (geo, np.zeros(0))
            break
        uni = (L - used) / rest
        last = geo[-1] if k else 0.0
        if uni >= last:
            best = (geo, np.full(rest, uni))
    if best is None:
        raise ValueError(
            f"cannot reach L={L} with {cells} cells at ratio {ratio} from {min_cell}; "
            "raise space.n or space.grade"
        )
    h = np.concatenate(best)
    x = np.concatenate([[0.0], np.cumsum(h)])
    x[-1] = L
    return SpatialGrid(x, ratio, min_cell)


@dataclass(frozen=True)
class WeightParams:
    theta: float = 0.1
    theta_tilde: float = 0.0125

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta < 0.25:
            raise ValueError(f"theta={self.theta} must satisfy 0 <= theta < 1/4")
        if not 0.0 <= self.theta_tilde <= self.theta / 8 + 1e-15:
            raise ValueError(f"theta_tilde={self.theta_tilde} must satisfy 0 <= theta_tilde <= theta/8")


def maxwellian(rho: float, u: float, T: float, v: np.ndarray) -> np.ndarray:
    """M_{rho,u,T}(v) = rho (2 pi T)^{-3/2} exp(-|v - (u,0,0)|^2 / (2T))."""
    if rho <= 0 or T <= 0:
        raise ValueError("density and temperature must be positive")
    v = np.asarray(v, float)
    s = (v[..., 0] - u) ** 2 + v[..., 1] ** 2 + v[..., 2] ** 2
    return rho * (TWO_PI * T) ** -1.5 * np.exp(-s / (2.0 * T))


def sqrt_maxwellian(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, float)
    return TWO_PI**-0.75 * np.exp(-np.sum(v**2, axis=-1) / 4.0)


def w_weight(xi: np.ndarray, theta: float) -> np.ndarray:
    """w(xi) = exp(theta |xi|^2) for 0 <= theta < 1/4."""
    if not 0.0 <= theta < 0.25:
        raise ValueError(f"theta={theta} outside [0, 1/4); the weighted kernel bound fails there")
    xi = np.asarray(xi, float)
    return np.exp(theta * np.sum(xi**2, axis=-1))


def symmetrize_R(grid: VelocityGrid, f: np.ndarray) -> np.ndarray:
    """Average ``f`` with its reflection under R along the last axis."""
    f = np.asarray(f)
    return 0.5 * (f + f[..., grid.perm_R])


class Symmetry:
    """Orbit decomposition of the velocity nodes under a permutation group.

    ``kind`` is ``"none"``, ``"R"`` (the reflection only) or ``"axial"``
    (the eight symmetries of the square acting on (xi2, xi3), which contain
    R). Invariant fields are represented by their values at one
    representative per orbit.
    """

    def __init__(self, grid: VelocityGrid, kind: str = "R"):
        self.grid = grid
        self.kind = kind
        n = grid.size
        perms = [np.arange(n)]
        n1, n2, n3 = grid.shape
        i1, i2, i3 = np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij")
        flat = lambda a, b, c: ((a * n2 + b) * n3 + c).ravel()  # noqa: E731
        if kind == "R":
            perms.append(grid.perm_R)
        elif kind == "axial":
            if n2 != n3 or not np.allclose(grid.axes[1], grid.axes[2]):
                raise ValueError("axial symmetry needs identical transverse axes")
            r2, r3 = n2 - 1 - i2, n3 - 1 - i3
            for b, c in [(i2, r3), (r2, i3), (r2, r3), (i3, i2), (r3, i2), (i3, r2), (r3, r2)]:
                perms.append(flat(i1, b, c))
        elif kind != "none":
            raise ValueError(f"unknown symmetry {kind!r}")
        images = np.stack(perms)
        canon = images.min(axis=0)
        reps, orbit_of = np.unique(canon, return_inverse=True)
        self.reps = reps
        self.orbit_of = orbit_of
        self.m = len(reps)
        self.sizes = np.bincount(orbit_of, minlength=self.m)
        self.E = sp.csr_matrix((np.ones(n), (np.arange(n), orbit_of)), shape=(n, self.m))
        self.weights = np.bincount(orbit_of, weights=grid.weights, minlength=self.m)
        self.perms = images

    def expand(self, c: np.ndarray) -> np.ndarray:
        """Reduced values (..., m) -> full field (..., n)."""
        return np.asarray(c)[..., self.orbit_of]

    def restrict(self, f: np.ndarray) -> np.ndarray:
        """Orbit average (projection onto invariant fields), reduced form."""
        f = np.asarray(f)
        s = f @ self.E
        return s / self.sizes

    def project(self, f: np.ndarray) -> np.ndarray:
        return self.expand(self.restrict(f))

    def reduce_rows(self, rows: np.ndarray) -> np.ndarray:
        """Matrix rows at the representatives (m, n) -> reduced (m, m)."""
        return np.asarray((self.E.T @ np.asarray(rows).T).T)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return (np.asarray(f) * np.asarray(g)) @ self.weights

    def defect(self, f: np.ndarray) -> float:
        f = np.asarray(f)
        return float(np.max(np.abs(f[..., self.perms] - f[..., None, :])))


def nodes_of(grid: VelocityGrid, idx: Sequence[int] | np.ndarray) -> np.ndarray:
    return grid.nodes[np.asarray(idx)]
