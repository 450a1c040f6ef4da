"""Box domains, uniform grids, sampled functions and their quadratures."""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import mpmath
import numpy as np
from scipy import integrate

from . import _sine
from .errors import (
    DivergentWeightError,
    InvalidExponentError,
    InvalidOrderError,
    PreconditionError,
    UnsupportedOrderError,
)

SUPPORT_TOL = 1e-14


@dataclass(frozen=True)
class BoxDomain:
    """The box prod_a (-h_a, h_a), centred at the origin."""

    n: int
    half_width: tuple

    def __init__(self, n: int, half_width: Union[float, Sequence[float]] = 1.0):
        if n not in (1, 2, 3):
            raise PreconditionError(f"dimension must be 1, 2 or 3, got {n}")
        if np.ndim(half_width) == 0:
            hw = (float(half_width),) * n
        else:
            hw = tuple(float(h) for h in half_width)
        if len(hw) != n:
            raise PreconditionError("need one half width per axis")
        if any(not np.isfinite(h) or h <= 0 for h in hw):
            raise PreconditionError(f"half widths must be positive, got {hw}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "half_width", hw)

    @property
    def inradius(self) -> float:
        return min(self.half_width)

    @property
    def diameter(self) -> float:
        return 2.0 * float(np.sqrt(np.sum(np.square(self.half_width))))


@dataclass(frozen=True)
class UniformGrid:
    """Tensor grid with nodes x_i = -h + i*dx, i = 0..N-1, dx = 2h/N."""

    domain: BoxDomain
    points_per_axis: tuple

    def __init__(self, domain: BoxDomain, points_per_axis: Union[int, Sequence[int]]):
        if np.ndim(points_per_axis) == 0:
            pts = (int(points_per_axis),) * domain.n
        else:
            pts = tuple(int(p) for p in points_per_axis)
        if len(pts) != domain.n:
            raise PreconditionError("need one point count per axis")
        if any(p < 8 for p in pts):
            raise PreconditionError(f"points_per_axis must be >= 8, got {pts}")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "points_per_axis", pts)

    @classmethod
    def cube(cls, n: int, half_width: float, points: int) -> "UniformGrid":
        return cls(BoxDomain(n, half_width), points)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def shape(self) -> tuple:
        return self.points_per_axis

    @property
    def spacing(self) -> tuple:
        return tuple(2.0 * h / p for h, p in zip(self.domain.half_width, self.points_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, a: int) -> np.ndarray:
        h = self.domain.half_width[a]
        return -h + self.spacing[a] * np.arange(self.points_per_axis[a])

    def axes(self) -> list:
        return [self.axis(a) for a in range(self.n)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(X * X for X in self.mesh()))


@dataclass(frozen=True)
class GridFunction:
    grid: UniformGrid
    values: np.ndarray = field(repr=False)
    support_radius: Optional[float] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise PreconditionError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise PreconditionError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        r = self.support_radius
        if r is not None:
            if r < 0:
                raise PreconditionError("support radius must be nonnegative")
            outside = self.grid.radius() >= r
            if np.any(np.abs(vals[outside]) > SUPPORT_TOL):
                raise PreconditionError(f"values do not vanish outside radius {r}")

    def __mul__(self, alpha: float) -> "GridFunction":
        return GridFunction(self.grid, alpha * self.values, self.support_radius)

    __rmul__ = __mul__

    def with_values(self, values: np.ndarray, support_radius=None) -> "GridFunction":
        return GridFunction(self.grid, values, support_radius)


@dataclass(frozen=True)
class BubbleParams:
    """Cut-off, rescaled Sobolev extremal u_eps(x) = cut(|x|) (eps^2 + |x|^2)^((2m-n)/2)."""

    n: int
    m: float
    eps: float
    delta: float

    def __post_init__(self):
        if not 0 < self.m < self.n / 2:
            raise InvalidOrderError(f"bubble needs 0 < m < n/2, got m={self.m}, n={self.n}")
        if self.eps <= 0 or self.delta <= 0:
            raise PreconditionError("eps and delta must be positive")

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.n, self.m)


def critical_exponent(n: int, m: float) -> float:
    """2*_m = 2n / (n - 2m)."""
    if not 0 <= m < n / 2:
        raise InvalidOrderError(f"critical exponent needs 0 <= m < n/2, got m={m}")
    return 2.0 * n / (n - 2.0 * m)


def cutoff(r: np.ndarray, delta: float) -> np.ndarray:
    """Radial C^2 cutoff: 1 on r <= delta, 0 on r >= 2 delta, quintic smoothstep between."""
    t = np.clip((np.asarray(r, dtype=float) - delta) / delta, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def make_bubble(p: BubbleParams, g: UniformGrid) -> GridFunction:
    if g.n != p.n:
        raise PreconditionError("bubble dimension does not match grid")
    if not 2.0 * p.delta < g.domain.inradius:
        raise PreconditionError(
            f"domain inradius {g.domain.inradius} does not contain the ball of radius {2 * p.delta}"
        )
    r = g.radius()
    vals = cutoff(r, p.delta) * (p.eps**2 + r * r) ** ((2.0 * p.m - p.n) / 2.0)
    vals[r >= 2.0 * p.delta] = 0.0
    return GridFunction(g, vals, support_radius=2.0 * p.delta)


def smooth_bump(g: UniformGrid, radius: float, amplitude: float = 1.0, center=None) -> GridFunction:
    """C-infinity bump amplitude * exp(1 - 1/(1 - |x-c|^2/radius^2)) on |x - c| < radius."""
    X = g.mesh()
    c = np.zeros(g.n) if center is None else np.asarray(center, dtype=float)
    r2 = sum((Xa - ca) ** 2 for Xa, ca in zip(X, c)) / radius**2
    vals = np.zeros(g.shape)
    inside = r2 < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    supp = radius + float(np.linalg.norm(c))
    if supp >= g.domain.inradius:
        raise PreconditionError("bump does not fit inside the grid domain")
    return GridFunction(g, vals, support_radius=supp)


def from_function(g: UniformGrid, f: Callable, support_radius: Optional[float] = None) -> GridFunction:
    vals = np.asarray(f(*g.mesh()), dtype=float)
    if support_radius is not None:
        vals = np.where(g.radius() >= support_radius, 0.0, vals)
    return GridFunction(g, vals, support_radius)


def embed(u: GridFunction, domain: BoxDomain) -> GridFunction:
    """Re-express u on a grid over `domain` with the same spacing (zero-extend or crop)."""
    dx = u.grid.spacing
    src = u.grid.domain.half_width
    idx_src, idx_dst, pts = [], [], []
    for a in range(u.grid.n):
        shift = (domain.half_width[a] - src[a]) / dx[a]
        k = int(round(shift))
        if abs(shift - k) > 1e-9:
            raise PreconditionError("target half width is not commensurate with the grid spacing")
        npts = u.grid.points_per_axis[a] + 2 * k
        if npts < 8:
            raise PreconditionError("target domain too small")
        pts.append(npts)
        lo_s, lo_d = max(0, -k), max(0, k)
        count = min(u.grid.points_per_axis[a] - lo_s, npts - lo_d)
        idx_src.append(slice(lo_s, lo_s + count))
        idx_dst.append(slice(lo_d, lo_d + count))
    new_grid = UniformGrid(domain, pts)
    vals = np.zeros(new_grid.shape)
    vals[tuple(idx_dst)] = u.values[tuple(idx_src)]
    if not np.isclose(np.abs(vals).sum(), np.abs(u.values).sum(), rtol=1e-13, atol=0):
        raise PreconditionError("cropping would discard nonzero values")
    return GridFunction(new_grid, vals, u.support_radius)


# -- quadrature ----------------------------------------------------------------
#
# All rules are trapezoidal on the closed box with the +h face identified with
# the -h face (nodes stop at +h - dx). For data vanishing near the boundary this
# is the ordinary trapezoidal rule.


def l1_norm(u: GridFunction) -> float:
    return float(np.sum(np.abs(u.values)) * u.grid.cell_volume)


def lp_norm(u: GridFunction, p: float) -> float:
    if not p >= 1:
        raise InvalidExponentError(f"lp_norm needs p >= 1, got {p}")
    total = np.sum(np.abs(u.values) ** p) * u.grid.cell_volume
    return float(total ** (1.0 / p))


def _boundary_flux(lo, hi, power: float) -> float:
    """Flux of x |x|^power through the boundary of the box [lo, hi] (outward normal).

    By the divergence theorem, div(x |x|^p) = (n + p)|x|^p, so the box integral
    of |x|^p equals this flux divided by (n + p).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    if n == 1:
        f = lambda t: t * abs(t) ** power if t != 0 else 0.0
        return f(hi[0]) - f(lo[0])
    total = 0.0
    for a in range(n):
        others = [b for b in range(n) if b != a]
        ranges = [(lo[b], hi[b]) for b in others]
        opts = [{"points": [0.0]} if lo[b] < 0 < hi[b] else {} for b in others]
        for c, sign in ((hi[a], 1.0), (lo[a], -1.0)):
            if c == 0.0:
                continue

            def integrand(*y, c=c):
                return (c * c + sum(t * t for t in y)) ** (power / 2.0)

            val, _ = integrate.nquad(integrand, ranges, opts=opts)
            total += sign * c * val
    return float(total)


def box_power_integral(lo, hi, power: float) -> float:
    """Exact integral of |x|^power over the box [lo, hi] (requires n + power > 0)."""
    n = np.size(lo)
    if n + power <= 0:
        raise DivergentWeightError(f"|x|^{power} is not integrable near 0 in dimension {n}")
    return _boundary_flux(lo, hi, power) / (n + power)


def box_exterior_power_integral(half_width, power: float) -> float:
    """Integral of |x|^power over the complement of the centred box (requires n + power < 0)."""
    hw = np.asarray(half_width, dtype=float)
    n = hw.size
    if n + power >= 0:
        raise DivergentWeightError("exterior integral diverges at infinity")
    return -_boundary_flux(-hw, hw, power) / (n + power)


@functools.lru_cache(maxsize=64)
def _hardy_weights_cached(grid: UniformGrid, s: float) -> np.ndarray:
    n = grid.n
    a = 2.0 * s
    if n == 1:
        # product trapezoid: exact moments of |x|^{-2s} against each nodal hat
        x = grid.axis(0)
        dx = grid.spacing[0]
        F0 = lambda t: np.sign(t) * np.abs(t) ** (1.0 - a) / (1.0 - a)
        F1 = lambda t: np.abs(t) ** (2.0 - a) / (2.0 - a)
        lo, hi = x - dx, x + dx
        left = (F1(x) - F1(lo)) - lo * (F0(x) - F0(lo))
        right = hi * (F0(hi) - F0(x)) - (F1(hi) - F1(x))
        return (left + right) / dx
    dx = np.asarray(grid.spacing)
    r = grid.radius()
    with np.errstate(divide="ignore"):
        w = grid.cell_volume * r ** (-a)
    origin = tuple(p // 2 for p in grid.shape)
    if n == 2 and np.isclose(dx[0], dx[1], rtol=1e-12) and all(p % 2 == 0 for p in grid.shape):
        # punctured trapezoid plus the lattice-zeta correction at the origin node:
        # sum'_{k in Z^2} |k|^{-a} = 4 zeta(a/2) beta(a/2), continued to a < 2
        zeta2 = 4.0 * float(mpmath.zeta(a / 2) * mpmath.dirichlet(a / 2, [0, 1, 0, -1]))
        w[origin] = -zeta2 * dx[0] ** (n - a)
        return w
    # cells whose closure contains the origin get the exact box integral
    idx = []
    for ax in range(n):
        xa = grid.axis(ax)
        idx.append([i for i in range(len(xa)) if abs(xa[i]) <= dx[ax] / 2 + 1e-12 * dx[ax]])
    for cell in itertools.product(*idx):
        centre = np.array([grid.axis(ax)[i] for ax, i in enumerate(cell)])
        w[cell] = box_power_integral(centre - dx / 2, centre + dx / 2, -a)
    return w


def hardy_weights(grid: UniformGrid, s: float) -> np.ndarray:
    """Node weights w_i with  int |x|^{-2s} u^2 dx  ~=  sum_i w_i u_i^2."""
    if s < 0 or 2.0 * s >= grid.n:
        raise DivergentWeightError(f"Hardy weight needs 0 <= 2s < n, got s={s}, n={grid.n}")
    if s == 0:
        return np.full(grid.shape, grid.cell_volume)
    w = _hardy_weights_cached(grid, float(s))
    w.setflags(write=False)
    return w


def hardy_integral(u: GridFunction, s: float) -> float:
    """Approximate int |x|^{-2s} u(x)^2 dx."""
    w = hardy_weights(u.grid, s)
    return float(np.sum(w * u.values * u.values))


def laplacian_power_k(u: GridFunction, k: int) -> GridFunction:
    """(-Delta)^k u for k in {0, 1}.

    k = 1 is computed spectrally in the Dirichlet sine basis of the grid's box,
    which is exact on eigenfunctions and spectrally accurate for data supported
    away from the boundary.
    """
    if k not in (0, 1):
        raise UnsupportedOrderError(f"only k in {{0, 1}} is supported, got {k}")
    if k == 0:
        return u
    g = u.grid
    modes = tuple(p - 1 for p in g.shape)
    c = _sine.analysis(u.values, g.spacing, g.domain.half_width, modes)
    lam = _sine.total_eigenvalues(modes, g.domain.half_width)
    vals = _sine.synthesis(lam * c, g.shape, g.domain.half_width)
    if u.support_radius is not None:
        vals[g.radius() >= u.support_radius] = 0.0
    return GridFunction(g, vals, u.support_radius)
