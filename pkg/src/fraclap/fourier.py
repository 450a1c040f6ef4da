"""Whole-space (Dirichlet) fractional forms computed on the Fourier side.

Q_m[u] = int |xi|^{2m} |F u(xi)|^2 d xi  with the unitary transform
F u(xi) = (2 pi)^{-n/2} int e^{-i xi.x} u(x) dx.

For u supported in the box this is Q^D_{m, Omega}[u] for every box Omega that
contains the support.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

from .domain import (
    GridFunction,
    UniformGrid,
    box_exterior_power_integral,
    box_power_integral,
)
from .errors import (
    AliasingError,
    ConvergenceError,
    ConvergenceWarning,
    IllConditionedWarning,
    InvalidOrderError,
    PreconditionError,
)

FLOOR_EVEN = "floor_even"
FLOOR_ODD = "floor_odd"
INTEGER = "integer"


@dataclass(frozen=True)
class FormOrder:
    """Order m with its splitting m = 2k + sigma (floor even) or m = 2k - sigma (floor odd)."""

    m: float
    k: int
    sigma: float
    parity: str

    @classmethod
    def from_m(cls, m: float) -> "FormOrder":
        m = float(m)
        if m in (1.0, 2.0):
            return cls(m, int(m), 0.0, INTEGER)
        if not 0.0 < m < 3.0 or float(m).is_integer():
            raise InvalidOrderError(f"supported orders are (0, 3) minus the integers, plus 1 and 2; got {m}")
        fl = int(np.floor(m))
        if fl % 2 == 0:
            return cls(m, fl // 2, m - fl, FLOOR_EVEN)
        return cls(m, (fl + 1) // 2, fl + 1 - m, FLOOR_ODD)

    def __post_init__(self):
        if self.parity == INTEGER:
            ok = self.m in (1.0, 2.0)
        elif self.parity == FLOOR_EVEN:
            ok = 0 < self.sigma < 1 and np.isclose(self.m, 2 * self.k + self.sigma)
        elif self.parity == FLOOR_ODD:
            ok = 0 < self.sigma < 1 and np.isclose(self.m, 2 * self.k - self.sigma)
        else:
            ok = False
        if not ok or (self.parity != INTEGER and self.k not in (0, 1)):
            raise InvalidOrderError(f"inconsistent order decomposition {self}")


def _as_m(ord_or_m: Union[FormOrder, float]) -> float:
    return ord_or_m.m if isinstance(ord_or_m, FormOrder) else float(ord_or_m)


@dataclass(frozen=True)
class PaddedSpectrum:
    source: GridFunction
    pad_factor: int
    modal_amplitudes: np.ndarray = field(repr=False)
    frequency_step: tuple = ()

    def frequencies(self) -> list:
        """Angular frequencies per axis, in numpy FFT order."""
        g = self.source.grid
        return [
            2 * np.pi * np.fft.fftfreq(M, d=dx)
            for M, dx in zip(self.modal_amplitudes.shape, g.spacing)
        ]

    @property
    def cell(self) -> float:
        return float(np.prod(self.frequency_step))


def _check_support(u: GridFunction) -> None:
    vals = np.abs(u.values)
    peak = vals.max()
    if peak == 0:
        return
    for ax in range(u.grid.n):
        edge = max(np.take(vals, 0, axis=ax).max(), np.take(vals, -1, axis=ax).max())
        if edge > 0.05 * peak:
            raise AliasingError("support touches the grid boundary; the zero extension is discontinuous")


def transform(u: GridFunction, pad_factor: int = 8) -> PaddedSpectrum:
    if pad_factor < 4:
        raise PreconditionError("pad_factor must be >= 4")
    _check_support(u)
    g = u.grid
    shape = tuple(pad_factor * p for p in g.shape)
    amp = np.fft.fftn(u.values, s=shape, axes=tuple(range(len(shape))))
    scale = g.cell_volume / (2 * np.pi) ** (g.n / 2)
    # nodes start at -h: shift the phase so amplitudes refer to the origin
    for ax, (M, dx, h) in enumerate(zip(shape, g.spacing, g.domain.half_width)):
        xi = 2 * np.pi * np.fft.fftfreq(M, d=dx)
        bshape = [1] * g.n
        bshape[ax] = M
        amp = amp * np.exp(1j * xi * h).reshape(bshape)
    steps = tuple(2 * np.pi / (M * dx) for M, dx in zip(shape, g.spacing))
    return PaddedSpectrum(u, pad_factor, amp * scale, steps)


def _raw_form(u: GridFunction, m: float, pad_factor: int) -> float:
    """Riemann sum of |xi|^{2m} |u_hat|^2 on the padded frequency lattice."""
    g = u.grid
    shape = tuple(pad_factor * p for p in g.shape)
    amp = np.fft.rfftn(u.values, s=shape, axes=tuple(range(len(shape))))
    power = (amp.real**2 + amp.imag**2) * (g.cell_volume**2 / (2 * np.pi) ** g.n)
    xi2 = np.zeros(power.shape)
    for ax, (M, dx) in enumerate(zip(shape, g.spacing)):
        if ax == g.n - 1:
            xi = 2 * np.pi * np.fft.rfftfreq(M, d=dx)
        else:
            xi = 2 * np.pi * np.fft.fftfreq(M, d=dx)
        bshape = [1] * g.n
        bshape[ax] = xi.size
        xi2 = xi2 + (xi**2).reshape(bshape)
    # rfft stores half the last axis: double interior columns
    M_last = shape[-1]
    mult = np.full(power.shape[-1], 2.0)
    mult[0] = 1.0
    if M_last % 2 == 0:
        mult[-1] = 1.0
    if m == 0:
        weight = np.ones_like(xi2)
    else:
        with np.errstate(divide="ignore"):
            weight = np.where(xi2 > 0, xi2**m, 0.0)
    cell = np.prod([2 * np.pi / (M * dx) for M, dx in zip(shape, g.spacing)])
    return float(np.sum(weight * power * mult) * cell)


def q_dirichlet(
    u: GridFunction,
    ord: Union[FormOrder, float],
    pad_factor: int = 8,
    strict: bool = False,
) -> float:
    """Q_m[u] from the padded FFT of u.

    |xi|^{2m} is not smooth at xi = 0 for non-even 2m, so the lattice sum carries
    errors of order dxi^{n+2m}, dxi^{n+2m+2}, ... (generalised Euler-Maclaurin).
    The first two are removed by Richardson extrapolation over three paddings
    (pad_factor, 2x, 4x in 1D; pad_factor/2, 1x, 2x in higher dimensions to
    bound memory). Emits ConvergenceWarning (or raises ConvergenceError when
    strict) if doubling the padding moves the once-extrapolated value by more
    than 0.1%.
    """
    m = _as_m(ord)
    if m < 0 or m >= 3:
        raise InvalidOrderError(f"q_dirichlet supports 0 <= m < 3, got {m}")
    if pad_factor < 4:
        raise PreconditionError("pad_factor must be >= 4")
    _check_support(u)
    n = u.grid.n
    if float(m).is_integer():
        return _raw_form(u, m, pad_factor)
    base = pad_factor if n == 1 else max(pad_factor // 2, 2)
    raw = [_raw_form(u, m, base * 2**i) for i in range(3)]
    e1, e2 = 2.0 ** (n + 2 * m), 2.0 ** (n + 2 * m + 2)
    first = [(e1 * b - a) / (e1 - 1.0) for a, b in zip(raw[:-1], raw[1:])]
    change = abs(first[1] - first[0]) / max(abs(first[1]), np.finfo(float).tiny)
    if change > 1e-3:
        msg = f"padding not converged: doubling pad_factor changed Q by {change:.2e}"
        if strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    vals = [(e2 * first[1] - first[0]) / (e2 - 1.0)]
    return float(vals[0])


def _small_lag_diffs(v: np.ndarray, kmax: int) -> np.ndarray:
    return np.array([np.sum((v[k:] - v[:-k]) ** 2) for k in range(1, kmax + 1)])


def gagliardo_form(u: GridFunction, sigma: float) -> float:
    """Double integral  int int |u(x) - u(y)|^2 / |x - y|^{n + 2 sigma} dx dy.

    The pair sum is organised by lag t = y - x: with D(t) = int |u(x+t) - u(x)|^2 dx
    the form is int D(t) |t|^{-n-2 sigma} dt. The diagonal cell uses the Taylor
    model D(t) ~ t^T (int grad u grad u^T) t; lags beyond the support use
    D = 2 ||u||_2^2 exactly.
    """
    if not 0 < sigma < 1:
        raise InvalidOrderError(f"sigma must lie in (0, 1), got {sigma}")
    if sigma < 1e-3 or sigma > 1 - 1e-3:
        warnings.warn("sigma within 1e-3 of {0, 1}: the form is ill-conditioned", IllConditionedWarning, stacklevel=2)
    g = u.grid
    v = u.values
    if not np.any(v):
        return 0.0
    _check_support(u)
    if g.n == 1:
        return _gagliardo_1d(v, g.spacing[0], sigma)
    return _gagliardo_nd(u, sigma)


def _gagliardo_1d(v: np.ndarray, dx: float, sigma: float) -> float:
    N = v.size
    A0 = np.sum(v * v) * dx
    spec = np.fft.rfft(v, 2 * N)
    auto = np.fft.irfft(spec.real**2 + spec.imag**2, 2 * N)[:N] * dx
    D = 2.0 * (A0 - auto)
    kdirect = min(64, N - 1)
    D[1 : kdirect + 1] = _small_lag_diffs(v, kdirect) * dx
    t = dx * np.arange(N)
    E = np.empty(N)
    E[1:] = D[1:] / t[1:] ** 2
    E[0] = (4.0 * E[1] - E[2]) / 3.0
    # product trapezoid for int_0^T t^beta E(t) dt with E linear on each lag cell
    beta = 1.0 - 2.0 * sigma
    a, b = t[:-1], t[1:]
    mom0 = (b ** (beta + 1) - a ** (beta + 1)) / (beta + 1)
    mom1 = (b ** (beta + 2) - a ** (beta + 2)) / (beta + 2)
    wa = (b * mom0 - mom1) / dx
    wb = (mom1 - a * mom0) / dx
    core = np.sum(wa * E[:-1] + wb * E[1:])
    T = t[-1]
    tail = 2.0 * A0 * T ** (-2.0 * sigma) / (2.0 * sigma)
    return float(2.0 * (core + tail))


def _gagliardo_nd(u: GridFunction, sigma: float) -> float:
    g = u.grid
    n = g.n
    v = u.values
    dx = np.asarray(g.spacing)
    dV = g.cell_volume
    shape = tuple(2 * p for p in g.shape)
    spec = np.fft.rfftn(v, s=shape, axes=tuple(range(len(shape))))
    auto = np.fft.irfftn(spec.real**2 + spec.imag**2, s=shape, axes=tuple(range(len(shape)))) * dV
    A0 = np.sum(v * v) * dV
    D = 2.0 * (A0 - auto)
    idx = [np.fft.fftfreq(shape[a], d=1.0 / shape[a]).astype(int) for a in range(n)]
    grad2 = 0.0
    for a in range(n):
        d1 = np.sum((np.roll(v, -1, axis=a) - v) ** 2) * dV / dx[a] ** 2
        d2 = np.sum((np.roll(v, -2, axis=a) - v) ** 2) * dV / (2 * dx[a]) ** 2
        grad2 += (4.0 * d1 - d2) / 3.0

    def lattice_sum(q: int) -> float:
        # lags restricted to the sublattice q*dx*Z^n, all inside the computed window
        K = [q * ((p - 1) // q) for p in g.shape]
        sel = [np.nonzero((i % q == 0) & (np.abs(i) <= k))[0] for i, k in zip(idx, K)]
        Dq = D[np.ix_(*sel)]
        T = np.meshgrid(*[idx[a][sel[a]] * dx[a] for a in range(n)], indexing="ij")
        r2 = sum(Ta * Ta for Ta in T)
        with np.errstate(divide="ignore"):
            kern = np.where(r2 > 0, r2 ** (-(n + 2.0 * sigma) / 2.0), 0.0)
        h = q * dx
        total = np.sum(Dq * kern) * np.prod(h)
        # diagonal cell: D(t) ~ sum_a t_a^2 ||d_a u||^2, symmetric cell -> trace/n
        total += grad2 / n * box_power_integral(-h / 2, h / 2, 2.0 - n - 2.0 * sigma)
        hw = (np.asarray(K) + q / 2.0) * dx
        total += 2.0 * A0 * box_exterior_power_integral(hw, -(n + 2.0 * sigma))
        return float(total)

    # the lattice error expands in h^{2-2 sigma}, h^{4-2 sigma}, ...
    S = [lattice_sum(q) for q in (1, 2, 4)]
    for e in (2.0 - 2.0 * sigma, 4.0 - 2.0 * sigma):
        f = 2.0**e
        S = [(f * a - b) / (f - 1.0) for a, b in zip(S[:-1], S[1:])]
    return float(S[0])


def dilate(u: GridFunction, t: float) -> GridFunction:
    """Resample x -> u(x / t) onto the same grid (quintic spline interpolation)."""
    g = u.grid
    if u.support_radius is not None and u.support_radius * t >= g.domain.inradius:
        raise PreconditionError("dilated support exceeds the grid")
    coords = []
    for ax, Xa in enumerate(g.mesh()):
        h = g.domain.half_width[ax]
        coords.append((Xa / t + h) / g.spacing[ax])
    vals = ndimage.map_coordinates(np.asarray(u.values), coords, order=5, mode="constant", cval=0.0)
    supp = None if u.support_radius is None else u.support_radius * t
    if supp is not None:
        vals[g.radius() >= supp] = 0.0
    return GridFunction(g, vals, supp)


def dilation_check(u: GridFunction, ord: Union[FormOrder, float], t: float, pad_factor: int = 8):
    """Return (Q_m[u(./t)], t^{n-2m} Q_m[u]) with both sides computed independently."""
    if t <= 0:
        raise PreconditionError("dilation factor must be positive")
    m = _as_m(ord)
    n = u.grid.n
    rhs = t ** (n - 2.0 * m) * q_dirichlet(u, m, pad_factor)
    if t == 1.0:
        return rhs, rhs
    lhs = q_dirichlet(dilate(u, t), m, pad_factor)
    return lhs, rhs
