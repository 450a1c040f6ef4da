"""Weighted half-space extensions in one space dimension.

Fields live on a tensor mesh (uniform in x, graded in y) and are treated as
piecewise bilinear; energies are  int int y^{1-2 sigma} |grad w|^2  computed with
exact element matrices.

direct: w(x, y) = c1 int y^{2 sigma} g(xi) / (|x - xi|^2 + y^2)^{(1 + 2 sigma)/2} d xi,
        c1 = 1 / B(1/2, sigma), so that w(., 0) = g.
dual:   w(x, y) = c3 int g(xi) [(|x - xi|^2 + y^2)^{-(1 - 2 sigma)/2} - 1] d xi,
        c3 = 1 / ((1 - 2 sigma) B(1/2, 1 - sigma)), so that
        -y^{1-2 sigma} d_y w -> g as y -> 0; at sigma = 1/2 the kernel is
        log(|x - xi|^2 + y^2) with c3 = -1/(2 pi). The -1 shift only adds a
        constant to w (zero for mean-free g) and makes the family continuous
        through sigma = 1/2, where c3 blows up.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import integrate, special
from scipy.sparse.linalg import splu

from .domain import GridFunction, UniformGrid
from .errors import (
    CalibrationError,
    ConvergenceError,
    InvalidOrderError,
    PreconditionError,
    QuadratureError,
    TruncationError,
)
from .fourier import FLOOR_ODD, FormOrder, q_dirichlet

LOG_BRANCH_TOL = 1e-12
NEAR_CELLS = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise InvalidOrderError(f"sigma must lie in (0, 1), got {sigma}")
    return sigma


def graded_nodes(Y: float, M: int, gamma: float) -> np.ndarray:
    """y_l = Y (l / M)^gamma, l = 0..M (nested under doubling of M)."""
    return Y * (np.arange(M + 1) / M) ** gamma


@dataclass(frozen=True)
class CylinderGrid:
    """Tensor mesh on [-X, X] x [0, Y] with the x spacing of an interval grid."""

    base: UniformGrid
    y_nodes: np.ndarray = field(repr=False)
    sigma: float = 0.5
    x_half_width: float = 1.0

    def __post_init__(self):
        if self.base.n != 1:
            raise PreconditionError("extensions are implemented for n = 1 only")
        _check_sigma(self.sigma)
        y = np.asarray(self.y_nodes, dtype=float)
        if y[0] != 0.0 or np.any(np.diff(y) <= 0):
            raise PreconditionError("y nodes must start at 0 and increase strictly")
        if y[-1] < 10.0 * self.base.domain.diameter * (1 - 1e-12):
            raise PreconditionError("cylinder height must be at least 10 diam(Omega)")
        dx = self.base.spacing[0]
        k = self.x_half_width / dx
        if abs(k - round(k)) > 1e-9 or self.x_half_width < self.base.domain.half_width[0] - 1e-12:
            raise PreconditionError("x half width must be a multiple of dx covering Omega")
        y.setflags(write=False)
        object.__setattr__(self, "y_nodes", y)

    @classmethod
    def graded(
        cls,
        base: UniformGrid,
        sigma: float,
        M: int = 96,
        Y: Optional[float] = None,
        gamma: Optional[float] = None,
        X: Optional[float] = None,
    ) -> "CylinderGrid":
        """Default mesh: Y = X = 10 diam(Omega), grading gamma = max(2, 3 / (2 sigma))."""
        sigma = _check_sigma(sigma)
        diam = base.domain.diameter
        Y = 10.0 * diam if Y is None else float(Y)
        gamma = max(2.0, 3.0 / (2.0 * sigma)) if gamma is None else float(gamma)
        dx = base.spacing[0]
        X = 10.0 * diam if X is None else float(X)
        X = dx * np.ceil(X / dx - 1e-9)
        return cls(base, graded_nodes(Y, M, gamma), sigma, float(X))

    def cylinder(self) -> "CylinderGrid":
        """Same y mesh restricted laterally to Omega."""
        return CylinderGrid(self.base, self.y_nodes, self.sigma, self.base.domain.half_width[0])

    def refined(self) -> "CylinderGrid":
        """Doubled y resolution on the same grading law (nested mesh)."""
        M = self.M
        y = self.y_nodes
        gamma = np.log(y[1] / y[-1]) / np.log(1.0 / M)
        return CylinderGrid(self.base, graded_nodes(y[-1], 2 * M, gamma), self.sigma, self.x_half_width)

    @property
    def M(self) -> int:
        return self.y_nodes.size - 1

    @property
    def Y(self) -> float:
        return float(self.y_nodes[-1])

    @property
    def dx(self) -> float:
        return self.base.spacing[0]

    @property
    def x_nodes(self) -> np.ndarray:
        k = int(round(self.x_half_width / self.dx))
        return self.dx * np.arange(-k, k + 1)


@dataclass(frozen=True)
class ExtensionField:
    grid: CylinderGrid
    values: np.ndarray = field(repr=False)
    kind: str = "direct"
    sigma: float = 0.5
    trace_datum: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("direct", "dual"):
            raise PreconditionError(f"unknown field kind {self.kind}")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.x_nodes.size, self.grid.y_nodes.size):
            raise PreconditionError("field shape does not match its cylinder grid")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


# -- 1D element matrices ---------------------------------------------------------------


def _uniform_matrices(nodes: np.ndarray):
    h = np.diff(nodes)
    n = nodes.size
    k_diag = np.zeros(n)
    m_diag = np.zeros(n)
    k_diag[:-1] += 1 / h
    k_diag[1:] += 1 / h
    m_diag[:-1] += h / 3
    m_diag[1:] += h / 3
    K = sp.diags([k_diag, -1 / h, -1 / h], [0, 1, -1], format="csr")
    Mx = sp.diags([m_diag, h / 6, h / 6], [0, 1, -1], format="csr")
    return K, Mx


def _weighted_matrices(nodes: np.ndarray, beta: float):
    """Stiffness and mass matrices for the weight y^beta on a 1D mesh starting at 0."""
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    # exact weighted moments on the first element [0, y1]; Gauss-Legendre elsewhere
    mid = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * _GL_X[None, :]
    wts = 0.5 * h[:, None] * _GL_W[None, :]
    w = mid**beta * wts
    t = (mid - a[:, None]) / h[:, None]
    m0 = w.sum(axis=1)
    maa = (w * (1 - t) ** 2).sum(axis=1)
    mab = (w * t * (1 - t)).sum(axis=1)
    mbb = (w * t**2).sum(axis=1)
    y1 = b[0]
    m0[0] = y1 ** (beta + 1) / (beta + 1)
    maa[0] = y1 ** (beta + 1) * (1 / (beta + 1) - 2 / (beta + 2) + 1 / (beta + 3))
    mab[0] = y1 ** (beta + 1) * (1 / (beta + 2) - 1 / (beta + 3))
    mbb[0] = y1 ** (beta + 1) / (beta + 3)
    n = nodes.size
    kd = np.zeros(n)
    kd[:-1] += m0 / h**2
    kd[1:] += m0 / h**2
    K = sp.diags([kd, -m0 / h**2, -m0 / h**2], [0, 1, -1], format="csr")
    md = np.zeros(n)
    md[:-1] += maa
    md[1:] += mbb
    Mw = sp.diags([md, mab, mab], [0, 1, -1], format="csr")
    return K, Mw


def _tensor_energy(W: np.ndarray, x: np.ndarray, y: np.ndarray, beta: float) -> float:
    Kx, Mx = _uniform_matrices(x)
    Ky, My = _weighted_matrices(y, beta)
    return float(np.sum((Kx @ W) * (My @ W.T).T) + np.sum((Mx @ W) * (Ky @ W.T).T))


def _system_matrix(x: np.ndarray, y: np.ndarray, beta: float) -> sp.csr_matrix:
    Kx, Mx = _uniform_matrices(x)
    Ky, My = _weighted_matrices(y, beta)
    return (sp.kron(Kx, My) + sp.kron(Mx, Ky)).tocsc()


# -- kernel weights against nodal hats ----------------------------------------------------


def _hat_weights(c: np.ndarray, dx: float, F0, F1) -> np.ndarray:
    """int K(t) hat(t - c) dt from antiderivatives F0 = int K, F1 = int t K."""
    lo, hi = c - dx, c + dx
    left = (F1(c) - F1(lo)) - lo * (F0(c) - F0(lo))
    right = hi * (F0(hi) - F0(c)) - (F1(hi) - F1(c))
    return (left + right) / dx


def _gauss_hat_weights(c: np.ndarray, dx: float, K) -> np.ndarray:
    out = np.zeros_like(c)
    for sgn in (-1.0, 1.0):
        t = c[:, None] + sgn * 0.5 * dx * (1 + _GL_X[None, :])
        hat = 1.0 - np.abs(t - c[:, None]) / dx
        out += (K(t) * hat * 0.5 * dx * _GL_W[None, :]).sum(axis=1)
    return out


def _kernel_weights(c: np.ndarray, dx: float, y: float, kernel: str, sigma: float) -> np.ndarray:
    K, F0, F1 = _kernel_functions(y, kernel, sigma)
    out = np.empty_like(c)
    near = np.abs(c) <= (NEAR_CELLS + 1) * dx if y < NEAR_CELLS * dx else np.zeros(c.shape, bool)
    out[near] = _hat_weights(c[near], dx, F0, F1)
    out[~near] = _gauss_hat_weights(c[~near], dx, K)
    return out


def _kernel_functions(y: float, kernel: str, sigma: float):
    if kernel == "direct":
        c1 = 1.0 / special.beta(0.5, sigma)
        K = lambda t: c1 * y ** (2 * sigma) * (t * t + y * y) ** (-(1 + 2 * sigma) / 2)
        F0 = lambda t: 0.5 * np.sign(t) * special.betainc(0.5, sigma, t * t / (t * t + y * y))
        if abs(sigma - 0.5) < LOG_BRANCH_TOL:
            F1 = lambda t: c1 * y * 0.5 * np.log(t * t + y * y)
        else:
            F1 = lambda t: c1 * y ** (2 * sigma) * (t * t + y * y) ** ((1 - 2 * sigma) / 2) / (1 - 2 * sigma)
        return K, F0, F1
    if abs(sigma - 0.5) < LOG_BRANCH_TOL:
        c3 = -1.0 / (2.0 * np.pi)

        def K(t):
            return c3 * np.log(t * t + y * y)

        def F0(t):
            r2 = t * t + y * y
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
            arc = 2 * y * np.arctan(t / y) if y > 0 else 0.0 * t
            return c3 * (t * lg - 2 * t + arc)

        def F1(t):
            r2 = t * t + y * y
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(r2 > 0, r2 * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
            return c3 * 0.5 * (lg - r2)

        return K, F0, F1
    b = (1 - 2 * sigma) / 2
    c3 = 1.0 / ((1 - 2 * sigma) * special.beta(0.5, 1 - sigma))
    # shifted by the kernel's value at unit distance: adds a constant to w only
    K = lambda t: c3 * ((t * t + y * y) ** (-b) - 1.0)
    if y > 0:
        F0 = lambda t: c3 * (t * y ** (-2 * b) * special.hyp2f1(b, 0.5, 1.5, -(t * t) / (y * y)) - t)
    else:
        F0 = lambda t: c3 * (np.sign(t) * np.abs(t) ** (1 - 2 * b) / (1 - 2 * b) - t)
    F1 = lambda t: c3 * ((t * t + y * y) ** (1 - b) / (2 * (1 - b)) - 0.5 * t * t)
    return K, F0, F1


def _convolve_levels(g: np.ndarray, grid: CylinderGrid, kernel: str, sigma: float, levels) -> np.ndarray:
    """Field at every x node for the given y levels: sum_k g_k int K(x - xi) hat_k(xi) d xi."""
    x = grid.x_nodes
    dx = grid.dx
    ng = g.size
    offsets_idx = np.arange(-(ng - 1), x.size)
    # source nodes are x_k = -h + k dx; target x_j = -X + j dx; offset x_j - x_k
    h = grid.base.domain.half_width[0]
    shift = int(round((grid.x_half_width - h) / dx))
    out = np.empty((x.size, len(levels)))
    L = x.size + ng
    nfft = 1 << int(np.ceil(np.log2(L)))
    gf = np.fft.rfft(g, nfft)
    for col, y in enumerate(levels):
        c = (offsets_idx - shift) * dx
        wts = _kernel_weights(c.astype(float), dx, float(y), kernel, sigma)
        # full[j + ng - 1] = sum_k g_k wts[(j - k) + ng - 1]
        full = np.fft.irfft(gf * np.fft.rfft(wts, nfft), nfft)
        out[:, col] = full[ng - 1 : ng - 1 + x.size]
    return out


def _trace_values(gk: GridFunction, grid: CylinderGrid) -> np.ndarray:
    """gk on the cylinder x nodes (zero outside Omega)."""
    if gk.grid != grid.base:
        raise PreconditionError("datum grid differs from the cylinder base grid")
    v = np.zeros(grid.x_nodes.size)
    h = grid.base.domain.half_width[0]
    shift = int(round((grid.x_half_width - h) / grid.dx))
    v[shift : shift + gk.values.size] = gk.values
    return v


# -- direct extension -------------------------------------------------------------------


def poisson_direct(gk: GridFunction, sigma: float, grid: CylinderGrid, check_layer: bool = True) -> ExtensionField:
    """Generalized Poisson extension of gk, evaluated by exact product integration."""
    sigma = _check_sigma(sigma)
    if abs(grid.sigma - sigma) > 1e-15:
        raise PreconditionError("cylinder grid was graded for a different sigma")
    g = np.asarray(gk.values, dtype=float)
    vals = np.zeros((grid.x_nodes.size, grid.M + 1))
    trace = _trace_values(gk, grid)
    vals[:, 0] = trace
    if np.any(g):
        vals[:, 1:] = _convolve_levels(g, grid, "direct", sigma, grid.y_nodes[1:])
        if check_layer:
            peak = np.abs(trace).max()
            err = np.abs(vals[:, 1] - trace).max()
            if err > 0.01 * peak:
                raise QuadratureError(
                    f"trace layer unresolved: first level deviates by {err / peak:.2e} of the datum"
                )
    return ExtensionField(grid, vals, "direct", sigma, trace)


def _octave_tail_share(w: ExtensionField) -> float:
    g = w.grid
    x, y = g.x_nodes, g.y_nodes
    beta = 1 - 2 * w.sigma
    total = _tensor_energy(w.values, x, y, beta)
    if total == 0:
        return 0.0
    ix = np.abs(x) <= g.x_half_width / 2 + 1e-12
    iy = y <= g.Y / 2 + 1e-12
    inner = _tensor_energy(w.values[np.ix_(ix, iy)], x[ix], y[iy], beta)
    return (total - inner) / total


def _monopole_tail(w: ExtensionField) -> float:
    """Energy of the far-field monopole c1 M0 y^{2s} r^{-1-2s} outside the mesh."""
    s = w.sigma
    g = w.grid
    M0 = float(np.sum(w.values[:, 0]) * g.dx)
    if M0 == 0:
        return 0.0
    c1 = 1.0 / special.beta(0.5, s)
    X, Y = g.x_half_width, g.Y

    def f(th):
        sn, cs = np.sin(th), np.cos(th)
        rho = min(X / abs(cs) if cs != 0 else np.inf, Y / sn)
        dens = sn ** (1 + 2 * s) + 4 * s * s * sn ** (2 * s - 1) * cs * cs
        return dens * rho ** (-1 - 2 * s) / (1 + 2 * s)

    corner = np.arctan2(Y, X)
    val, _ = integrate.quad(f, 0, np.pi, points=[corner, np.pi - corner], limit=200)
    return c1 * c1 * M0 * M0 * val


def energy_direct(w: ExtensionField, strict: bool = True) -> float:
    """int int y^{1-2 sigma} |grad w|^2 of the bilinear interpolant, plus the far-field tail."""
    if w.kind != "direct":
        raise PreconditionError("energy_direct needs a direct extension field")
    if not np.any(w.values):
        return 0.0
    share = _octave_tail_share(w)
    if share > 0.01 and strict:
        raise TruncationError(f"last octave carries {share:.2%} of the extension energy")
    e = _tensor_energy(w.values, w.grid.x_nodes, w.grid.y_nodes, 1 - 2 * w.sigma)
    return e + _monopole_tail(w)


def default_witnesses(base: UniformGrid) -> list:
    from .domain import BubbleParams, make_bubble, smooth_bump

    h = base.domain.inradius
    return [
        make_bubble(BubbleParams(1, 0.4, 0.5, 0.25 * h), base),
        make_bubble(BubbleParams(1, 0.25, 0.3, 0.35 * h), base),
        smooth_bump(base, 0.6 * h),
    ]


def c2_ratios(sigma: float, witnesses: Sequence[GridFunction], grid: Optional[CylinderGrid] = None,
              pad_factor: int = 8) -> np.ndarray:
    """Q_sigma[u] / energy_direct(u) for each witness."""
    sigma = _check_sigma(sigma)
    if len(witnesses) < 3:
        raise PreconditionError("calibration needs at least 3 witnesses")
    base = witnesses[0].grid
    if grid is None:
        grid = CylinderGrid.graded(base, sigma)
    ratios = []
    for u in witnesses:
        if u.grid.n != 1:
            raise PreconditionError("calibration is one-dimensional")
        e = energy_direct(poisson_direct(u, sigma, grid))
        if e <= 0:
            raise CalibrationError("witness with zero extension energy")
        ratios.append(q_dirichlet(u, sigma, pad_factor) / e)
    return np.asarray(ratios)


def calibrate_c2(sigma: float, witnesses: Sequence[GridFunction], grid: Optional[CylinderGrid] = None,
                 pad_factor: int = 8, max_cv: float = 0.01) -> float:
    """Mean of Q_sigma[u] / energy_direct(u) over witnesses; the ratios must agree to 1% (CV)."""
    ratios = c2_ratios(sigma, witnesses, grid, pad_factor)
    cv = ratios.std() / ratios.mean()
    if cv > max_cv:
        raise CalibrationError(f"c2 ratios vary by {cv:.2%} across witnesses: {ratios}")
    return float(ratios.mean())


@functools.lru_cache(maxsize=16)
def _default_c2(base: UniformGrid, sigma: float, M: int, Y: float, X: float, gamma: float) -> float:
    grid = CylinderGrid(base, graded_nodes(Y, M, gamma), sigma, X)
    return calibrate_c2(sigma, default_witnesses(base), grid)


def calibrated_c2(grid: CylinderGrid) -> float:
    """c2 calibrated on the default witnesses for this mesh (cached)."""
    y = grid.y_nodes
    gamma = float(np.log(y[1] / y[-1]) / np.log(1.0 / grid.M))
    whole = grid if grid.x_half_width > grid.base.domain.half_width[0] else CylinderGrid.graded(
        grid.base, grid.sigma, grid.M, grid.Y, gamma
    )
    return _default_c2(grid.base, grid.sigma, grid.M, grid.Y, whole.x_half_width, gamma)


# -- cylinder (Navier) problems -------------------------------------------------------------


def _cylinder_nodes(grid: CylinderGrid):
    cyl = grid.cylinder()
    return cyl, cyl.x_nodes, cyl.y_nodes


def cylinder_navier_field(gk: GridFunction, sigma: float, grid: CylinderGrid) -> ExtensionField:
    """Discrete minimizer of the weighted energy on Omega x (0, Y) with trace gk."""
    sigma = _check_sigma(sigma)
    cyl, x, y = _cylinder_nodes(grid)
    nx, ny = x.size, y.size
    trace = _trace_values(gk, cyl)
    W = np.zeros((nx, ny))
    W[:, 0] = trace
    if not np.any(trace):
        return ExtensionField(cyl, W, "direct", sigma, trace)
    A = _system_matrix(x, y, 1 - 2 * sigma)
    idx = np.arange(nx * ny).reshape(nx, ny)
    free = idx[1:-1, 1:].ravel()
    fixed = idx[:, 0].ravel()
    rhs = -(A[free][:, fixed] @ trace)
    Aff = A[free][:, free].tocsc()
    sol = splu(Aff).solve(rhs)
    res = np.linalg.norm(Aff @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or res > 1e-10:
        raise ConvergenceError(f"cylinder solve residual {res:.2e}")
    W[1:-1, 1:] = sol.reshape(nx - 2, ny - 1)
    return ExtensionField(cyl, W, "direct", sigma, trace)


def cylinder_navier(gk: GridFunction, sigma: float, grid: CylinderGrid, c2: Optional[float] = None) -> float:
    """c2 * min energy over fields vanishing on the lateral boundary with trace gk."""
    w = cylinder_navier_field(gk, sigma, grid)
    if not np.any(w.values):
        return 0.0
    e = _tensor_energy(w.values, w.grid.x_nodes, w.grid.y_nodes, 1 - 2 * sigma)
    if c2 is None:
        c2 = calibrated_c2(grid)
    return c2 * e


def cylinder_navier_dual_field(gk: GridFunction, sigma: float, grid: CylinderGrid):
    sigma = _check_sigma(sigma)
    cyl, x, y = _cylinder_nodes(grid)
    nx, ny = x.size, y.size
    trace = _trace_values(gk, cyl)
    W = np.zeros((nx, ny))
    if not np.any(trace):
        return ExtensionField(cyl, W, "dual", sigma, trace), 0.0
    A = _system_matrix(x, y, 1 - 2 * sigma)
    _, Mx = _uniform_matrices(x)
    load = np.zeros((nx, ny))
    load[:, 0] = Mx @ trace
    idx = np.arange(nx * ny).reshape(nx, ny)
    free = idx[1:-1, :].ravel()
    b = load.ravel()[free]
    Aff = A[free][:, free].tocsc()
    sol = splu(Aff).solve(b)
    res = np.linalg.norm(Aff @ sol - b) / np.linalg.norm(b)
    if not np.isfinite(res) or res > 1e-10:
        raise ConvergenceError(f"dual cylinder solve residual {res:.2e}")
    W[1:-1, :] = sol.reshape(nx - 2, ny)
    return ExtensionField(cyl, W, "dual", sigma, trace), float(b @ sol)


def cylinder_navier_dual(gk: GridFunction, sigma: float, grid: CylinderGrid, c2: Optional[float] = None) -> float:
    """(1/c2) * max over fields vanishing laterally of 2 int gk w(., 0) - energy(w)."""
    _, value = cylinder_navier_dual_field(gk, sigma, grid)
    if value == 0:
        return 0.0
    if c2 is None:
        c2 = calibrated_c2(grid)
    return value / c2


# -- dual extension ---------------------------------------------------------------------------


def poisson_dual(gk: GridFunction, sigma: float, grid: CylinderGrid) -> ExtensionField:
    """Dual extension with weighted Neumann datum -y^{1-2 sigma} d_y w = gk at y = 0."""
    sigma = _check_sigma(sigma)
    if abs(grid.sigma - sigma) > 1e-15:
        raise PreconditionError("cylinder grid was graded for a different sigma")
    g = np.asarray(gk.values, dtype=float)
    vals = np.zeros((grid.x_nodes.size, grid.M + 1))
    trace = _trace_values(gk, grid)
    if np.any(g):
        vals[:] = _convolve_levels(g, grid, "dual", sigma, grid.y_nodes)
    return ExtensionField(grid, vals, "dual", sigma, trace)


def neumann_defect(w: ExtensionField, interior: float = 0.5) -> float:
    """max |2s (w(x, y1) - w(x, 0)) / y1^{2s} + g| / max|g| over |x| <= interior * h."""
    if w.kind != "dual":
        raise PreconditionError("Neumann datum check applies to dual fields")
    s = w.sigma
    g = w.trace_datum
    y1 = w.grid.y_nodes[1]
    est = 2 * s * (w.values[:, 1] - w.values[:, 0]) / y1 ** (2 * s)
    sel = np.abs(w.grid.x_nodes) <= interior * w.grid.base.domain.half_width[0]
    peak = np.abs(g).max()
    if peak == 0:
        return 0.0
    return float(np.abs(est[sel] + g[sel]).max() / peak)


def dual_value(w: ExtensionField) -> float:
    """2 int g w(., 0) - int int y^{1-2 sigma} |grad w|^2 (without the 1/c2 factor)."""
    g = w.grid
    _, Mx = _uniform_matrices(g.x_nodes)
    linear = float(w.trace_datum @ (Mx @ w.values[:, 0]))
    energy = _tensor_energy(w.values, g.x_nodes, g.y_nodes, 1 - 2 * w.sigma)
    return 2.0 * linear - energy


def q_dirichlet_dual(u: GridFunction, ord: FormOrder, grid: CylinderGrid, c2: Optional[float] = None,
                     check: bool = True) -> float:
    """Q_m[u] for m = 2 - sigma in (1, 2) from the dual extension of -u''."""
    from .domain import laplacian_power_k

    if not isinstance(ord, FormOrder):
        ord = FormOrder.from_m(ord)
    if ord.parity != FLOOR_ODD or ord.k != 1:
        raise InvalidOrderError("the dual identity needs m = 2 - sigma in (1, 2)")
    gk = laplacian_power_k(u, 1)
    if not np.any(gk.values):
        return 0.0
    w = poisson_dual(gk, ord.sigma, grid)
    if c2 is None:
        c2 = calibrated_c2(grid)
    value = dual_value(w) / c2
    if check:
        ref = q_dirichlet(u, ord.m)
        if abs(value - ref) > 0.05 * ref:
            import warnings

            from .errors import ConvergenceWarning

            warnings.warn(f"dual identity off by {abs(value - ref) / ref:.2%}", ConvergenceWarning, stacklevel=2)
    return value


def weighted_residual(w: ExtensionField) -> float:
    """Relative discrete residual of div(y^{1-2 sigma} grad w) at interior nodes.

    Rows are restricted to |x| <= X/2 and y in [y_2, Y/2]; the residual is scaled
    by the row-wise magnitude |A| |w|.
    """
    g = w.grid
    x, y = g.x_nodes, g.y_nodes
    A = _system_matrix(x, y, 1 - 2 * w.sigma)
    v = w.values.ravel()
    r = (A @ v).reshape(w.values.shape)
    scale = (abs(A) @ np.abs(v)).reshape(w.values.shape)
    ix = np.abs(x) <= g.x_half_width / 2
    iy = (y >= y[2]) & (y <= g.Y / 2)
    sel = np.ix_(ix, iy)
    return float(np.abs(r[sel]).max() / scale[sel].max())


def field_to_table(w: ExtensionField) -> np.ndarray:
    """Rows (x, y, value), x-major."""
    X, Yg = np.meshgrid(w.grid.x_nodes, w.grid.y_nodes, indexing="ij")
    return np.column_stack([X.ravel(), Yg.ravel(), w.values.ravel()])
