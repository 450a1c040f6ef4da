"""Navier (spectral) forms in the analytic Dirichlet sine basis of a box.

Q^N_m[u] = sum_j lambda_j^m (u, phi_j)^2 with tensor eigenpairs
phi_j(x) = prod_a h_a^{-1/2} sin(j_a pi (x_a + h_a) / (2 h_a)),
lambda_j = sum_a (j_a pi / (2 h_a))^2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, minres

from . import _sine
from .domain import (
    BoxDomain,
    GridFunction,
    UniformGrid,
    critical_exponent,
    hardy_weights,
)
from .errors import (
    AliasingError,
    ConvergenceError,
    DivergentWeightError,
    InvalidOrderError,
    PreconditionError,
    QuadratureError,
    TruncationError,
    TruncationWarning,
)

TAIL_FRACTION = 1e-3
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SineBasis:
    domain: BoxDomain
    max_index: tuple
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)

    def __init__(self, domain: BoxDomain, max_index):
        if np.ndim(max_index) == 0:
            J = (int(max_index),) * domain.n
        else:
            J = tuple(int(j) for j in max_index)
        if len(J) != domain.n or any(j < 1 for j in J):
            raise PreconditionError(f"need a positive mode count per axis, got {max_index}")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "max_index", J)
        lam = _sine.total_eigenvalues(J, domain.half_width)
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    def __hash__(self):
        return hash((self.domain, self.max_index))

    @property
    def shape(self) -> tuple:
        return self.max_index

    @property
    def size(self) -> int:
        return int(np.prod(self.max_index))

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues.flat[0])

    def eigenfunction(self, j, *x) -> np.ndarray:
        """phi_j evaluated at coordinate arrays x_1..x_n (1-based multi-index j)."""
        j = (j,) if np.ndim(j) == 0 else tuple(j)
        out = 1.0
        for ja, xa, h in zip(j, x, self.domain.half_width):
            out = out * _sine.eigenfunction_1d(ja, np.asarray(xa, dtype=float), h)
        return out


@dataclass(frozen=True)
class SpectralCoeffs:
    basis: SineBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != self.basis.shape:
            raise PreconditionError(f"coefficient shape {c.shape} != basis shape {self.basis.shape}")
        if not np.all(np.isfinite(c)):
            raise PreconditionError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __mul__(self, alpha: float) -> "SpectralCoeffs":
        return SpectralCoeffs(self.basis, alpha * self.coeffs)

    __rmul__ = __mul__

    def with_coeffs(self, c: np.ndarray) -> "SpectralCoeffs":
        return SpectralCoeffs(self.basis, c)

    @classmethod
    def unit(cls, basis: SineBasis, j=None) -> "SpectralCoeffs":
        c = np.zeros(basis.shape)
        idx = (0,) * basis.domain.n if j is None else tuple(np.atleast_1d(j) - 1)
        c[idx] = 1.0
        return cls(basis, c)


def _check_grid(basis: SineBasis, g: UniformGrid) -> None:
    if g.domain != basis.domain:
        raise PreconditionError("grid and basis live on different domains")


def expand(u: GridFunction, basis: SineBasis) -> SpectralCoeffs:
    """c_j = (u, phi_j) by the grid-aligned fast sine transform (trapezoidal rule)."""
    g = u.grid
    _check_grid(basis, g)
    for J, p in zip(basis.max_index, g.shape):
        if J > p // 2:
            raise AliasingError(f"{J} modes exceed the Nyquist limit {p // 2} of a {p}-point axis")
    c = _sine.analysis(u.values, g.spacing, g.domain.half_width, basis.max_index)
    return SpectralCoeffs(basis, c)


def synthesize(c: SpectralCoeffs, g: UniformGrid) -> GridFunction:
    """u(x_i) = sum_j c_j phi_j(x_i) on every node of g."""
    _check_grid(c.basis, g)
    if any(J > p - 1 for J, p in zip(c.basis.max_index, g.shape)):
        raise AliasingError("more modes than interior grid nodes")
    return GridFunction(g, _sine.synthesis(c.coeffs, g.shape, g.domain.half_width))


def _last_octave_mask(basis: SineBasis) -> np.ndarray:
    mask = np.zeros(basis.shape, dtype=bool)
    for ax, J in enumerate(basis.max_index):
        sl = [slice(None)] * basis.domain.n
        sl[ax] = slice(J // 2, None)
        mask[tuple(sl)] = True
    return mask


def navier_tail_fraction(c: SpectralCoeffs, m: float) -> float:
    """Share of sum lambda_j^m c_j^2 carried by modes in the last octave of any axis."""
    terms = c.basis.eigenvalues**m * c.coeffs**2
    total = terms.sum()
    if total == 0:
        return 0.0
    return float(terms[_last_octave_mask(c.basis)].sum() / total)


def q_navier(c: SpectralCoeffs, m: float, strict: bool = False) -> float:
    """sum_j lambda_j^m c_j^2 over the retained modes.

    Warns (TruncationWarning) when the last octave holds more than 0.1% of the
    sum; raises TruncationError instead when strict.
    """
    total = float(np.sum(c.basis.eigenvalues**m * c.coeffs**2))
    if m > 0 and min(c.basis.max_index) >= 2:
        tail = navier_tail_fraction(c, m)
        if tail > TAIL_FRACTION:
            msg = f"last-octave share {tail:.2e} of Q^N exceeds {TAIL_FRACTION}"
            if strict:
                raise TruncationError(msg)
            warnings.warn(msg, TruncationWarning, stacklevel=2)
    return total


def lambda1(m: float, s: float, basis: SineBasis) -> float:
    """inf Q^N_m / Q^N_s = lambda_1^{m-s}."""
    if not m > s:
        raise InvalidOrderError(f"need m > s, got m={m}, s={s}")
    return float(basis.eigenvalues.min() ** (m - s))


# -- Hardy Gram matrix -----------------------------------------------------------


class HardyGram:
    """W_{jk} = sum_i w_i phi_j(x_i) phi_k(x_i) with the singular Hardy weights w_i.

    Small bases are assembled densely; larger ones act matrix-free through
    synthesis, pointwise weighting and analysis.
    """

    def __init__(self, basis: SineBasis, g: UniformGrid, s: float):
        _check_grid(basis, g)
        if s < 0 or 2 * s >= g.n:
            raise DivergentWeightError(f"Hardy weight needs 0 <= 2s < n, got s={s}")
        if any(J > p - 1 for J, p in zip(basis.max_index, g.shape)):
            raise AliasingError("more modes than interior grid nodes")
        self.basis = basis
        self.grid = g
        self.s = float(s)
        self.weights = hardy_weights(g, s)
        self._dense = None
        if basis.size <= DENSE_LIMIT:
            self._dense = self._assemble()

    def _assemble(self) -> np.ndarray:
        g, B = self.grid, self.basis
        if g.n == 1:
            x = g.axis(0)
            j = np.arange(1, B.max_index[0] + 1)
            Phi = _sine.eigenfunction_1d(j[None, :], x[:, None], g.domain.half_width[0])
            return Phi.T @ (self.weights[:, None] * Phi)
        cols = np.eye(B.size)
        return np.stack([self.apply(col.reshape(B.shape)).ravel() for col in cols], axis=1)

    @property
    def dense(self) -> Optional[np.ndarray]:
        return self._dense

    def apply(self, c: np.ndarray) -> np.ndarray:
        """W c for a coefficient array shaped like the basis."""
        if self._dense is not None and c.ndim == 1:
            return self._dense @ c
        g = self.grid
        u = _sine.synthesis(c, g.shape, g.domain.half_width)
        return _sine.analysis(self.weights * u, g.spacing, g.domain.half_width, self.basis.max_index) / g.cell_volume

    def quadratic(self, c: np.ndarray) -> float:
        return float(np.sum(c * self.apply(c)))


def hardy_gram(basis: SineBasis, g: UniformGrid, s: float) -> HardyGram:
    return HardyGram(basis, g, s)


def lambda1_hardy(m: float, s: float, basis: SineBasis, g: UniformGrid, tol: float = 1e-8,
                  max_iter: int = 500) -> float:
    """Smallest mu with D_m c = mu W c, D_m = diag(lambda_j^m), W the Hardy Gram matrix.

    Five inverse-power sweeps (c <- D^{-1} W c) followed by Rayleigh-quotient
    iteration; stops when the quotient is stable to `tol`.
    """
    if not m > s:
        raise InvalidOrderError(f"need m > s, got m={m}, s={s}")
    if s < 0 or 2 * s >= basis.domain.n:
        raise DivergentWeightError(f"Hardy weight needs 0 <= 2s < n, got s={s}")
    W = HardyGram(basis, g, s)
    d = (basis.eigenvalues**m).ravel()
    if W.dense is not None:
        try:
            np.linalg.cholesky(W.dense)
        except np.linalg.LinAlgError as exc:
            raise QuadratureError("Hardy Gram matrix is not positive definite") from exc
        Wmul = lambda v: W.dense @ v
    else:
        Wmul = lambda v: W.apply(v.reshape(basis.shape)).ravel()

    def quotient(v):
        wv = Wmul(v)
        den = v @ wv
        if not den > 0:
            raise QuadratureError("Hardy Gram matrix is not positive definite")
        return float(v @ (d * v) / den), wv

    c = np.zeros(basis.size)
    c[0] = 1.0
    rho, wc = quotient(c)
    for _ in range(5):
        c = wc / d
        c /= np.linalg.norm(c)
        rho, wc = quotient(c)
    power_rho = rho
    for it in range(max_iter):
        if W.dense is not None:
            try:
                with warnings.catch_warnings():
                    # the shifted system is nearly singular by design
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    x = sla.solve(np.diag(d) - rho * W.dense, wc, assume_a="sym")
            except sla.LinAlgError:
                break
        else:
            op = LinearOperator((basis.size,) * 2, matvec=lambda v: d * v - rho * Wmul(v), dtype=float)
            x, _ = minres(op, wc, rtol=1e-12, maxiter=2000)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) == 0:
            break
        c = x / np.linalg.norm(x)
        new, wc = quotient(c)
        done = abs(new - rho) <= tol * abs(new)
        rho = new
        if done:
            break
    if rho > power_rho * (1 + 1e-10):
        # RQI drifted to a higher eigenpair: fall back to plain inverse power
        rho = _inverse_power(d, Wmul, tol, max_iter * 20)
    return float(rho)


def _inverse_power(d, Wmul, tol, max_iter) -> float:
    c = np.zeros(d.size)
    c[0] = 1.0
    rho = np.inf
    for _ in range(max_iter):
        wc = Wmul(c)
        new = float(c @ (d * c) / (c @ wc))
        if abs(new - rho) <= tol * 1e-2 * abs(new):
            return new
        rho = new
        c = wc / d
        c /= np.linalg.norm(c)
    raise ConvergenceError("inverse power iteration did not converge")


# -- Euler-Lagrange residual -------------------------------------------------------


def el_residual(
    c: SpectralCoeffs,
    m: float,
    s: float,
    lam: float,
    hardy: bool,
    g: UniformGrid,
    nonlinear: bool = True,
    gram: Optional[HardyGram] = None,
) -> float:
    """l2 norm over modes of  lambda^m c - lam * P'(c) - mu * (|u|^{p-2} u, phi_j).

    P'(c) is lambda^s c (spectral perturbation) or W c (Hardy perturbation), and
    mu = Q^N_m - lam * P is the Lagrange multiplier of the constraint ||u||_p = 1.
    The input is rescaled to ||u||_p = 1 first when the nonlinear term is kept.
    """
    B = c.basis
    coeffs = np.asarray(c.coeffs, dtype=float)
    lam_m = B.eigenvalues**m
    if hardy:
        W = gram if gram is not None else HardyGram(B, g, s)
        pert = W.apply(coeffs.ravel() if W.dense is not None else coeffs).reshape(B.shape)
    else:
        pert = B.eigenvalues**s * coeffs
    if not nonlinear:
        return float(np.linalg.norm(lam_m * coeffs - lam * pert))
    p = critical_exponent(g.n, m)
    u = _sine.synthesis(coeffs, g.shape, g.domain.half_width)
    norm = (np.sum(np.abs(u) ** p) * g.cell_volume) ** (1.0 / p)
    if norm == 0:
        return float(np.linalg.norm(lam_m * coeffs - lam * pert))
    coeffs, pert, u = coeffs / norm, pert / norm, u / norm
    mu = float(np.sum(lam_m * coeffs**2) - lam * np.sum(coeffs * pert))
    nl = _sine.analysis(np.abs(u) ** (p - 2) * u, g.spacing, g.domain.half_width, B.max_index)
    return float(np.linalg.norm(lam_m * coeffs - lam * pert - mu * nl))
