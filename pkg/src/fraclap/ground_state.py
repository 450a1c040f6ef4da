"""Critical Rayleigh quotients with lower-order perturbations.

R[u] = (Q^N_m[u] - lam * P[u]) / ||u||_{2*}^2,   2* = 2n / (n - 2m),

with P = Q^N_s (spectral perturbation) or P = int |x|^{-2s} u^2 (Hardy
perturbation). The unknown is the sine coefficient vector of u; the nonlinear
denominator and the Hardy term are evaluated on a grid.
"""
from __future__ import annotations

import csv
import functools
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _sine
from .domain import (
    BoxDomain,
    BubbleParams,
    UniformGrid,
    critical_exponent,
    hardy_integral,
    lp_norm,
    make_bubble,
)
from .errors import (
    ConvergenceError,
    ConvergenceWarning,
    DegenerateInputError,
    ExtrapolationError,
    FraclapError,
    InvalidOrderError,
    PreconditionError,
)
from .fourier import q_dirichlet
from .navier import HardyGram, SineBasis, SpectralCoeffs, el_residual, expand, lambda1, lambda1_hardy, q_navier

SPECTRAL = "spectral_perturbation"
HARDY = "hardy_perturbation"
VARIANTS = (SPECTRAL, HARDY)
SCAN_COLUMNS = ("n", "m", "s", "lambda", "variant", "value", "sobolev_ref", "below_sobolev",
                "el_residual", "iterations")


def _check_orders(n: int, m: float, s: float) -> None:
    if not 0 <= s < m < n / 2:
        raise InvalidOrderError(f"need 0 <= s < m < n/2, got s={s}, m={m}, n={n}")


@dataclass(frozen=True)
class BNProblem:
    variant: str
    n: int
    m: float
    s: float
    lam: float
    domain: BoxDomain
    basis: SineBasis
    grid: UniformGrid

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PreconditionError(f"variant must be one of {VARIANTS}")
        _check_orders(self.n, self.m, self.s)
        if self.domain.n != self.n or self.basis.domain != self.domain or self.grid.domain != self.domain:
            raise PreconditionError("domain, basis and grid must agree")
        if any(J > p // 2 for J, p in zip(self.basis.max_index, self.grid.shape)):
            raise PreconditionError("basis exceeds the grid's Nyquist limit")
        if not np.isfinite(self.lam):
            raise PreconditionError("lambda must be finite")

    @classmethod
    def build(
        cls,
        variant: str,
        n: int,
        m: float,
        s: float,
        lam: Optional[float] = None,
        lambda_frac: Optional[float] = None,
        half_width: float = 1.0,
        J: Optional[int] = None,
        points: Optional[int] = None,
    ) -> "BNProblem":
        """Problem on the cube (-h, h)^n; lambda given directly or as a fraction of the first eigen-quotient."""
        _check_orders(n, m, s)
        J = (256 if n == 1 else 64) if J is None else int(J)
        points = 4 * J if points is None else int(points)
        domain = BoxDomain(n, half_width)
        basis = SineBasis(domain, J)
        grid = UniformGrid(domain, points)
        if (lam is None) == (lambda_frac is None):
            raise PreconditionError("give exactly one of lam and lambda_frac")
        prob = cls(variant, n, m, s, 0.0, domain, basis, grid)
        if lambda_frac is not None:
            if not 0 <= lambda_frac < 1:
                raise PreconditionError("lambda_frac must lie in [0, 1)")
            lam = lambda_frac * prob.eigen_quotient()
        return prob.with_lambda(lam)

    def with_lambda(self, lam: float) -> "BNProblem":
        return BNProblem(self.variant, self.n, self.m, self.s, float(lam), self.domain, self.basis, self.grid)

    @property
    def exponent(self) -> float:
        return critical_exponent(self.n, self.m)

    def eigen_quotient(self) -> float:
        """Lambda_1(m, s) or its Hardy analogue: the top of the positivity window for lambda."""
        if self.variant == SPECTRAL:
            return lambda1(self.m, self.s, self.basis)
        return _hardy_eigen_quotient(self.m, self.s, self.basis, self.grid)


@functools.lru_cache(maxsize=32)
def _hardy_eigen_quotient(m, s, basis, grid) -> float:
    return lambda1_hardy(m, s, basis, grid)


@functools.lru_cache(maxsize=32)
def _gram(basis: SineBasis, grid: UniformGrid, s: float) -> HardyGram:
    return HardyGram(basis, grid, s)


@dataclass(frozen=True)
class RayleighReport:
    value: float
    minimizer: SpectralCoeffs = field(repr=False)
    iterations: int
    el_residual: float
    sobolev_ref: float
    below_sobolev: bool
    converged: bool = True
    tolerance: float = 0.0
    concentration: float = 0.0
    restart_values: tuple = ()
    seed_index: int = 0


class _Functional:
    """Numerator, denominator and constrained gradient of R for one problem."""

    def __init__(self, prob: BNProblem):
        self.prob = prob
        B, g = prob.basis, prob.grid
        self.shape = B.shape
        self.dm = B.eigenvalues**prob.m
        self.p = prob.exponent
        self.gram = _gram(B, g, prob.s) if prob.variant == HARDY else None
        self.ds = None if self.gram is not None else B.eigenvalues**prob.s

    def pert(self, c: np.ndarray) -> np.ndarray:
        if self.gram is None:
            return self.ds * c
        if self.gram.dense is not None:
            return (self.gram.dense @ c.ravel()).reshape(self.shape)
        return self.gram.apply(c)

    def field(self, c: np.ndarray) -> np.ndarray:
        g = self.prob.grid
        return _sine.synthesis(c, g.shape, g.domain.half_width)

    def norm(self, u: np.ndarray) -> float:
        return float((np.sum(np.abs(u) ** self.p) * self.prob.grid.cell_volume) ** (1.0 / self.p))

    def numerator(self, c: np.ndarray) -> float:
        return float(np.sum(self.dm * c * c) - self.prob.lam * np.sum(c * self.pert(c)))

    def normalize(self, c: np.ndarray):
        u = self.field(c)
        nrm = self.norm(u)
        if not nrm > 1e-14:
            raise DegenerateInputError("||u||_{2*} underflows")
        return c / nrm, u / nrm

    def residual(self, c: np.ndarray, u: np.ndarray, value: float) -> np.ndarray:
        """Half the constrained gradient at ||u||_p = 1 (the Euler-Lagrange residual)."""
        g = self.prob.grid
        nl = _sine.analysis(np.abs(u) ** (self.p - 2) * u, g.spacing, g.domain.half_width, self.shape)
        return self.dm * c - self.prob.lam * self.pert(c) - value * nl


def rayleigh(c: SpectralCoeffs, prob: BNProblem) -> float:
    if c.basis != prob.basis:
        raise PreconditionError("coefficients belong to a different basis")
    F = _Functional(prob)
    coeffs = np.asarray(c.coeffs)
    den = F.norm(F.field(coeffs))
    if not den > 1e-14:
        raise DegenerateInputError("||u||_{2*} underflows")
    return F.numerator(coeffs) / den**2


def numerator_gradient(c: SpectralCoeffs, prob: BNProblem) -> np.ndarray:
    """Gradient of Q^N_m - lam P with respect to the coefficients."""
    F = _Functional(prob)
    coeffs = np.asarray(c.coeffs)
    return 2.0 * (F.dm * coeffs - prob.lam * F.pert(coeffs))


# -- Sobolev constant ladder ------------------------------------------------------------------


DEFAULT_LADDER = (0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5)
DEFAULT_LADDER_2D = (0.25, 0.125, 0.0625, 0.03125)


def bubble_quotient(n: int, m: float, eps: float, delta: float, pad_factor: int = 8,
                    max_points: Optional[int] = None) -> float:
    """Q_m[u_eps] / ||u_eps||_{2*}^2 for the cut-off bubble on a grid adapted to (eps, delta)."""
    dx = min(eps / 8.0, delta / 64.0)
    h = 2.5 * delta
    N = int(np.ceil(2 * h / dx))
    N += N % 2
    if max_points is not None and N > max_points:
        raise PreconditionError(f"eps={eps} needs {N} points per axis (limit {max_points})")
    g = UniformGrid.cube(n, h, N)
    u = make_bubble(BubbleParams(n, m, eps, delta), g)
    p = critical_exponent(n, m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        q = q_dirichlet(u, m, pad_factor)
    return q / lp_norm(u, p) ** 2


@dataclass(frozen=True)
class SobolevEstimate:
    value: float
    uncertainty: float
    ratios: tuple
    quotients: tuple
    exponents: tuple


def _ladder_fit(t: np.ndarray, q: np.ndarray, exps: list) -> float:
    A = np.column_stack([t**e for e in exps])
    return float(np.linalg.lstsq(A, q, rcond=None)[0][0])


def sobolev_ladder(n: int, m: float, ladder: Optional[Sequence[float]] = None, delta: float = 0.25,
                   pad_factor: Optional[int] = None) -> SobolevEstimate:
    """Extrapolate the bubble quotient to eps -> 0 by generalized Richardson in t = eps/delta.

    The quotient is scale invariant, so it depends on t only and expands in
    powers t^{a}, t^{2a}, t^{3a}, t^n with a = n - 2m. The uncertainty is the
    change of the limit when the highest power of t^a is dropped from the fit.
    """
    if not 0 < m < n / 2:
        raise InvalidOrderError(f"need 0 < m < n/2, got m={m}")
    if ladder is None:
        # absolute eps: ladders with different delta then sample different t
        ladder = DEFAULT_LADDER if n == 1 else [e * 0.25 for e in DEFAULT_LADDER_2D]
    eps = np.sort(np.asarray(ladder, dtype=float))[::-1]
    if eps.size < 4:
        raise PreconditionError("ladder needs at least 4 scales")
    pad = (8 if n == 1 else 4) if pad_factor is None else pad_factor
    q = np.array([bubble_quotient(n, m, e, delta, pad) for e in eps])
    if np.any(np.diff(q) >= 0):
        raise ExtrapolationError(f"bubble quotients do not decrease along the ladder: {q}")
    t = eps / delta
    a = n - 2.0 * m
    powers = sorted({round(k * a, 12) for k in (1, 2, 3) if k * a < n} | {float(n)})
    powers = powers[: max(1, eps.size - 2)]
    full = _ladder_fit(t, q, [0.0] + powers)
    frac = [e for e in powers if not np.isclose(e, n)]
    reduced_powers = [e for e in powers if not np.isclose(e, frac[-1])] if len(frac) > 1 else powers[:-1]
    reduced = _ladder_fit(t, q, [0.0] + reduced_powers)
    if not full > 0:
        raise ExtrapolationError("extrapolated constant is not positive")
    return SobolevEstimate(full, abs(full - reduced), tuple(t), tuple(q), tuple(powers))


@functools.lru_cache(maxsize=16)
def _cached_estimate(n: int, m: float, delta: float) -> SobolevEstimate:
    return sobolev_ladder(n, m, None, delta)


def sobolev_constant_estimate(n: int, m: float, ladder: Optional[Sequence[float]] = None,
                              delta: float = 0.25) -> float:
    if ladder is None:
        return _cached_estimate(int(n), float(m), float(delta)).value
    return sobolev_ladder(n, m, ladder, delta).value


_LADDER_LOCK = threading.Lock()


def sobolev_reference(n: int, m: float) -> SobolevEstimate:
    # one ladder at a time: the finest rungs need large padded transforms
    with _LADDER_LOCK:
        return _cached_estimate(int(n), float(m), 0.25)


# -- minimization --------------------------------------------------------------------------------


def _start_vectors(prob: BNProblem, restarts: int, seed: int) -> list:
    B, g = prob.basis, prob.grid
    starts = []
    c = np.zeros(B.shape)
    c[(0,) * prob.n] = 1.0
    starts.append(c)
    h = prob.domain.inradius
    bub = make_bubble(BubbleParams(prob.n, prob.m, 0.1 * h, 0.3 * h), g)
    starts.append(np.array(expand(bub, B).coeffs))
    children = np.random.SeedSequence(seed).spawn(max(restarts - 2, 0))
    decay = B.eigenvalues ** (-(prob.m + 1.0))
    for child in children:
        rng = np.random.default_rng(child)
        r = rng.standard_normal(B.shape) * decay
        r[(0,) * prob.n] = abs(r[(0,) * prob.n]) + decay.flat[0]
        starts.append(r)
    return starts


def _descend(F: _Functional, c0: np.ndarray, max_iter: int, tol_value: float, tol_residual: float):
    c, u = F.normalize(c0)
    val = F.numerator(c)
    eta = 1.0
    res_norm = np.inf
    for it in range(1, max_iter + 1):
        r = F.residual(c, u, val)
        res_norm = float(np.linalg.norm(r))
        d = -r / F.dm
        slope = 2.0 * float(np.sum(r * d))
        if slope >= 0:
            return c, val, it, res_norm, res_norm <= tol_residual
        eta = min(2.0 * eta, 1e3)
        while True:
            c_try, u_try = F.normalize(c + eta * d)
            v_try = F.numerator(c_try)
            if v_try <= val + 1e-4 * eta * slope or eta < 1e-14:
                break
            eta *= 0.5
        change = abs(val - v_try) / max(abs(val), 1e-300)
        c, u, val = c_try, u_try, v_try
        if change < tol_value and res_norm <= tol_residual:
            res_norm = float(np.linalg.norm(F.residual(c, u, val)))
            return c, val, it, res_norm, res_norm <= tol_residual
        if eta < 1e-14:
            break
    res_norm = float(np.linalg.norm(F.residual(c, u, val)))
    return c, val, max_iter, res_norm, False


def concentration(c: SpectralCoeffs, prob: BNProblem, radius_frac: float = 0.1) -> float:
    """Fraction of ||u||_{2*}^{2*} inside the ball of radius radius_frac * inradius around the peak."""
    F = _Functional(prob)
    u = F.field(np.asarray(c.coeffs))
    w = np.abs(u) ** F.p
    total = w.sum()
    if total == 0:
        return 0.0
    X = prob.grid.mesh()
    peak = np.unravel_index(np.argmax(w), w.shape)
    r2 = sum((Xa - Xa[peak]) ** 2 for Xa in X)
    return float(w[r2 <= (radius_frac * prob.domain.inradius) ** 2].sum() / total)


def minimize(
    prob: BNProblem,
    restarts: int = 3,
    seed: int = 0,
    max_iter: int = 100_000,
    tol_value: float = 1e-9,
    tol_residual: float = 1e-6,
    sobolev: Optional[SobolevEstimate] = None,
    threads: int = 1,
) -> RayleighReport:
    """Normalized preconditioned descent from phi_1, a bubble and seeded random starts."""
    if restarts < 3:
        raise PreconditionError("need at least 3 restarts")
    window = prob.eigen_quotient()
    if not prob.lam < window:
        raise PreconditionError(f"lambda={prob.lam} is outside the positivity window (< {window})")
    F = _Functional(prob)
    starts = _start_vectors(prob, restarts, seed)

    def run(c0):
        return _descend(F, c0, max_iter, tol_value, tol_residual)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, starts))
    else:
        results = [run(c0) for c0 in starts]
    if not any(r[4] for r in results):
        diag = ", ".join(f"seed {i}: value {r[1]:.6g}, residual {r[3]:.2e}" for i, r in enumerate(results))
        raise ConvergenceError(f"no restart converged within {max_iter} iterations ({diag})")
    order = sorted(range(len(results)), key=lambda i: (results[i][1], i))
    best = order[0]
    c, val, its, res, ok = results[best]
    est = sobolev if sobolev is not None else sobolev_reference(prob.n, prob.m)
    tol = est.uncertainty
    coeffs = SpectralCoeffs(prob.basis, c)
    residual = el_residual(coeffs, prob.m, prob.s, prob.lam, prob.variant == HARDY, prob.grid, gram=F.gram)
    return RayleighReport(
        value=float(val),
        minimizer=coeffs,
        iterations=int(its),
        el_residual=float(residual),
        sobolev_ref=float(est.value),
        below_sobolev=bool(val < est.value - 3.0 * tol),
        converged=bool(ok),
        tolerance=float(tol),
        concentration=concentration(coeffs, prob),
        restart_values=tuple(float(r[1]) for r in results),
        seed_index=int(best),
    )


# -- bubble insertion curves and scans ------------------------------------------------------------


def bubble_curve(prob: BNProblem, eps_grid: Sequence[float], delta: Optional[float] = None,
                 max_points: int = 1 << 20) -> list:
    """R[u_eps] along eps_grid, each bubble sampled on a grid fine enough to resolve eps.

    Q^N uses every resolvable sine mode of that grid, so the values are not
    limited by the problem's working basis.
    """
    h = prob.domain.inradius
    delta = 0.4 * h if delta is None else float(delta)
    if not 2 * delta < h:
        raise PreconditionError("bubble support must fit inside the domain")
    out = []
    p = prob.exponent
    for eps in eps_grid:
        if not eps > 0:
            raise PreconditionError("eps must be positive")
        dx = min(eps / 8.0, delta / 64.0)
        N = int(np.ceil(2 * h / dx))
        N += N % 2
        if N**prob.n > max_points:
            raise PreconditionError(f"eps={eps} needs {N}^{prob.n} grid points")
        g = UniformGrid(prob.domain, N)
        u = make_bubble(BubbleParams(prob.n, prob.m, eps, delta), g)
        basis = SineBasis(prob.domain, N // 2)
        c = expand(u, basis)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            num = q_navier(c, prob.m)
            if prob.variant == SPECTRAL:
                pert = q_navier(c, prob.s)
            else:
                pert = hardy_integral(u, prob.s)
        out.append((float(eps), float((num - prob.lam * pert) / lp_norm(u, p) ** 2)))
    return out


def critical_scan(
    n: int,
    m_grid: Sequence[float],
    s_grid: Sequence[float],
    lambda_frac: float,
    variant: str = HARDY,
    J: Optional[int] = None,
    restarts: int = 3,
    seed: int = 0,
    max_iter: int = 100_000,
    threads: int = 1,
) -> list:
    """Run minimize on every admissible (m, s) cell; failures are recorded per cell."""
    if not 0 < lambda_frac < 1:
        raise PreconditionError("lambda_frac must lie in (0, 1)")
    cells = [(m, s) for m in m_grid for s in s_grid]
    for m in dict.fromkeys(m_grid):
        if 0 < m < n / 2:
            sobolev_reference(n, m)

    def one(cell):
        m, s = cell
        row = {"n": n, "m": m, "s": s, "lambda": float("nan"), "variant": variant, "value": float("nan"),
               "sobolev_ref": float("nan"), "below_sobolev": False, "el_residual": float("nan"),
               "iterations": 0, "status": "ok", "noncritical": s >= 2 * m - n / 2 - 1e-12}
        if not 0 <= s < m < n / 2:
            row["status"] = "skipped"
            return row
        try:
            prob = BNProblem.build(variant, n, m, s, lambda_frac=lambda_frac, J=J)
            rep = minimize(prob, restarts=restarts, seed=seed, max_iter=max_iter)
        except FraclapError as exc:
            row["status"] = f"failed: {type(exc).__name__}"
            return row
        row.update({"lambda": prob.lam, "value": rep.value, "sobolev_ref": rep.sobolev_ref,
                    "below_sobolev": rep.below_sobolev, "el_residual": rep.el_residual,
                    "iterations": rep.iterations})
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, cells))
    return [one(cell) for cell in cells]


def write_scan(path, rows: Sequence[dict]) -> None:
    from .gap import _fmt

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[k]) if not isinstance(row[k], str) else row[k] for k in SCAN_COLUMNS])
