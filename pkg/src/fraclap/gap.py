"""Dirichlet versus Navier gap experiments on growing box domains."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import BoxDomain, GridFunction, embed, l1_norm
from .errors import ExtrapolationError, InvalidOrderError, PreconditionError
from .fourier import FLOOR_EVEN, INTEGER, FormOrder, q_dirichlet
from .navier import SineBasis, expand, q_navier

NOISE_FLOOR = 1e-12
PARITY_SLACK = 1e-6
CSV_COLUMNS = ("m", "n", "r", "R", "omega", "QD", "QN", "gap", "bound_ratio")


@dataclass(frozen=True)
class GapReport:
    m: float
    n: int
    r: float
    R: float
    omega_half_width: float
    q_dirichlet: float
    q_navier: float
    signed_gap: float
    bound_ratio: float
    l1: float

    def __post_init__(self):
        if not self.r < self.R <= self.omega_half_width * (1 + 1e-12):
            raise PreconditionError(f"need r < R <= half width, got r={self.r}, R={self.R}")

    def bound(self, envelope: float) -> float:
        """envelope * R^n / (R - r)^{2n+2m} * ||u||_1^2."""
        return envelope * self.R**self.n / (self.R - self.r) ** (2 * self.n + 2 * self.m) * self.l1**2

    def row(self) -> list:
        return [self.m, self.n, self.r, self.R, self.omega_half_width, self.q_dirichlet,
                self.q_navier, self.signed_gap, self.bound_ratio]


def _as_order(ord) -> FormOrder:
    return ord if isinstance(ord, FormOrder) else FormOrder.from_m(ord)


def oriented_gap(ord: FormOrder, qd: float, qn: float) -> float:
    """Q^N - Q^D when floor(m) is even, Q^D - Q^N when it is odd."""
    return qn - qd if ord.parity == FLOOR_EVEN else qd - qn


def gap_once(
    u: GridFunction,
    ord,
    omega: BoxDomain,
    r: float,
    R: float,
    pad_factor: int = 8,
    qd: Optional[float] = None,
) -> GapReport:
    """Both forms of u and the parity-oriented gap for the domain omega."""
    ord = _as_order(ord)
    if ord.parity == INTEGER:
        raise InvalidOrderError("gap experiments need a non-integer order")
    n = u.grid.n
    if u.support_radius is None or u.support_radius > r * (1 + 1e-12):
        raise PreconditionError(f"u must be supported in the ball of radius r={r}")
    if not r < R <= omega.inradius * (1 + 1e-12):
        raise PreconditionError(f"need r < R <= inradius(omega), got r={r}, R={R}")
    ue = embed(u, omega)
    basis = SineBasis(omega, tuple(p // 2 for p in ue.grid.shape))
    qn = q_navier(expand(ue, basis), ord.m)
    if qd is None:
        qd = q_dirichlet(u, ord, pad_factor)
    gap = oriented_gap(ord, qd, qn)
    l1 = l1_norm(u)
    ratio = abs(gap) * (R - r) ** (2 * n + 2 * ord.m) / (R**n * l1**2) if l1 > 0 else 0.0
    return GapReport(ord.m, n, float(r), float(R), float(omega.inradius), float(qd), float(qn),
                     float(gap), float(ratio), float(l1))


def gap_sweep_domain(
    u: GridFunction,
    ord,
    half_widths: Sequence[float],
    r: Optional[float] = None,
    pad_factor: int = 8,
    threads: int = 1,
) -> list:
    """Gap reports on the cubes of the given half widths, with R equal to each half width."""
    ord = _as_order(ord)
    r = u.support_radius if r is None else r
    if r is None:
        raise PreconditionError("u needs a support radius")
    if any(h <= r for h in half_widths):
        raise PreconditionError("every half width must exceed the support radius")
    qd = q_dirichlet(u, ord, pad_factor)
    n = u.grid.n

    def one(h):
        return gap_once(u, ord, BoxDomain(n, h), r, h, pad_factor, qd=qd)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, half_widths))
    return [one(h) for h in half_widths]


def bound_envelope(reports: Sequence[GapReport]) -> float:
    """Empirical stand-in for the unknown constant: the largest bound ratio seen."""
    return max(rep.bound_ratio for rep in reports)


def sweep_findings(reports: Sequence[GapReport], max_spread: float = 10.0) -> dict:
    ratios = np.array([rep.bound_ratio for rep in reports])
    gaps = np.array([abs(rep.signed_gap) for rep in reports])
    env = bound_envelope(reports)
    positive = ratios[ratios > 0]
    spread = float(positive.max() / positive.min()) if positive.size else 0.0
    tail = gaps[-3:]
    return {
        "envelope": env,
        "ratio_spread": spread,
        "bound_violation": spread > max_spread,
        "parity_ok": all(rep.signed_gap >= -PARITY_SLACK * rep.q_dirichlet for rep in reports),
        "sandwich_ok": all(
            -PARITY_SLACK * rep.q_dirichlet <= rep.signed_gap <= rep.bound(env) + PARITY_SLACK * rep.q_dirichlet
            for rep in reports
        ),
        "tail_decreasing": bool(np.all(np.diff(tail) < 0)),
    }


def gap_rate_fit(reports: Sequence[GapReport], noise_floor: float = NOISE_FLOOR):
    """Least-squares slope and intercept of log|gap| against log(R - r)."""
    fit = gap_rate_report(reports, noise_floor)
    return fit["slope"], fit["intercept"]


def gap_rate_report(reports: Sequence[GapReport], noise_floor: float = NOISE_FLOOR) -> dict:
    if len(reports) < 4:
        raise PreconditionError("rate fit needs at least 4 reports")
    d = np.array([rep.R - rep.r for rep in reports])
    if np.unique(d).size != d.size:
        raise PreconditionError("rate fit needs distinct R - r")
    gaps = np.array([abs(rep.signed_gap) for rep in reports])
    floor = np.array([noise_floor * rep.q_dirichlet for rep in reports])
    keep = gaps >= floor
    excluded = [i for i in range(len(reports)) if not keep[i]]
    if keep.sum() < 2:
        raise ExtrapolationError("fewer than two gaps above the noise floor")
    slope, intercept = np.polyfit(np.log(d[keep]), np.log(gaps[keep]), 1)
    n, m = reports[0].n, reports[0].m
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "excluded": excluded,
        "threshold": -(2 * n + 2 * m) + 1.0,
        "consistent": bool(slope <= -(2 * n + 2 * m) + 1.0),
    }


def write_reports(path, reports: Sequence[GapReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            w.writerow([_fmt(v) for v in rep.row()])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v
