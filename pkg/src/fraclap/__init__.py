"""Dirichlet and Navier fractional Laplacian forms on boxes, their gap, and critical ground states."""

__version__ = "0.1.0"

from .domain import (
    BoxDomain,
    BubbleParams,
    GridFunction,
    UniformGrid,
    critical_exponent,
    hardy_integral,
    make_bubble,
    smooth_bump,
)
from .fourier import FormOrder, gagliardo_form, q_dirichlet
from .navier import SineBasis, SpectralCoeffs, expand, lambda1, lambda1_hardy, q_navier, synthesize
from .gap import GapReport, gap_once, gap_sweep_domain
from .ground_state import BNProblem, RayleighReport, minimize, rayleigh, sobolev_constant_estimate
from .config import RunConfig, parse_config

__all__ = [
    "BoxDomain",
    "BubbleParams",
    "GridFunction",
    "UniformGrid",
    "critical_exponent",
    "hardy_integral",
    "make_bubble",
    "smooth_bump",
    "FormOrder",
    "gagliardo_form",
    "q_dirichlet",
    "SineBasis",
    "SpectralCoeffs",
    "expand",
    "lambda1",
    "lambda1_hardy",
    "q_navier",
    "synthesize",
    "GapReport",
    "gap_once",
    "gap_sweep_domain",
    "BNProblem",
    "RayleighReport",
    "minimize",
    "rayleigh",
    "sobolev_constant_estimate",
    "RunConfig",
    "parse_config",
]
