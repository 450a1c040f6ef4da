"""Grid-aligned sine transforms on origin-centred boxes.

Nodes along an axis of half-width h with N points are x_i = -h + i*dx,
dx = 2h/N, i = 0..N-1. The Dirichlet eigenfunctions

    phi_j(x) = h**-0.5 * sin(j*pi*(x + h) / (2h)),  j = 1, 2, ...

sampled at the interior nodes i = 1..N-1 form a DST-I pair, so analysis
(dx * sum_i u_i phi_j(x_i)) and synthesis (sum_j c_j phi_j(x_i)) are exact
adjoints of one another up to the cell volume.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft


def analysis(values: np.ndarray, spacing, half_width, n_modes) -> np.ndarray:
    """Return c_j = dV * sum_i u_i phi_j(x_i) for 1 <= j_a <= n_modes[a]."""
    out = np.asarray(values, dtype=float)
    for ax in range(out.ndim):
        interior = np.take(out, np.arange(1, out.shape[ax]), axis=ax)
        out = sfft.dst(interior, type=1, axis=ax)
        scale = spacing[ax] / np.sqrt(half_width[ax]) / 2.0
        out = np.take(out, np.arange(n_modes[ax]), axis=ax) * scale
    return out


def synthesis(coeffs: np.ndarray, points, half_width) -> np.ndarray:
    """Evaluate sum_j c_j phi_j at all grid nodes (zero at the -h node)."""
    out = np.asarray(coeffs, dtype=float)
    for ax in range(out.ndim):
        n_int = points[ax] - 1
        J = out.shape[ax]
        if J < n_int:
            pad = [(0, 0)] * out.ndim
            pad[ax] = (0, n_int - J)
            out = np.pad(out, pad)
        elif J > n_int:
            raise ValueError("more modes than interior nodes")
        out = sfft.dst(out, type=1, axis=ax) / (2.0 * np.sqrt(half_width[ax]))
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 0)
        out = np.pad(out, pad)
    return out


def axis_eigenvalues(n_modes: int, half_width: float) -> np.ndarray:
    j = np.arange(1, n_modes + 1)
    return (j * np.pi / (2.0 * half_width)) ** 2


def total_eigenvalues(n_modes, half_width) -> np.ndarray:
    """lambda_j = sum_a (j_a pi / 2h_a)^2 on the tensor index set."""
    lam = np.zeros(tuple(n_modes))
    for ax, (J, h) in enumerate(zip(n_modes, half_width)):
        shape = [1] * len(n_modes)
        shape[ax] = J
        lam = lam + axis_eigenvalues(J, h).reshape(shape)
    return lam


def eigenfunction_1d(j: int, x: np.ndarray, half_width: float) -> np.ndarray:
    return np.sin(j * np.pi * (x + half_width) / (2.0 * half_width)) / np.sqrt(half_width)
