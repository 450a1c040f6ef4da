import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gamma

from conftest import bump_formula
from fraclap import fourier
from fraclap.domain import BoxDomain, BubbleParams, GridFunction, UniformGrid, embed, from_function, l1_norm, lp_norm, make_bubble, smooth_bump
from fraclap.errors import AliasingError, ConvergenceError, IllConditionedWarning, InvalidOrderError, PreconditionError
from fraclap.fourier import FLOOR_EVEN, FLOOR_ODD, INTEGER, FormOrder, dilate, dilation_check, gagliardo_form, q_dirichlet, transform


def seminorm_ratio(n, sigma):
    """2 / C(n, sigma): Gagliardo double integral over Q_sigma for the standard normalisation."""
    c = 4**sigma * gamma(n / 2 + sigma) / (np.pi ** (n / 2) * abs(gamma(-sigma)))
    return 2.0 / c


@pytest.fixture(scope="module")
def test_functions():
    g = UniformGrid.cube(1, 1.0, 1024)
    return [
        make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), g),
        make_bubble(BubbleParams(1, 0.25, 0.2, 0.3), g),
        make_bubble(BubbleParams(1, 0.1, 1.0, 0.2), g),
        smooth_bump(g, 0.6),
        smooth_bump(g, 0.3, amplitude=2.0, center=[0.2]),
    ]


@pytest.mark.parametrize("m,k,sigma,parity", [
    (0.4, 0, 0.4, FLOOR_EVEN), (1.5, 1, 0.5, FLOOR_ODD), (1.25, 1, 0.75, FLOOR_ODD),
    (2.4, 1, 0.4, FLOOR_EVEN), (1.0, 1, 0.0, INTEGER), (2.0, 2, 0.0, INTEGER),
])
def test_form_order_decomposition(m, k, sigma, parity):
    o = FormOrder.from_m(m)
    assert (o.k, o.parity) == (k, parity)
    assert o.sigma == pytest.approx(sigma)


@pytest.mark.parametrize("m", [0.0, 3.0, 3.5, -0.2])
def test_form_order_rejects_unsupported(m):
    with pytest.raises(InvalidOrderError):
        FormOrder.from_m(m)


def test_transform_zero():
    g = UniformGrid.cube(1, 1.0, 64)
    spec = transform(GridFunction(g, np.zeros(64)), 4)
    assert not np.any(spec.modal_amplitudes)
    assert spec.modal_amplitudes.shape == (256,)


@pytest.mark.parametrize("n,N", [(1, 512), (2, 64)])
def test_transform_parseval(n, N):
    u = smooth_bump(UniformGrid.cube(n, 1.0, N), 0.6)
    spec = transform(u, 4)
    lhs = np.sum(np.abs(spec.modal_amplitudes) ** 2) * spec.cell
    assert lhs == pytest.approx(lp_norm(u, 2) ** 2, rel=1e-10)


def test_transform_zero_frequency(bubble1024):
    spec = transform(bubble1024, 8)
    assert abs(spec.modal_amplitudes[0] - l1_norm(bubble1024) / np.sqrt(2 * np.pi)) < 1e-8


def test_transform_phase_refers_to_origin():
    # an even real function has a real transform once the phase refers to x = 0
    u = smooth_bump(UniformGrid.cube(1, 1.0, 256), 0.5)
    spec = transform(u, 4)
    assert np.max(np.abs(spec.modal_amplitudes.imag)) < 1e-12


def test_transform_preconditions():
    g = UniformGrid.cube(1, 1.0, 64)
    with pytest.raises(PreconditionError):
        transform(smooth_bump(g, 0.5), 2)
    with pytest.raises(AliasingError):
        transform(GridFunction(g, np.ones(64)), 4)


def test_q_dirichlet_m0_is_l2(bubble1024):
    assert q_dirichlet(bubble1024, 0.0) == pytest.approx(lp_norm(bubble1024, 2) ** 2, rel=1e-12)


def test_q_dirichlet_sine_dirichlet_integral():
    # u = sin(pi(x+1)/2) on (-1, 1), zero outside: int |u'|^2 = pi^2/4
    g = UniformGrid.cube(1, 2.0, 16384)
    x = g.axis(0)
    u = GridFunction(g, np.where(np.abs(x) < 1, np.sin(np.pi * (x + 1) / 2), 0.0))
    assert q_dirichlet(u, 1.0) == pytest.approx(np.pi**2 / 4, rel=1e-4)


def test_q_dirichlet_matches_gagliardo_oracle(bubble1024):
    ratio = gagliardo_form(bubble1024, 0.4) / q_dirichlet(bubble1024, 0.4)
    assert ratio == pytest.approx(seminorm_ratio(1, 0.4), rel=1e-3)


def test_q_dirichlet_integer_consistency_2d():
    # radial bump in 2D: int |grad u|^2 = 2 pi int r u'(r)^2 dr
    u = smooth_bump(UniformGrid.cube(2, 1.0, 128), 0.6)

    def du(r):
        q = 1 - (r / 0.6) ** 2
        return bump_formula(r) * (-2 * r / 0.36) / q**2 if r < 0.6 else 0.0

    ref, _ = integrate.quad(lambda r: 2 * np.pi * r * du(r) ** 2, 0, 0.6, epsabs=0, epsrel=1e-12)
    assert q_dirichlet(u, 1.0) == pytest.approx(ref, rel=1e-6)


def test_q_dirichlet_m1_second_order_against_grid_dirichlet_integral():
    diffs = []
    for N in (256, 512):
        u = smooth_bump(UniformGrid.cube(1, 1.0, N), 0.6)
        grad = np.diff(u.values) / u.grid.spacing[0]
        grid_integral = np.sum(grad**2) * u.grid.spacing[0]
        diffs.append(abs(q_dirichlet(u, 1.0) - grid_integral))
    assert diffs[0] / diffs[1] > 3.5


def test_q_dirichlet_domain_independent(bubble1024):
    big = embed(bubble1024, BoxDomain(1, 2.0))
    assert q_dirichlet(big, 0.4) == pytest.approx(q_dirichlet(bubble1024, 0.4), rel=1e-9)


@given(amp=st.floats(0.1, 10.0), radius=st.floats(0.1, 0.8), m=st.floats(0.05, 2.9))
def test_q_dirichlet_positive(amp, radius, m):
    u = smooth_bump(UniformGrid.cube(1, 1.0, 256), radius, amplitude=amp)
    assert q_dirichlet(u, m, 4) > 0


@given(m=st.floats(0.05, 2.5))
def test_q_dirichlet_continuous_in_m(m):
    u = make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), UniformGrid.cube(1, 1.0, 256))
    a, b = q_dirichlet(u, m, 4), q_dirichlet(u, m + 1e-3, 4)
    assert abs(a - b) < 0.01 * a


def test_q_dirichlet_padding_flag(monkeypatch, bubble1024):
    monkeypatch.setattr(fourier, "_raw_form", lambda u, m, pad: 1.0 + 1.0 / pad)
    with pytest.raises(ConvergenceError):
        q_dirichlet(bubble1024, 0.4, strict=True)
    with pytest.warns(Warning):
        q_dirichlet(bubble1024, 0.4)


def test_q_dirichlet_stable_under_padding(bubble1024):
    vals = [q_dirichlet(bubble1024, 0.4, p) for p in (4, 8, 16)]
    assert max(vals) - min(vals) < 1e-6 * vals[0]


def test_q_dirichlet_order_range(bubble1024):
    with pytest.raises(InvalidOrderError):
        q_dirichlet(bubble1024, 3.0)


def test_gagliardo_zero():
    g = UniformGrid.cube(1, 1.0, 128)
    assert gagliardo_form(GridFunction(g, np.zeros(128)), 0.4) == 0.0


def test_gagliardo_homogeneity():
    # u(x/2) has seminorm 2^{n - 2 sigma} times that of u
    g = UniformGrid.cube(1, 2.0, 2048)
    u = smooth_bump(g, 0.5)
    v = from_function(g, lambda x: bump_formula(x / 2, 0.5), support_radius=1.0)
    assert gagliardo_form(v, 0.3) == pytest.approx(2 ** (1 - 0.6) * gagliardo_form(u, 0.3), rel=1e-3)


@pytest.mark.parametrize("sigma", [0.25, 0.4, 0.75])
def test_gagliardo_ratio_constant_across_inputs(test_functions, sigma):
    ratios = np.array([gagliardo_form(u, sigma) / q_dirichlet(u, sigma) for u in test_functions])
    assert np.ptp(ratios) / ratios.mean() < 1e-3
    assert ratios.mean() == pytest.approx(seminorm_ratio(1, sigma), rel=1e-3)


def test_gagliardo_ratio_2d():
    g = UniformGrid.cube(2, 1.0, 128)
    for u in (smooth_bump(g, 0.6), make_bubble(BubbleParams(2, 0.5, 0.3, 0.25), g)):
        ratio = gagliardo_form(u, 0.4) / q_dirichlet(u, 0.4)
        assert ratio == pytest.approx(seminorm_ratio(2, 0.4), rel=1e-3)


@pytest.mark.parametrize("sigma", [1e-4, 1 - 1e-4])
def test_gagliardo_ill_conditioned_warning(sigma):
    u = smooth_bump(UniformGrid.cube(1, 1.0, 128), 0.5)
    with pytest.warns(IllConditionedWarning):
        gagliardo_form(u, sigma)


def test_gagliardo_rejects_sigma_out_of_range():
    u = smooth_bump(UniformGrid.cube(1, 1.0, 128), 0.5)
    with pytest.raises(InvalidOrderError):
        gagliardo_form(u, 1.0)


def test_dilation_identity_at_t1(bubble1024):
    lhs, rhs = dilation_check(bubble1024, 0.4, 1.0)
    assert lhs == rhs


def test_dilation_m0():
    g = UniformGrid.cube(1, 2.0, 2048)
    u = make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), g)
    lhs, rhs = dilation_check(u, 0.0, 2.0)
    assert lhs == pytest.approx(rhs, rel=1e-6)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_dilation_law(t):
    g = UniformGrid.cube(1, 2.0, 2048)
    u = make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), g)
    lhs, rhs = dilation_check(u, 0.4, t)
    assert abs(lhs - rhs) / rhs <= 1e-3


def test_dilation_support_precondition(bubble1024):
    with pytest.raises(PreconditionError):
        dilate(bubble1024, 2.0)
