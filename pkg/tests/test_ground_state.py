import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fraclap.domain import BubbleParams, GridFunction, UniformGrid, hardy_integral, lp_norm, make_bubble
from fraclap.errors import DegenerateInputError, ExtrapolationError, InvalidOrderError, PreconditionError
from fraclap.fourier import q_dirichlet
from fraclap.ground_state import (
    HARDY,
    SCAN_COLUMNS,
    SPECTRAL,
    BNProblem,
    bubble_curve,
    critical_scan,
    minimize,
    numerator_gradient,
    rayleigh,
    sobolev_ladder,
    sobolev_reference,
    write_scan,
)
from fraclap.navier import SpectralCoeffs, expand, q_navier

P04 = 2.0 / (1.0 - 0.8)  # critical exponent for n=1, m=0.4


@pytest.fixture(scope="module")
def small():
    return BNProblem.build(HARDY, 1, 0.4, 0.3, lam=0.1, J=64)


@pytest.fixture(scope="module")
def bubble_coeffs(small):
    u = make_bubble(BubbleParams(1, 0.4, 0.1, 0.3), small.grid)
    return expand(u, small.basis)


@pytest.fixture(scope="module")
def sobolev():
    return sobolev_reference(1, 0.4)


def oracle_field(c: SpectralCoeffs, g: UniformGrid) -> np.ndarray:
    # explicit sum over modes, no fast transform
    x = g.axis(0)
    return sum(cj * c.basis.eigenfunction(j + 1, x) for j, cj in enumerate(c.coeffs))


def oracle_quotient(c, prob):
    u = oracle_field(c, prob.grid)
    num = np.sum(prob.basis.eigenvalues**prob.m * np.asarray(c.coeffs) ** 2)
    if prob.variant == SPECTRAL:
        pert = np.sum(prob.basis.eigenvalues**prob.s * np.asarray(c.coeffs) ** 2)
    else:
        pert = hardy_integral(GridFunction(prob.grid, u), prob.s)
    den = (np.sum(np.abs(u) ** P04) * prob.grid.cell_volume) ** (2 / P04)
    return (num - prob.lam * pert) / den


def test_orders_validated():
    with pytest.raises(InvalidOrderError):
        BNProblem.build(HARDY, 1, 0.4, 0.5, lam=0.0, J=32)
    with pytest.raises(InvalidOrderError):
        BNProblem.build(HARDY, 1, 0.6, 0.3, lam=0.0, J=32)


def test_lambda_given_once():
    with pytest.raises(PreconditionError):
        BNProblem.build(HARDY, 1, 0.4, 0.3, J=32)
    with pytest.raises(PreconditionError):
        BNProblem.build(HARDY, 1, 0.4, 0.3, lam=0.1, lambda_frac=0.1, J=32)


def test_rayleigh_first_mode():
    prob = BNProblem.build(SPECTRAL, 1, 0.4, 0.3, lam=0.0, J=64)
    c = SpectralCoeffs.unit(prob.basis)
    norm = integrate.quad(lambda x: np.cos(np.pi * x / 2) ** P04, -1, 1, epsabs=1e-14)[0] ** (1 / P04)
    expected = (np.pi / 2) ** 0.8 / norm**2
    assert rayleigh(c, prob) == pytest.approx(expected, rel=1e-10)


@given(st.floats(-100, 100).filter(lambda a: abs(a) > 1e-3))
def test_rayleigh_homogeneous(small, bubble_coeffs, alpha):
    assert rayleigh(bubble_coeffs * alpha, small) == pytest.approx(rayleigh(bubble_coeffs, small), rel=1e-12)


@pytest.mark.parametrize("variant", [HARDY, SPECTRAL])
def test_rayleigh_matches_oracle(variant, small, bubble_coeffs):
    prob = BNProblem(variant, 1, 0.4, 0.3, 0.1, small.domain, small.basis, small.grid)
    value = rayleigh(bubble_coeffs, prob)
    assert value > 0
    assert value == pytest.approx(oracle_quotient(bubble_coeffs, prob), rel=1e-8)


def test_rayleigh_zero_is_degenerate(small):
    with pytest.raises(DegenerateInputError):
        rayleigh(SpectralCoeffs(small.basis, np.zeros(small.basis.shape)), small)


def test_gradient_matches_finite_differences(small, bubble_coeffs):
    def numerator(c):
        sc = SpectralCoeffs(small.basis, c)
        u = GridFunction(small.grid, oracle_field(sc, small.grid))
        return q_navier(sc, small.m) - small.lam * hardy_integral(u, small.s)

    c0 = np.asarray(bubble_coeffs.coeffs)
    grad = numerator_gradient(bubble_coeffs, small)
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = rng.standard_normal(c0.shape)
        h = 1e-4 * np.linalg.norm(c0) / np.linalg.norm(d)
        fd = (numerator(c0 + h * d) - numerator(c0 - h * d)) / (2 * h)
        assert grad.ravel() @ d.ravel() == pytest.approx(fd, rel=1e-6)


@given(st.floats(0.0, 0.5), st.floats(0.01, 0.5))
def test_rayleigh_decreases_in_lambda(small, bubble_coeffs, lam, step):
    lo = rayleigh(bubble_coeffs, small.with_lambda(lam))
    hi = rayleigh(bubble_coeffs, small.with_lambda(lam + step))
    assert hi < lo


def test_minimum_nonincreasing_in_lambda(sobolev):
    base = BNProblem.build(HARDY, 1, 0.4, 0.3, lam=0.0, J=64)
    window = base.eigen_quotient()
    values = [minimize(base.with_lambda(f * window), sobolev=sobolev).value for f in (0.0, 0.1, 0.3)]
    assert all(v > 0 for v in values)
    assert values[0] >= values[1] >= values[2]


def test_minimum_below_every_start(small, sobolev):
    rep = minimize(small, restarts=4, seed=3, sobolev=sobolev)
    assert rep.value <= min(rep.restart_values)
    assert rep.value <= rayleigh(SpectralCoeffs.unit(small.basis), small)
    assert rep.el_residual <= 1e-6
    assert rep.below_sobolev == (rep.value < rep.sobolev_ref - 3 * rep.tolerance)


def test_minimize_is_deterministic(small, sobolev):
    a = minimize(small, seed=5, sobolev=sobolev)
    b = minimize(small, seed=5, sobolev=sobolev, threads=3)
    assert a.value == b.value
    assert np.array_equal(a.minimizer.coeffs, b.minimizer.coeffs)


def test_minimize_preconditions(small, sobolev):
    with pytest.raises(PreconditionError):
        minimize(small, restarts=2, sobolev=sobolev)
    with pytest.raises(PreconditionError):
        minimize(small.with_lambda(2 * small.eigen_quotient()), sobolev=sobolev)


def test_unperturbed_minimum_stays_at_sobolev_level(sobolev):
    prob = BNProblem.build(HARDY, 1, 0.4, 0.3, lam=0.0)
    rep = minimize(prob, sobolev=sobolev)
    assert rep.value >= sobolev.value * (1 - 0.005)
    assert not rep.below_sobolev


def test_perturbed_minimum_below_sobolev(sobolev):
    prob = BNProblem.build(HARDY, 1, 0.4, 0.3, lambda_frac=0.1)
    rep = minimize(prob, sobolev=sobolev)
    assert rep.el_residual <= 1e-6
    assert rep.below_sobolev


def test_bubble_quotient_homogeneous():
    g = UniformGrid.cube(1, 1.0, 1024)
    u = make_bubble(BubbleParams(1, 0.4, 0.1, 0.25), g)
    v = u * 3.0
    a = q_dirichlet(u, 0.4) / lp_norm(u, P04) ** 2
    b = q_dirichlet(v, 0.4) / lp_norm(v, P04) ** 2
    assert a == pytest.approx(b, rel=1e-12)


def test_ladder_quotients_decrease(sobolev):
    q = np.array(sobolev.quotients)
    assert np.all(np.diff(q) < 0)
    assert sobolev.value < q[-1]


def test_two_ladders_agree(sobolev):
    other = sobolev_ladder(1, 0.4, delta=0.4)
    assert abs(other.value - sobolev.value) <= 0.005 * sobolev.value


def test_ladder_rejects_short_or_supercritical():
    with pytest.raises(PreconditionError):
        sobolev_ladder(1, 0.4, [0.1, 0.01, 0.001])
    with pytest.raises(InvalidOrderError):
        sobolev_ladder(1, 0.5)


def test_ladder_requires_decrease(monkeypatch):
    from fraclap import ground_state

    fake = {0.1: 1.0, 0.05: 0.9, 0.02: 0.95, 0.01: 0.8}
    monkeypatch.setattr(ground_state, "bubble_quotient", lambda n, m, eps, delta, pad: fake[eps])
    with pytest.raises(ExtrapolationError):
        sobolev_ladder(1, 0.4, list(fake))


def test_bubble_curve_without_perturbation(sobolev):
    prob = BNProblem.build(HARDY, 1, 0.4, 0.35, lam=0.0)
    curve = bubble_curve(prob, [0.1, 0.03, 0.01, 0.003, 0.001])
    assert len(curve) == 5
    assert all(v >= sobolev.value * (1 - 0.005) for _, v in curve)


def test_bubble_curve_dips_below_sobolev(sobolev):
    prob = BNProblem.build(HARDY, 1, 0.4, 0.35, lam=0.05)
    curve = bubble_curve(prob, [0.1, 0.03, 0.01, 0.003, 0.001])
    assert min(v for _, v in curve) < sobolev.value


def test_bubble_curve_preconditions():
    prob = BNProblem.build(HARDY, 1, 0.4, 0.35, lam=0.0, J=32)
    with pytest.raises(PreconditionError):
        bubble_curve(prob, [0.1], delta=0.6)
    with pytest.raises(PreconditionError):
        bubble_curve(prob, [0.0])
    with pytest.raises(PreconditionError):
        bubble_curve(prob, [1e-7])


def test_scan_skips_inadmissible_cells(tmp_path):
    rows = critical_scan(1, [0.3], [0.3, 0.4], 0.1, J=32)
    assert [r["status"] for r in rows] == ["skipped", "skipped"]
    path = tmp_path / "scan.csv"
    write_scan(path, rows)
    header = path.read_text().splitlines()[0]
    assert tuple(header.split(",")) == SCAN_COLUMNS


def test_scan_rejects_lambda_fraction():
    with pytest.raises(PreconditionError):
        critical_scan(1, [0.4], [0.3], 0.0)


def test_scan_records_below_sobolev():
    rows = critical_scan(1, [0.4], [0.3], 0.1, J=128)
    assert rows[0]["status"] == "ok" and rows[0]["noncritical"]
    assert rows[0]["below_sobolev"]


@pytest.mark.slow
def test_scan_two_dimensional():
    rows = critical_scan(2, [0.5, 0.75], [0.0, 0.5], 0.1, J=32)
    ran = [r for r in rows if r["status"] == "ok" and r["noncritical"] and r["s"] == 2 * r["m"] - 1]
    assert len(ran) == 2
    assert all(r["below_sobolev"] for r in ran)
