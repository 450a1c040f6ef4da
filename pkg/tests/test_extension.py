import numpy as np
import pytest
from scipy.special import gamma as G

from fraclap.domain import BubbleParams, GridFunction, UniformGrid, laplacian_power_k, make_bubble, smooth_bump
from fraclap.errors import CalibrationError, PreconditionError, QuadratureError, TruncationError
from fraclap.extension import (
    CylinderGrid,
    c2_ratios,
    calibrate_c2,
    calibrated_c2,
    cylinder_navier,
    cylinder_navier_dual,
    default_witnesses,
    dual_value,
    energy_direct,
    field_to_table,
    neumann_defect,
    poisson_direct,
    poisson_dual,
    q_dirichlet_dual,
    weighted_residual,
)
from fraclap.fourier import q_dirichlet
from fraclap.navier import SineBasis, expand, q_navier


def c2_closed_form(sigma):
    # half-space Dirichlet-to-Neumann constant for the y^{1-2 sigma} weight
    return 2 ** (2 * sigma - 1) * G(sigma) / G(1 - sigma)


@pytest.fixture(scope="module")
def base():
    return UniformGrid.cube(1, 1.0, 1024)


@pytest.fixture(scope="module")
def u(base):
    return make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), base)


@pytest.fixture(scope="module")
def probe(base):
    # not one of the calibration witnesses
    return make_bubble(BubbleParams(1, 0.3, 0.2, 0.3), base)


@pytest.fixture(scope="module")
def spectral(u):
    return expand(u, SineBasis(u.grid.domain, u.grid.shape[0] // 2))


def zero(base):
    return GridFunction(base, np.zeros(base.shape), 0.5)


def test_grid_requires_tall_cylinder(base):
    with pytest.raises(PreconditionError):
        CylinderGrid.graded(base, 0.4, Y=5.0)


def test_grid_is_one_dimensional():
    g2 = UniformGrid.cube(2, 1.0, 16)
    with pytest.raises(PreconditionError):
        CylinderGrid.graded(g2, 0.4)


def test_refined_grid_is_nested(base):
    grid = CylinderGrid.graded(base, 0.4, M=24)
    fine = grid.refined()
    assert fine.M == 48
    assert np.allclose(fine.y_nodes[::2], grid.y_nodes, rtol=1e-12, atol=0)


def test_zero_datum_gives_zero_fields(base):
    grid = CylinderGrid.graded(base, 0.4, M=24)
    w = poisson_direct(zero(base), 0.4, grid)
    assert not np.any(w.values)
    assert energy_direct(w) == 0.0
    assert not np.any(poisson_dual(zero(base), 0.4, grid).values)
    assert cylinder_navier(zero(base), 0.4, grid) == 0.0
    assert cylinder_navier_dual(zero(base), 0.4, grid) == 0.0
    assert q_dirichlet_dual(zero(base), 1.6, grid) == 0.0


def test_trace_recovery(base, u):
    grid = CylinderGrid.graded(base, 0.4)
    w = poisson_direct(u, 0.4, grid)
    x = grid.x_nodes
    inside = np.abs(x) <= 0.2
    err = np.abs(w.values[inside, 1] - w.trace_datum[inside]).max() / np.abs(u.values).max()
    assert err < 0.01


def test_unresolved_layer_raises(base, u):
    grid = CylinderGrid.graded(base, 0.4, M=8, gamma=1.0)
    with pytest.raises(QuadratureError):
        poisson_direct(u, 0.4, grid)


def test_short_lateral_range_raises(base, u):
    grid = CylinderGrid.graded(base, 0.4, X=1.0)
    w = poisson_direct(u, 0.4, grid)
    with pytest.raises(TruncationError):
        energy_direct(w)
    assert energy_direct(w, strict=False) > 0


def test_far_field_decay_direct(base, u):
    grid = CylinderGrid.graded(base, 0.4, M=48)
    w = poisson_direct(u, 0.4, grid)
    j = np.argmin(np.abs(grid.y_nodes - 1.0))
    x = grid.x_nodes
    sel = x >= 0.5
    assert np.all(np.diff(w.values[sel, j]) < 0)
    assert np.all(w.values[sel, j] > 0)


def test_far_field_decay_dual(base, u):
    grid = CylinderGrid.graded(base, 0.4, M=48)
    w = poisson_dual(u, 0.4, grid)
    j = np.argmin(np.abs(grid.y_nodes - 1.0))
    x = grid.x_nodes
    sel = x >= 0.5
    assert np.all(np.diff(w.values[sel, j]) < 0)


def test_doubling_height_is_stable(base, u):
    e1 = energy_direct(poisson_direct(u, 0.4, CylinderGrid.graded(base, 0.4)))
    e2 = energy_direct(poisson_direct(u, 0.4, CylinderGrid.graded(base, 0.4, M=128, Y=40.0)))
    assert abs(e2 - e1) < 0.005 * e1


def test_calibrated_c2_matches_closed_form(base):
    c2 = calibrate_c2(0.4, default_witnesses(base))
    assert c2 == pytest.approx(c2_closed_form(0.4), rel=0.01)


def test_calibration_equal_witnesses(base, u):
    r = c2_ratios(0.4, [u, u, u])
    assert r.std() == 0.0


def test_calibration_scale_invariant(base, u, probe):
    ws = [u, probe, smooth_bump(base, 0.6)]
    r1 = c2_ratios(0.4, ws)
    r2 = c2_ratios(0.4, [GridFunction(w.grid, 2.0 * w.values, w.support_radius) for w in ws])
    assert np.allclose(r1, r2, rtol=1e-10)


def test_calibration_needs_three_witnesses(u):
    with pytest.raises(PreconditionError):
        calibrate_c2(0.4, [u, u])


def test_calibration_failure_flagged(base):
    with pytest.raises(CalibrationError):
        calibrate_c2(0.4, default_witnesses(base), max_cv=1e-9)


def test_calibration_stable_under_refinement():
    coarse = calibrate_c2(0.5, default_witnesses(UniformGrid.cube(1, 1.0, 512)))
    fine = calibrate_c2(0.5, default_witnesses(UniformGrid.cube(1, 1.0, 1024)))
    assert abs(fine - coarse) < 0.01 * fine


@pytest.mark.parametrize("sigma", [0.25, 0.4, 0.5, 0.75])
def test_direct_identity(base, probe, sigma):
    grid = CylinderGrid.graded(base, sigma)
    e = energy_direct(poisson_direct(probe, sigma, grid))
    ref = q_dirichlet(probe, sigma)
    assert calibrated_c2(grid) * e == pytest.approx(ref, rel=0.01)
    assert c2_closed_form(sigma) * e == pytest.approx(ref, rel=0.01)


def test_cylinder_navier_matches_spectral(base, u, spectral):
    grid = CylinderGrid.graded(base, 0.4)
    val = cylinder_navier(u, 0.4, grid)
    ref = q_navier(spectral, 0.4)
    assert val == pytest.approx(ref, rel=0.02)
    assert val >= ref * (1 - 0.02)


def test_cylinder_navier_decreases_under_refinement(base, u):
    grid = CylinderGrid.graded(base, 0.4, M=24)
    vals = []
    for _ in range(3):
        vals.append(cylinder_navier(u, 0.4, grid, c2=1.0))
        grid = grid.refined()
    assert vals[0] > 0
    assert vals[0] >= vals[1] >= vals[2]


def test_cylinder_navier_dual_increases_under_refinement(base, u):
    gk = laplacian_power_k(u, 1)
    grid = CylinderGrid.graded(base, 0.4, M=24)
    vals = []
    for _ in range(3):
        vals.append(cylinder_navier_dual(gk, 0.4, grid, c2=1.0))
        grid = grid.refined()
    assert vals[0] <= vals[1] <= vals[2]


def test_cylinder_navier_dual_matches_spectral(base, u, spectral):
    gk = laplacian_power_k(u, 1)
    grid = CylinderGrid.graded(base, 0.4)
    val = cylinder_navier_dual(gk, 0.4, grid)
    ref = q_navier(spectral, 1.6)
    assert val == pytest.approx(ref, rel=0.02)
    assert val <= ref * (1 + 0.02)


def test_neumann_datum(base, u):
    gk = laplacian_power_k(u, 1)
    w = poisson_dual(gk, 0.4, CylinderGrid.graded(base, 0.4))
    assert neumann_defect(w) < 0.02


def test_log_branch_continuity(base, u):
    gk = laplacian_power_k(u, 1)
    y = CylinderGrid.graded(base, 0.5).y_nodes
    fields = [poisson_dual(gk, s, CylinderGrid(base, y, s, 20.0)) for s in (0.499, 0.5, 0.501)]
    lo, mid, hi = (dual_value(w) for w in fields)
    assert min(lo, hi) * (1 - 0.01) <= mid <= max(lo, hi) * (1 + 0.01)
    a, b, c = (w.values[:, 0] for w in fields)
    scale = np.abs(b).max()
    assert np.all(b >= np.minimum(a, c) - 0.01 * scale)
    assert np.all(b <= np.maximum(a, c) + 0.01 * scale)


@pytest.mark.parametrize("m", [1.25, 1.5, 1.75])
def test_dual_identity(base, u, m):
    grid = CylinderGrid.graded(base, 2 - m)
    assert q_dirichlet_dual(u, m, grid) == pytest.approx(q_dirichlet(u, m), rel=0.05)


def test_dual_homogeneity(base, u):
    grid = CylinderGrid.graded(base, 0.5)
    v = GridFunction(u.grid, 2.0 * u.values, u.support_radius)
    c2 = calibrated_c2(grid)
    assert q_dirichlet_dual(v, 1.5, grid, c2) == pytest.approx(4 * q_dirichlet_dual(u, 1.5, grid, c2), rel=1e-10)


def test_dual_rejects_even_orders(base, u):
    from fraclap.errors import InvalidOrderError

    with pytest.raises(InvalidOrderError):
        q_dirichlet_dual(u, 0.4, CylinderGrid.graded(base, 0.4, M=24))


def test_weighted_residual_decays_under_refinement():
    res = []
    for N, M in ((256, 24), (512, 48), (1024, 96)):
        g = UniformGrid.cube(1, 1.0, N)
        u = make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), g)
        res.append(weighted_residual(poisson_direct(u, 0.4, CylinderGrid.graded(g, 0.4, M=M))))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 1.0)


def test_field_table_layout(base, u):
    grid = CylinderGrid.graded(base, 0.4, M=24)
    w = poisson_direct(u, 0.4, grid)
    t = field_to_table(w)
    assert t.shape == (grid.x_nodes.size * grid.y_nodes.size, 3)
    assert t[1, 0] == t[0, 0] and t[1, 1] > t[0, 1]
    assert np.array_equal(t[:, 2], w.values.ravel())
