import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from density_filter.dynamics import DiffusionModel, MixtureScenario, VelocityField
from density_filter.filtering import (
    CovarianceOperator,
    FilterState,
    NoiseCovariance,
    filter_step,
    gain_gap,
    init_filter,
    kalman_gain,
    measurement_update,
    noise_covariance,
    open_loop_step,
    oracle_filter_step,
    predict,
    riccati_step,
    riccati_substeps,
)
from density_filter.fpops import (
    FpOperator,
    advance,
    assemble_operator,
    stable_substep,
    step_matrix,
)
from density_filter.grid import DensityField, build_grid, integrate
from density_filter.kde import DENSITY_FLOOR, KdeConfig, NoiseScale, compute_kbar

UNIT = build_grid(30, 30, [0, 1, 0, 1])
SMALL = build_grid(8, 8, [0, 1, 0, 1])
KBAR = compute_kbar(300, KdeConfig(0.05))


def _scalar_R(r=1.0):
    return NoiseCovariance(np.array([r]), NoiseScale(1.0))


def _zero_operator(g):
    return FpOperator(sp.csr_matrix((g.size, g.size)), 0.0, g)


def _benchmark_operator(g, t=0.0):
    sc = MixtureScenario()
    return assemble_operator(g, sc.velocity_field(), sc.noise(), t)


def _blended_density(g, t=0.0):
    # bounded below, so the noise model has no floored cells
    p = 0.5 + 0.5 * MixtureScenario().density(g.centers(), t)
    return DensityField(g, p / g.integrate(p), t)


# noise model and gain


def test_noise_covariance_examples():
    kbar = NoiseScale(0.10610)
    R = noise_covariance(DensityField.constant(UNIT, 1.0), kbar)
    np.testing.assert_allclose(R.diag_values, 0.10610, rtol=1e-15)
    v = np.ones(UNIT.size)
    v[7] = 0.0
    R = noise_covariance(DensityField(UNIT, v), kbar)
    assert R.diag_values[7] == pytest.approx(0.10610 * DENSITY_FLOOR)
    assert R.diag_values.min() > 0
    R2 = noise_covariance(DensityField(UNIT, v), NoiseScale(2 * 0.10610))
    np.testing.assert_allclose(R2.diag_values, 2 * R.diag_values, rtol=1e-15)


def test_noise_covariance_rejects_non_finite():
    f = DensityField.constant(UNIT, 1.0)
    f.values[3] = np.inf
    with pytest.raises(ValueError):
        noise_covariance(f, KBAR)


def test_kbar_matches_compute_kbar():
    assert KBAR.kbar == pytest.approx(0.10610, abs=1e-4)


def test_gain_examples():
    n = SMALL.size
    R = NoiseCovariance(np.full(n, 0.25), KBAR)
    np.testing.assert_allclose(kalman_gain(CovarianceOperator.identity(n), R), 4 * np.eye(n))
    assert np.all(kalman_gain(CovarianceOperator(np.zeros((n, n))), R) == 0)
    pk = np.linspace(0.1, 2.0, n)
    R = noise_covariance(DensityField.constant(SMALL, 1.0), KBAR)
    L = kalman_gain(CovarianceOperator(np.diag(pk)), R)
    np.testing.assert_allclose(L, np.diag(pk / KBAR.kbar), rtol=1e-14)


def test_gain_gap_zero_for_identical_noise():
    R = noise_covariance(_blended_density(SMALL), KBAR)
    P = CovarianceOperator.identity(SMALL.size)
    assert gain_gap(P, R, R) == 0.0
    R2 = NoiseCovariance(R.diag_values * 1.01, KBAR)
    assert gain_gap(P, R2, R) == pytest.approx(
        np.linalg.norm(1 / R2.diag_values - 1 / R.diag_values), rel=1e-12
    )


# Riccati integration


def test_scalar_riccati_one_step():
    P = riccati_step(CovarianceOperator(np.array([[1.0]])), None, _scalar_R(), 0.1)
    assert P.matrix[0, 0] == pytest.approx(0.9, abs=1e-15)
    exact = 1 / (1 + 0.1)
    assert P.matrix[0, 0] - exact == pytest.approx(-0.00909, abs=1e-4)
    assert P.time == pytest.approx(0.1)


def test_scalar_riccati_first_order_convergence():
    def run(dt):
        P = CovarianceOperator(np.array([[1.0]]))
        for _ in range(int(round(1 / dt))):
            P = riccati_step(P, None, _scalar_R(), dt)
        return abs(P.matrix[0, 0] - 0.5)

    e1, e2 = run(1e-2), run(5e-3)
    assert e1 / e2 == pytest.approx(2.0, rel=0.05)


def test_diagonal_riccati_decouples():
    r = np.array([0.5, 1.0, 2.0, 4.0])
    p0 = np.array([1.0, 3.0, 0.2, 1.0])
    R = NoiseCovariance(r, NoiseScale(1.0))
    P = CovarianceOperator(np.diag(p0))
    scalars = p0.copy()
    for _ in range(50):
        P = riccati_step(P, None, R, 0.05)
        scalars = scalars - 0.05 * scalars**2 / r
    assert np.count_nonzero(P.matrix - np.diag(np.diag(P.matrix))) == 0
    np.testing.assert_allclose(np.diag(P.matrix), scalars, rtol=1e-14)


def test_riccati_substeps_cover_both_bounds():
    A = _benchmark_operator(SMALL)
    R = noise_covariance(_blended_density(SMALL), KBAR)
    P = CovarianceOperator.identity(SMALL.size, 50.0)
    m, h = riccati_substeps(P, A, R, 0.1)
    assert 2 * h * A.max_outflow <= 0.9 + 1e-12
    assert h * np.max(np.diag(P.matrix) / R.diag_values) <= 0.9 + 1e-12


def test_riccati_dimension_mismatch():
    R = NoiseCovariance(np.ones(5), KBAR)
    with pytest.raises(ValueError):
        riccati_step(CovarianceOperator.identity(4), None, R, 0.1)


def _self_convergence_gap(g, t_end=1.0):
    A = _benchmark_operator(g)
    R = noise_covariance(DensityField.constant(g, 1.0), KBAR)

    def run(dt):
        P = CovarianceOperator.identity(g.size)
        for _ in range(int(round(t_end / dt))):
            P = riccati_step(P, A, R, dt)
        return P.matrix

    coarse, fine = run(1e-3), run(1e-4)
    return np.linalg.norm(coarse - fine) / np.linalg.norm(fine)


def test_riccati_self_convergence_small_grid():
    assert _self_convergence_gap(build_grid(10, 10, [0, 1, 0, 1])) <= 1e-2


@pytest.mark.slow
def test_riccati_self_convergence_benchmark_grid():
    assert _self_convergence_gap(UNIT) <= 1e-2


def _hamiltonian_riccati(a, r_inv, t_end, pieces):
    """Exact P(t) for constant A, R via P = X Y^-1, d[X; Y]/dt = [[A, 0], [R^-1, -A^T]] [X; Y]."""
    n = len(r_inv)
    step = sl.expm((t_end / pieces) * np.block([[a, np.zeros((n, n))], [np.diag(r_inv), -a.T]]))
    P = np.eye(n)
    for _ in range(pieces):  # restart each piece to keep Y well conditioned
        xy = step @ np.vstack([P, np.eye(n)])
        P = np.linalg.solve(xy[n:].T, xy[:n].T).T
    return P


def test_riccati_first_order_against_exact_flow():
    g = build_grid(10, 10, [0, 1, 0, 1])
    A = _benchmark_operator(g)
    R = noise_covariance(DensityField.constant(g, 1.0), KBAR)
    exact = _hamiltonian_riccati(A.matrix.toarray(), R.inverse, 0.5, 10)
    errors = []
    for dt in (2e-3, 1e-3):
        P = CovarianceOperator.identity(g.size)
        for _ in range(int(round(0.5 / dt))):
            P = riccati_step(P, A, R, dt)
        errors.append(np.linalg.norm(P.matrix - exact) / np.linalg.norm(exact))
    assert errors[1] < 1e-2
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.05)


def test_riccati_comparison_regression():
    """Covariance response to a perturbed noise model is linear with a pinned gain."""
    g = build_grid(10, 10, [0, 1, 0, 1])
    sc = MixtureScenario()
    p = _blended_density(g).values
    delta = np.random.default_rng(0).standard_normal(g.size)
    delta /= np.linalg.norm(delta)
    ratios = []
    for eps in (1e-2, 1e-3):
        R1 = noise_covariance(DensityField(g, p), KBAR)
        R2 = noise_covariance(DensityField(g, p + eps * delta), KBAR)
        P1 = P2 = CovarianceOperator.identity(g.size)
        worst = 0.0
        for k in range(100):  # t in [0, 10]
            A = assemble_operator(g, sc.velocity_field(), sc.noise(), 0.1 * k)
            P1, P2 = riccati_step(P1, A, R1, 0.1), riccati_step(P2, A, R2, 0.1)
            worst = max(worst, np.linalg.norm(P1.matrix - P2.matrix))
        ratios.append(worst / eps)
    assert ratios[0] == pytest.approx(ratios[1], rel=0.01)
    assert ratios[1] == pytest.approx(0.0938, rel=0.01)


# measurement update and prediction


@settings(max_examples=30, deadline=None)
@given(p0=st.floats(1e-3, 1e3), r=st.floats(1e-6, 1e3), dt=st.floats(1e-3, 1.0))
def test_measurement_update_exact_for_scalar(p0, r, dt):
    R = NoiseCovariance(np.array([r]), NoiseScale(1.0))
    p_new, P_new = measurement_update(np.array([0.0]), np.array([[p0]]), np.array([1.0]), R, dt)
    exact_P = 1 / (1 / p0 + dt / r)
    # the closed form loses about 1 / (P dt / R) digits when the update is tiny
    tol = 1e-12 * (1 + r / (dt * p0))
    assert P_new[0, 0] == pytest.approx(exact_P, rel=tol)
    # error e' = -P/R e with P = 1/(1/p0 + t/r) gives e(dt) = e0 * P(dt) / p0
    assert 1 - p_new[0] == pytest.approx(exact_P / p0, rel=tol, abs=1e-12)


def test_measurement_update_stays_psd_at_floor():
    n = SMALL.size
    rng = np.random.default_rng(4)
    X = rng.standard_normal((n, n))
    P = X @ X.T
    y = np.zeros(n)
    y[: n // 2] = 3.0
    R = noise_covariance(DensityField(SMALL, y), KBAR)
    _, P_new = measurement_update(np.ones(n), P, y, R, 0.1)
    eig = np.linalg.eigvalsh(P_new)
    assert eig.min() >= -1e-8 * np.abs(eig).max()
    assert np.abs(P_new - P_new.T).max() == 0


def test_predict_matches_advance():
    A = _benchmark_operator(UNIT, 3.0)
    p = _blended_density(UNIT).values
    q, _ = predict(p, None, A, 0.1)
    np.testing.assert_array_equal(q, advance(A, p, 0.1))


def _sandwich_reference(A, P, dt):
    m, h = stable_substep(A, dt)
    F = step_matrix(A, h).toarray()
    for _ in range(m):
        P = F @ P @ F.T
    return m, P


@pytest.mark.parametrize("dt", [0.01, 1.0], ids=["sparse-substeps", "dense-propagator"])
def test_predict_covariance_matches_sandwich(dt):
    A = _benchmark_operator(SMALL)
    X = np.random.default_rng(1).standard_normal((SMALL.size, SMALL.size))
    P = X @ X.T
    m, ref = _sandwich_reference(A, P, dt)
    assert (m <= 4) == (dt == 0.01)
    _, got = predict(np.ones(SMALL.size), P, A, dt)
    np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10)


# full filter steps


def test_zero_innovation_is_pure_prediction():
    A = _benchmark_operator(SMALL, 2.0)
    p = _blended_density(SMALL)
    s = FilterState(p, CovarianceOperator.identity(SMALL.size), 0.0)
    # the innovation compares y with the predicted estimate at the end of the step
    predicted = advance(A, p.values, 0.1)
    out = filter_step(s, A, DensityField(SMALL, predicted), KBAR, 0.1)
    np.testing.assert_allclose(out.estimate.values, predicted, rtol=0, atol=1e-12)
    assert abs(integrate(out.estimate) - integrate(p)) <= 1e-12


@pytest.mark.parametrize("scheme", ["split", "euler"])
def test_zero_innovation_at_stationary_state(scheme):
    A = assemble_operator(SMALL, VelocityField.zero(), DiffusionModel(0.05), 0.0)
    p = DensityField.constant(SMALL, 1.0)
    s = FilterState(p, CovarianceOperator.identity(SMALL.size), 0.0)
    out = filter_step(s, A, DensityField.constant(SMALL, 1.0), KBAR, 0.1, scheme=scheme)
    np.testing.assert_allclose(out.estimate.values, 1.0, rtol=0, atol=1e-12)
    assert abs(integrate(out.estimate) - 1.0) <= 1e-12


def test_zero_covariance_is_open_loop():
    A = _benchmark_operator(UNIT, 1.0)
    p = _blended_density(UNIT)
    s = FilterState(p, CovarianceOperator(np.zeros((UNIT.size, UNIT.size))), 0.0)
    y = DensityField.constant(UNIT, 3.0)
    out = filter_step(s, A, y, KBAR, 0.1)
    np.testing.assert_allclose(out.estimate.values, advance(A, p.values, 0.1), rtol=0, atol=1e-12)
    assert np.all(out.covariance.matrix == 0)
    ol = open_loop_step(s, A, 0.1)
    np.testing.assert_allclose(ol.estimate.values, out.estimate.values, atol=1e-12)


def _scalar_case(scheme, steps=100, dt=0.1):
    g = build_grid(3, 3, [0, 1, 0, 1])
    A = _zero_operator(g)
    y = DensityField.constant(g, 2.0)
    k = NoiseScale(0.5)  # R = 1 in every cell
    p0 = np.linspace(0.0, 4.0, g.size)
    s = FilterState(DensityField(g, p0), CovarianceOperator.identity(g.size), 0.0)
    for _ in range(steps):
        s = filter_step(s, A, y, k, dt, scheme=scheme)
    return s, p0 - 2.0


def test_scalar_filter_split_is_exact():
    s, e0 = _scalar_case("split")
    t = 10.0
    np.testing.assert_allclose(np.diag(s.covariance.matrix), 1 / (1 + t), rtol=1e-12)
    np.testing.assert_allclose(s.estimate.values - 2.0, e0 / (1 + t), atol=1e-12)


def test_scalar_filter_euler_matches_scalar_simulation():
    s, e0 = _scalar_case("euler")
    P, e = 1.0, e0.copy()
    for _ in range(100):
        e = e * (1 - 0.1 * P)
        P = P - 0.1 * P**2
    np.testing.assert_allclose(np.diag(s.covariance.matrix), P, rtol=1e-12)
    np.testing.assert_allclose(s.estimate.values - 2.0, e, atol=1e-12)
    assert P == pytest.approx(1 / 11, rel=0.1)


def test_euler_and_split_agree_on_smooth_problem():
    g = build_grid(6, 6, [0, 1, 0, 1])
    A = assemble_operator(g, VelocityField.constant((0.05, 0.02)), DiffusionModel(0.05), 0.0)
    y = _blended_density(g)
    k = NoiseScale(1.0)
    p0 = DensityField.constant(g, 1.0)
    out = {}
    for scheme in ("split", "euler"):
        s = FilterState(p0, CovarianceOperator.identity(g.size, 0.5), 0.0)
        for _ in range(200):
            s = filter_step(s, A, y, k, 0.005, scheme=scheme)
        out[scheme] = s
    np.testing.assert_allclose(out["split"].estimate.values, out["euler"].estimate.values, rtol=2e-3)
    np.testing.assert_allclose(
        out["split"].covariance.matrix, out["euler"].covariance.matrix, atol=2e-3
    )


def test_oracle_with_true_equal_measurement_is_filter_step():
    A = _benchmark_operator(SMALL, 0.5)
    y = _blended_density(SMALL)
    s = init_filter(DensityField.constant(SMALL, 1.0))
    a = b = s
    for _ in range(5):
        a = filter_step(a, A, y, KBAR, 0.1)
        b = oracle_filter_step(b, A, y, y, KBAR, 0.1)
    np.testing.assert_array_equal(a.estimate.values, b.estimate.values)
    assert np.linalg.norm(a.covariance.matrix - b.covariance.matrix) == 0


def test_covariance_symmetric_and_psd_over_benchmark_steps():
    A = _benchmark_operator(UNIT)
    s = init_filter(_blended_density(UNIT))
    y = _blended_density(UNIT, 0.1)
    for _ in range(10):
        s = filter_step(s, A, y, KBAR, 0.1)
        P = s.covariance.matrix
        assert np.abs(P - P.T).max() <= 1e-10
    eig = np.linalg.eigvalsh(P)
    assert eig.min() >= -1e-8 * np.abs(eig).max()
    assert np.isfinite(s.covariance.trace())
    assert s.estimate.values.min() >= 0


def test_renormalize_flag():
    A = _benchmark_operator(SMALL)
    s = init_filter(_blended_density(SMALL))
    y = DensityField.constant(SMALL, 3.0)
    out = filter_step(s, A, y, KBAR, 0.1, renormalize=True)
    assert integrate(out.estimate) == pytest.approx(1.0, rel=1e-13)
    raw = filter_step(s, A, y, KBAR, 0.1)
    assert integrate(raw.estimate) > 1.05


def test_filter_step_errors():
    A = _benchmark_operator(SMALL)
    s = init_filter(DensityField.constant(SMALL, 1.0))
    with pytest.raises(ValueError):
        filter_step(s, A, DensityField.constant(UNIT, 1.0), KBAR, 0.1)
    with pytest.raises(ValueError):
        filter_step(s, A, DensityField.constant(SMALL, 1.0), KBAR, 0.0)
    with pytest.raises(ValueError):
        filter_step(s, A, DensityField.constant(SMALL, 1.0), KBAR, 0.1, scheme="rk4")
    with pytest.raises(ValueError):
        FilterState(s.estimate, CovarianceOperator.identity(3), 0.0)


def test_init_filter():
    y = _blended_density(SMALL, 0.0)
    s = init_filter(y, 2.0)
    np.testing.assert_array_equal(s.estimate.values, y.values)
    assert s.estimate.values is not y.values
    assert s.covariance.trace() == pytest.approx(2.0 * SMALL.size)
