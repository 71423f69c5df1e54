import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.nonparametric.smoothers_lowess import lowess

from vspam import smoothing
from vspam.errors import InvalidArgument


def random_feature(seed, n=300):
    """Skewed, heavy-tailed or clustered samples resembling contrast-energy columns."""
    rng = np.random.default_rng(seed)
    kind = seed % 4
    if kind == 0:
        return rng.uniform(-1, 1, n)
    if kind == 1:
        return rng.exponential(1.0, n) ** 2
    if kind == 2:
        return rng.lognormal(0, 1.5, n)
    return np.concatenate([rng.normal(0, 0.1, n // 2), rng.normal(5, 2, n - n // 2)])


def test_equally_spaced_trace():
    sm = smoothing.build_smoother(np.linspace(0, 1, 500), 4.0)
    assert not sm.linear_fallback
    assert abs(sm.hat_trace - 4) <= 1e-6


@pytest.mark.parametrize("seed", range(12))
def test_trace_matches_direct_oracle(seed):
    x = random_feature(seed)
    sm = smoothing.build_smoother(x, 4.0)
    B = smoothing.natural_spline_basis(x, sm.knots)
    root = smoothing.penalty_root(sm.knots)
    assert smoothing.hat_trace(B, root, sm.penalty) == pytest.approx(4.0, abs=1e-6)
    # centered operator plus the mean projection is the full smoother
    S = sm.matrix() + np.full((len(x), len(x)), 1 / len(x))
    assert np.trace(S) == pytest.approx(4.0, abs=1e-6)
    Q = np.linalg.qr(np.vstack([B, np.sqrt(sm.penalty) * root]))[0]
    S_direct = Q[: len(x)] @ Q[: len(x)].T
    np.testing.assert_allclose(S, S_direct, atol=1e-8)


def test_penalty_matrix_against_quadrature():
    knots = np.array([0.0, 0.3, 0.35, 0.8, 1.0])
    fine = np.linspace(0, 1, 200001)
    D = smoothing._basis_second_derivative(fine, knots)
    brute = np.trapezoid(D[:, :, None] * D[:, None, :], fine, axis=0)
    np.testing.assert_allclose(smoothing.penalty_matrix(knots), brute, rtol=1e-6, atol=1e-6)


def test_basis_is_natural_spline():
    knots = np.array([0.0, 1.0, 2.5, 3.0, 4.0])
    B = smoothing.natural_spline_basis(np.linspace(-3, 7, 400), knots)
    x = np.linspace(-3, 7, 400)
    for side in (x < 0, x > 4):
        xs, Bs = x[side], B[side]
        coef = np.polyfit(xs, Bs, 1)
        np.testing.assert_allclose(np.polyval(coef[:, 0], xs), Bs[:, 0], atol=1e-9)
        fit = np.vstack([np.polyval(coef[:, k], xs) for k in range(B.shape[1])]).T
        np.testing.assert_allclose(fit, Bs, atol=1e-9)


def test_trace_decreasing_in_lambda():
    x = random_feature(2)
    knots = smoothing.decile_knots(x)
    B = smoothing.natural_spline_basis(x, knots)
    root = smoothing.penalty_root(knots)
    traces = [smoothing.hat_trace(B, root, 10.0**e) for e in np.linspace(-8, 4, 25)]
    assert np.all(np.diff(traces) < 0)
    assert traces[0] <= len(knots) + 1e-9
    assert smoothing.hat_trace(B, root, 1e10) == pytest.approx(2.0, abs=1e-3)


def test_three_distinct_values_fall_back():
    x = np.repeat([0.0, 1.0, 3.0], 20)
    sm = smoothing.build_smoother(x)
    assert sm.linear_fallback and sm.hat_trace == 2.0
    r = 2 * x - (2 * x).mean()
    np.testing.assert_allclose(smoothing.apply(sm, r).fitted, r, atol=1e-12)


def test_constant_feature_gives_zero_smoother():
    sm = smoothing.build_smoother(np.full(30, 2.0))
    assert sm.linear_fallback
    assert not np.any(smoothing.apply(sm, np.arange(30.0)).fitted)


def test_knots_strictly_increasing():
    rng = np.random.default_rng(0)
    x = np.concatenate([np.zeros(80), rng.exponential(1, 20)])
    k = smoothing.decile_knots(x)
    assert np.all(np.diff(k) > 0)
    assert k[0] == x.min() and k[-1] == x.max()


def test_bad_target_df():
    with pytest.raises(InvalidArgument):
        smoothing.build_smoother(np.linspace(0, 1, 100), 2.0)
    with pytest.raises(InvalidArgument):
        smoothing.build_smoother(np.linspace(0, 1, 100), 30.0)


@pytest.fixture(scope="module")
def smoother():
    return smoothing.build_smoother(random_feature(5, 250))


def test_apply_zero_and_length(smoother):
    assert not np.any(smoothing.apply(smoother, np.zeros(smoother.n)).fitted)
    with pytest.raises(InvalidArgument):
        smoothing.apply(smoother, np.zeros(smoother.n + 1))


def test_apply_reproduces_lines(smoother):
    r = 3.7 * smoother.x - (3.7 * smoother.x).mean()
    np.testing.assert_allclose(smoothing.apply(smoother, r).fitted, r, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_apply_linear_and_centered(smoother, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = rng.normal(size=(2, smoother.n)) * rng.uniform(0.1, 100)
    f1 = smoothing.apply(smoother, r1).fitted
    f2 = smoothing.apply(smoother, r2).fitted
    f12 = smoothing.apply(smoother, r1 + r2).fitted
    np.testing.assert_allclose(f12, f1 + f2, atol=1e-10 * max(1, np.abs(f12).max()))
    assert abs(f1.mean()) < 1e-12 * max(1, np.abs(r1).max())
    np.testing.assert_allclose(smoother.matrix() @ r1, f1, atol=1e-10 * max(1, np.abs(f1).max()))


def test_coefficients_evaluate_training_fit(smoother):
    r = np.sin(smoother.x)
    fit = smoothing.apply(smoother, r)
    np.testing.assert_allclose(smoother.evaluate(fit.coef, smoother.x, fit.offset), fit.fitted, atol=1e-10)


def test_loess_matches_statsmodels():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 3, 150)
    y = np.sin(2 * x) + rng.normal(0, 0.3, 150)
    for span in (0.3, 0.75, 1.0):
        ref = lowess(y, x, frac=span, it=0, delta=0.0, return_sorted=False)
        np.testing.assert_allclose(smoothing.loess(x, y, span), ref, atol=1e-10)


def test_loess_constant_and_linear():
    x = np.random.default_rng(2).uniform(-5, 5, 60)
    np.testing.assert_allclose(smoothing.loess(x, np.full(60, 2.5)), 2.5, atol=1e-12)
    y = 0.5 - 1.5 * x
    out = smoothing.loess(x, y, span=1.0)
    assert out.shape == (60,)
    np.testing.assert_allclose(out, y, atol=1e-8)


def test_loess_degenerate_neighbourhood():
    x = np.zeros(12)
    y = np.arange(12.0)
    np.testing.assert_allclose(smoothing.loess(x, y, 0.5), y.mean())
    with pytest.raises(InvalidArgument):
        smoothing.loess(x, y, 0)


def test_extreme_skew_keeps_spline_and_lines():
    # most mass within 1e-3 of zero and a long right tail
    x = np.random.default_rng(53).gamma(0.35, 1.0, 400) ** 2
    sm = smoothing.build_smoother(x, 4.0)
    assert not sm.linear_fallback
    assert abs(sm.hat_trace - 4) <= 1e-6
    root = smoothing.penalty_root(sm.knots)
    B = smoothing.natural_spline_basis(x, sm.knots)
    assert abs(smoothing.hat_trace(B, root, sm.penalty) - 4) <= 1e-6
    line = 2.0 * x - (2.0 * x).mean()
    np.testing.assert_allclose(smoothing.apply(sm, line).fitted, line, atol=1e-9)


def test_penalty_root_reproduces_gram():
    knots = np.array([0.0, 0.01, 0.3, 0.35, 0.8, 1.0])
    F = smoothing.penalty_root(knots)
    np.testing.assert_allclose(F.T @ F, smoothing.penalty_matrix(knots))
    assert np.all(F[:, :2] == 0)  # constant and line are unpenalized
