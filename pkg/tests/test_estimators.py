from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import eigvalsh_tridiagonal

from oubound.errors import DegenerateDenominatorError
from oubound.estimators import (
    amce,
    amle_bar,
    amle_hat,
    batch_ratio_parts,
    compute_statistics,
    decomposition_residual,
    estimate_all,
    lambda_statistic,
    lambda_statistic_literal,
    normalized_error,
)
from oubound.montecarlo import run_estimator_ensemble
from oubound.process import OuParams, SamplingGrid
from oubound.sampler import PathSample, RngStreamSpec, sample_block, sample_coupled_paths


def _path(x, delta):
    x = np.asarray(x, dtype=float)
    return PathSample(grid=SamplingGrid(len(x) - 1, delta), x=x)


def test_constant_path_statistics():
    c, theta, delta = 1.7, 0.8, 0.25
    path = _path(np.full(9, c), delta)
    stats = compute_statistics(path, OuParams(theta))
    T = path.grid.horizon
    assert stats.fn_x == pytest.approx(c * c, rel=1e-15)
    assert stats.quad_increment == 0.0
    expected = -(math.expm1(-theta * delta) / delta) * T * c * c
    assert stats.lambda_n == pytest.approx(expected, rel=1e-12)
    assert amle_hat(path) == 0.0


def test_hand_arithmetic_three_points():
    path = _path([0.0, 1.0, 0.5], 1.0)
    stats = compute_statistics(path, OuParams(1.0))
    assert stats.quad_increment == -0.5
    assert stats.s_n == 1.0
    assert amle_hat(path) == 0.5


def test_centred_second_moment_zero():
    stats = compute_statistics(_path(np.ones(5), 1.0), OuParams(0.5))
    assert stats.Fn_x == 0.0


def test_amce_reciprocal():
    # (2/n) sum_{i=1}^n X^2 = 4 with n = 2: X_1^2 + X_2^2 = 4
    assert amce(_path([0.0, math.sqrt(2.0), math.sqrt(2.0)], 0.1)) == pytest.approx(0.25, rel=1e-15)
    # fixed point: (2/n) sum X^2 = 1/theta
    theta = 1.6
    v = math.sqrt(1.0 / (2.0 * theta))
    assert amce(_path([0.0, v, v, v], 0.3)) == pytest.approx(theta, rel=1e-14)


def test_amle_bar_examples():
    # T = 1, delta = 0.5, x = (0, 1, 2): |(X_T^2 - T)/2| / S_n = 1.5 / 0.5
    assert abs(amle_bar(_path([0.0, 1.0, 2.0], 0.5))) == pytest.approx(3.0, rel=1e-15)
    # X_T^2 = T gives a zero numerator
    T = 2 * 0.5
    assert amle_bar(_path([0.0, 0.3, math.sqrt(T)], 0.5)) == 0.0


def test_degenerate_denominators():
    zero = _path(np.zeros(6), 0.1)
    for fn in (amce, amle_hat, amle_bar):
        with pytest.raises(DegenerateDenominatorError):
            fn(zero)
    triple = estimate_all(zero)
    assert triple.amce is None and triple.amle_hat is None and triple.amle_bar is None


def test_normalized_error_examples():
    g = SamplingGrid(4, 1.0)
    assert normalized_error(0.5, OuParams(0.5), g) == 0.0
    assert normalized_error(0.25, OuParams(0.5), g) == pytest.approx(0.5, rel=1e-15)


paths = st.tuples(
    st.floats(min_value=0.05, max_value=4.0),
    st.integers(min_value=1, max_value=400),
    st.floats(min_value=1e-3, max_value=1.0),
    st.integers(min_value=0, max_value=2**32),
)


@settings(max_examples=60, deadline=None)
@given(paths)
def test_decomposition_identity_and_definitions(args):
    theta, n, delta, seed = args
    p, g = OuParams(theta), SamplingGrid(n, delta)
    path = sample_coupled_paths(p, g, RngStreamSpec(seed, 0))
    stats = compute_statistics(path, p, "from_zero")
    assert decomposition_residual(stats, p, g) <= 1e-10
    assert stats.s_n == pytest.approx(g.horizon * stats.fn_x, rel=1e-12)
    if stats.s_n > 0:
        assert amle_hat(path) == pytest.approx(-stats.quad_increment / stats.s_n, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(paths)
def test_lambda_forms_agree_when_no_overflow(args):
    theta, n, delta, seed = args
    assume(theta * n * delta < 300)  # the literal zeta form overflows beyond this
    p, g = OuParams(theta), SamplingGrid(n, delta)
    x = sample_coupled_paths(p, g, RngStreamSpec(seed, 1)).x
    safe = lambda_statistic(x, p, g)
    literal = lambda_statistic_literal(x, p, g)
    scale = max(float(np.sum(np.abs(x[:-1] * x[1:]))), 1e-300)
    assert abs(safe - literal) <= 1e-10 * scale


def test_lambda_safe_form_survives_long_horizons():
    p, g = OuParams(2.0), SamplingGrid(5000, 0.1)  # theta T = 1000
    x = sample_coupled_paths(p, g, RngStreamSpec(1, 0)).x
    assert math.isfinite(lambda_statistic(x, p, g))


def test_batch_parts_match_scalar_estimators():
    p, g = OuParams(1.2), SamplingGrid(80, 0.05)
    x, _, _ = sample_block(p, g, 12, 0, 20, want_z=False)
    for name, fn in (("amce", amce), ("amle_hat", amle_hat), ("amle_bar", amle_bar)):
        values, num, den = batch_ratio_parts(x, p, g, name)
        assert np.allclose(values, num / den, rtol=1e-10, atol=1e-12)
        for row in range(x.shape[0]):
            est = fn(PathSample(g, x[row]))
            assert values[row] == pytest.approx(normalized_error(est, p, g), rel=1e-10, abs=1e-12)


def test_batch_parts_flag_degenerate_rows():
    g = SamplingGrid(4, 0.5)
    x = np.vstack([np.zeros(5), [0.0, 0.1, 0.2, 0.1, 0.0]])
    values, _, _ = batch_ratio_parts(x, OuParams(1.0), g, "amle_hat")
    assert math.isnan(values[0]) and math.isfinite(values[1])


@pytest.mark.parametrize("name", ["amce", "amle_hat", "amle_bar"])
def test_consistency(name):
    p, g = OuParams(1.0), SamplingGrid(100_000, 0.01)
    ens = run_estimator_ensemble(name, p, g, 100, master_seed=77)
    est = p.theta - ens.valid_values / math.sqrt(g.horizon / (2.0 * p.theta))
    assert np.median(np.abs(est - p.theta)) < 0.1


def test_time_rescaling_regenerated_paths():
    # (theta, delta) -> (c theta, delta / c): same theta * delta, so the estimate of
    # theta * delta has the same law; compare medians over regenerated ensembles
    c = 4.0
    med = []
    for theta, delta in ((0.5, 0.2), (0.5 * c, 0.2 / c)):
        p, g = OuParams(theta), SamplingGrid(2000, delta)
        x, _, _ = sample_block(p, g, 3, 0, 400, want_z=False)
        scaled = x * math.sqrt(theta)  # X scales like theta^(-1/2) in law
        ests = [amle_hat(PathSample(g, row)) * delta for row in x]
        med.append((np.median(ests), np.median(np.sum(scaled[:, :-1] ** 2, axis=1))))
    assert med[0][0] == pytest.approx(med[1][0], rel=0.05)
    assert med[0][1] == pytest.approx(med[1][1], rel=0.05)


def _exact_amce_error_moments(theta: float, n: int, delta: float) -> tuple[float, float]:
    """Mean and variance of sqrt(T/(2 theta)) (theta - 1/(2 f)), f = (1/n) sum_{i=1}^n X_{t_i}^2.

    f is a weighted chi-square sum with weights = eigenvalues of Cov(X_{t_1..t_n})/n;
    the precision of that AR(1) vector is tridiagonal.  Negative moments follow from
    E f^-k = Gamma(k)^-1 int_0^inf s^(k-1) E exp(-s f) ds.
    """
    a = math.exp(-theta * delta)
    s2 = -math.expm1(-2.0 * theta * delta) / (2.0 * theta)
    diag = np.full(n, (1.0 + a * a) / s2)
    diag[-1] = 1.0 / s2
    mu = eigvalsh_tridiagonal(diag, np.full(n - 1, -a / s2))
    lam = 1.0 / (n * mu)

    def laplace(s):
        return math.exp(-0.5 * float(np.sum(np.log1p(2.0 * s * lam))))

    inv1 = quad(laplace, 0, np.inf, limit=500, epsabs=0, epsrel=1e-12)[0]
    inv2 = quad(lambda s: s * laplace(s), 0, np.inf, limit=500, epsabs=0, epsrel=1e-12)[0]
    T = n * delta
    mean = math.sqrt(T / (2.0 * theta)) * (theta - inv1 / 2.0)
    var = T / (2.0 * theta) * (inv2 - inv1**2) / 4.0
    return mean, var


def _x_cov_block(theta, n, delta):
    t = np.arange(1, n + 1) * delta
    return (np.exp(-theta * np.abs(t[:, None] - t[None, :])) - np.exp(-theta * (t[:, None] + t[None, :]))) / (2 * theta)


def test_exact_error_moment_oracle_against_monte_carlo():
    theta, n, delta = 1.0, 50, 0.2
    # the tridiagonal precision inverts the closed-form covariance
    a = math.exp(-theta * delta)
    s2 = -math.expm1(-2.0 * theta * delta) / (2.0 * theta)
    prec = np.diag(np.r_[np.full(n - 1, (1 + a * a) / s2), 1 / s2]) - a / s2 * (np.eye(n, k=1) + np.eye(n, k=-1))
    np.testing.assert_allclose(prec @ _x_cov_block(theta, n, delta), np.eye(n), atol=1e-10)

    mean, var = _exact_amce_error_moments(theta, n, delta)
    ens = run_estimator_ensemble("amce", OuParams(theta), SamplingGrid(n, delta), 200_000, master_seed=5)
    v = ens.valid_values
    assert abs(v.mean() - mean) < 4 * v.std(ddof=1) / math.sqrt(v.size)
    assert v.var(ddof=1) == pytest.approx(var, rel=0.03)


@pytest.mark.slow
def test_normalized_error_distribution_at_T100():
    theta, n, delta = 1.0, 10_000, 0.01
    exact_mean, exact_var = _exact_amce_error_moments(theta, n, delta)
    ens = run_estimator_ensemble("amce", OuParams(theta), SamplingGrid(n, delta), 100_000, master_seed=4242)
    v = ens.valid_values
    se = v.std(ddof=1) / math.sqrt(v.size)
    # the finite-T bias is O(T^-1/2), about -0.18 here, so the mean is checked against its exact value
    assert abs(v.mean() - exact_mean) < 4 * se
    assert abs(v.var(ddof=1) - 1.0) < 0.05
    assert abs(exact_var - 1.0) < 0.05
