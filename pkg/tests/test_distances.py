from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erfinv, ndtr

from oubound.distances import (
    DEFAULT_EPS_GRID,
    SampleEnsemble,
    dkw_radius,
    ks_statistic_vs_normal,
    michel_pfanzagl_bound,
    wasserstein_empirical_vs_normal,
)


def _phi(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _ks_by_enumeration(sample):
    x = sorted(sample)
    m = len(x)
    return max(max((i + 1) / m - _phi(v), _phi(v) - i / m) for i, v in enumerate(x))


samples = st.lists(st.floats(min_value=-6, max_value=6, allow_nan=False), min_size=1, max_size=40)


def test_single_point_at_zero():
    res = ks_statistic_vs_normal([0.0])
    assert res.statistic == 0.5
    assert res.dkw_radius == pytest.approx(math.sqrt(math.log(40.0) / 2.0), rel=1e-15)


def test_three_point_sample():
    res = ks_statistic_vs_normal([-1.0, 0.0, 1.0])
    expected = 1.0 / 3.0 - _phi(-1.0)
    assert res.statistic == pytest.approx(expected, abs=1e-15)
    assert res.statistic == pytest.approx(0.174678, abs=1e-6)
    assert res.statistic == pytest.approx(_phi(1.0) - 2.0 / 3.0, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(samples)
def test_ks_matches_enumeration_and_is_order_free(sample):
    d = ks_statistic_vs_normal(sample).statistic
    assert d == pytest.approx(_ks_by_enumeration(sample), abs=1e-14)
    assert ks_statistic_vs_normal(sample[::-1]).statistic == d


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=-4, max_value=4, allow_nan=False), min_size=1, max_size=15))
def test_ks_against_fine_grid_sup(sample):
    x = np.sort(np.asarray(sample))
    z = np.arange(-10.0, 10.0 + 1e-4, 1e-4)
    ecdf = np.searchsorted(x, z, side="right") / x.size
    brute = float(np.max(np.abs(ecdf - ndtr(z))))
    d = ks_statistic_vs_normal(sample).statistic
    # the grid sup can miss the jump by at most the normal CDF variation over one spacing
    slack = 1e-4 / math.sqrt(2.0 * math.pi)
    assert brute - 1e-15 <= d <= brute + slack + 1e-12


def test_dkw_band_coverage():
    rng = np.random.default_rng(11)
    m = 100_000
    radius = dkw_radius(m, 0.95)
    hits = [ks_statistic_vs_normal(rng.standard_normal(m)).statistic < 1.95 * radius for _ in range(40)]
    assert np.mean(hits) >= 0.95


def test_dkw_radius_validation():
    assert dkw_radius(200_000) == pytest.approx(math.sqrt(math.log(40.0) / 400_000), rel=1e-15)
    with pytest.raises(ValueError):
        dkw_radius(10, 1.0)


def test_w1_single_point_is_mean_absolute_normal():
    assert wasserstein_empirical_vs_normal([0.0]).distance == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-14)


@pytest.mark.parametrize("c", [-2.0, -0.3, 0.7, 3.0])
def test_w1_shift_bound(c):
    w0 = wasserstein_empirical_vs_normal([0.0]).distance
    wc = wasserstein_empirical_vs_normal([c]).distance
    assert abs(wc - w0) <= abs(c) + 1e-15


def _w1_by_quadrature(sample):
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    total = quad(_phi, -np.inf, x[0], epsabs=1e-14)[0]
    total += quad(lambda z: 1.0 - _phi(z), x[-1], np.inf, epsabs=1e-14)[0]
    for i in range(m - 1):
        a, b = x[i], x[i + 1]
        if b <= a:
            continue
        c = (i + 1) / m
        cross = math.sqrt(2.0) * float(erfinv(2.0 * c - 1.0))
        pts = [cross] if a < cross < b else None
        total += quad(lambda z: abs(c - _phi(z)), a, b, points=pts, epsabs=1e-14, limit=200)[0]
    return total


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=12))
def test_w1_matches_quadrature(sample):
    assert wasserstein_empirical_vs_normal(sample).distance == pytest.approx(_w1_by_quadrature(sample), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=5, max_value=3000),
       st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=0.3, max_value=3.0))
def test_kolmogorov_below_wasserstein_route(seed, m, shift, scale):
    x = shift + scale * np.random.default_rng(seed).standard_normal(m)
    ks = ks_statistic_vs_normal(x)
    w1 = wasserstein_empirical_vs_normal(x).distance
    assert w1 >= 0.0
    assert ks.statistic <= 2.0 * math.sqrt(w1) + ks.dkw_radius


def test_w1_stderr_shrinks():
    rng = np.random.default_rng(4)
    small = wasserstein_empirical_vs_normal(0.2 + rng.standard_normal(1_000)).stderr
    large = wasserstein_empirical_vs_normal(0.2 + rng.standard_normal(100_000)).stderr
    assert large < small / 5


def test_mp_degenerate_denominator():
    res = michel_pfanzagl_bound(0.07, np.ones(50))
    assert res.tail_probability == 0.0
    assert res.bound == pytest.approx(0.07 + DEFAULT_EPS_GRID.min(), rel=1e-15)


def test_mp_single_eps():
    z = np.r_[np.full(8, 1.0), np.full(2, 1.5)]
    res = michel_pfanzagl_bound(0.05, z, eps_grid=[0.1])
    assert res.bound == pytest.approx(0.35, rel=1e-15)
    assert res.eps == 0.1 and res.tail_probability == pytest.approx(0.2)


def test_mp_bad_grid():
    with pytest.raises(ValueError):
        michel_pfanzagl_bound(0.1, np.ones(3), eps_grid=[])
    with pytest.raises(ValueError):
        michel_pfanzagl_bound(0.1, np.ones(3), eps_grid=[0.0, 0.1])


def test_default_eps_grid():
    assert DEFAULT_EPS_GRID.size == 40
    assert DEFAULT_EPS_GRID[0] == pytest.approx(1e-4) and DEFAULT_EPS_GRID[-1] == pytest.approx(1.0)


def test_ensemble_excludes_non_finite():
    ens = SampleEnsemble.from_raw([0.1, np.nan, -0.2, np.inf], master_seed=3)
    assert ens.size == 2 and ens.excluded == 2
    with pytest.raises(ValueError):
        SampleEnsemble(values=[0.1, np.nan])
    assert ks_statistic_vs_normal(ens).statistic == ks_statistic_vs_normal([0.1, -0.2]).statistic
