import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from predstack.core import Manifest, ModelDrawMatrix, validate_manifest
from predstack.psis import (
    DegenerateTail,
    TailTooSmall,
    elpd_summary,
    fit_gpd,
    loo_all,
    loo_lpd_point,
    loo_mean_point,
    smooth_ratios,
    tail_size,
)
from predstack.simlab import gm_loglik_matrices

from conftest import random_manifest


# -- GPD fit -----------------------------------------------------------------

def test_gpd_recovers_heavy_tail():
    x = stats.genpareto.rvs(0.5, scale=1.0, size=10_000, random_state=np.random.default_rng(0))
    fit = fit_gpd(np.sort(x))
    assert 0.45 <= fit.k_hat <= 0.55
    assert fit.sigma > 0 and fit.tail_size == 10_000


def test_gpd_exponential_tail_is_k0():
    x = np.random.default_rng(1).exponential(1.0, 10_000)
    assert -0.05 <= fit_gpd(np.sort(x)).k_hat <= 0.05


def test_gpd_short_tail_negative():
    x = stats.genpareto.rvs(-0.3, size=10_000, random_state=np.random.default_rng(2))
    assert fit_gpd(np.sort(x)).k_hat == pytest.approx(-0.3, abs=0.05)


def test_gpd_errors():
    with pytest.raises(DegenerateTail):
        fit_gpd(np.ones(20))
    with pytest.raises(TailTooSmall):
        fit_gpd([0.1, 0.2, 0.3, 0.4])


def test_gpd_deterministic():
    x = np.sort(np.random.default_rng(3).exponential(size=200))
    assert fit_gpd(x) == fit_gpd(x.copy())


# -- smoothing -----------------------------------------------------------------

def test_tail_size():
    assert [tail_size(s) for s in (1, 24, 25, 4000)] == [1, 5, 5, 800]


def test_constant_ratios_fixed_point():
    sm = smooth_ratios(np.full(100, 2.5))
    np.testing.assert_array_equal(sm.log_w, 2.5)
    assert sm.k_hat == 0.0


def test_lognormal_ratios_capped():
    log_r = np.random.default_rng(4).normal(0, 2, 10_000)
    sm = smooth_ratios(log_r)
    assert sm.log_w.max() <= log_r.max() + 1e-12
    # only the top 20% moves
    moved = sm.log_w != log_r
    assert moved.sum() <= tail_size(10_000)
    assert np.all(log_r[moved] >= np.quantile(log_r, 0.79))


def test_small_sample_falls_back_to_raw():
    log_r = np.random.default_rng(5).normal(size=22)
    # S=22: M=5 so the fit runs, but S < 25 keeps the raw ratios
    sm = smooth_ratios(log_r)
    np.testing.assert_array_equal(sm.log_w, log_r)
    assert np.isfinite(sm.k_hat)
    # S=20: M=4, no fit possible
    sm = smooth_ratios(log_r[:20])
    np.testing.assert_array_equal(sm.log_w, log_r[:20])
    assert sm.k_hat == math.inf


def test_gpd_single_spike_tail():
    # quartile exceedance equal to the max puts a grid point at theta = 0
    x = np.array([0.0] * 8 + [6000.0])
    fit = fit_gpd(x)
    assert np.isfinite(fit.k_hat) and fit.sigma > 0


log_ratio_vectors = arrays(
    np.float64,
    st.integers(25, 400),
    elements=st.floats(-30, 30, allow_nan=False, allow_infinity=False),
)


@settings(max_examples=60, deadline=None)
@given(log_ratio_vectors)
def test_truncation_cap_property(log_r):
    sm = smooth_ratios(log_r)
    assert np.max(sm.log_w) <= np.max(log_r) + 1e-12
    assert np.all(np.isfinite(sm.log_w))


@settings(max_examples=60, deadline=None)
@given(log_ratio_vectors)
def test_smoothing_preserves_order(log_r):
    sm = smooth_ratios(log_r)
    order = np.argsort(log_r, kind="stable")
    tail = order[log_r.size - tail_size(log_r.size):]
    assert np.all(np.diff(sm.log_w[tail]) >= -1e-12)
    # untouched body
    body = order[: log_r.size - tail_size(log_r.size)]
    np.testing.assert_array_equal(sm.log_w[body], log_r[body])


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.integers(1, 300))
def test_constant_likelihood_property(c, S):
    lpd, k_hat = loo_lpd_point(np.full(S, c))
    assert lpd == pytest.approx(c, abs=1e-12)
    assert k_hat <= 0.7


# -- pointwise LOO ---------------------------------------------------------------

def test_single_draw_short_circuit():
    assert loo_lpd_point([-1.3]) == (-1.3, 0.0)


def test_constant_loglik_point():
    assert loo_lpd_point(np.full(100, -2.0))[0] == pytest.approx(-2.0, abs=1e-12)


def test_loo_below_full_data_density():
    # LOO density never exceeds the posterior mean density for raw weights
    ll = np.random.default_rng(6).normal(-1, 0.3, 20)
    lpd, _ = loo_lpd_point(ll)
    full = np.log(np.mean(np.exp(ll)))
    assert lpd <= full + 1e-12
    # raw weights 1/p: LOO density is the harmonic mean
    assert lpd == pytest.approx(-np.log(np.mean(np.exp(-ll))), rel=1e-12)


def test_loo_mean_point():
    assert loo_mean_point(np.full(50, 3.2), np.random.default_rng(0).normal(size=50)) == pytest.approx(3.2)
    assert loo_mean_point([1.7], None) == 1.7
    assert loo_mean_point([1.0, 3.0], np.log([3.0, 1.0])) == pytest.approx(1.5)


# -- elpd summary and loo_all -------------------------------------------------------

def test_elpd_summary_formula():
    z = np.array([-1.0, -2.0, -3.0, -6.0])
    e = elpd_summary(z, lpd_full_total=-11.0)
    assert e.total == -12.0
    # mean -3: deviations 2, 1, 0, -3
    assert e.se == pytest.approx(math.sqrt(14.0))
    assert e.p_loo == pytest.approx(1.0)


def test_gm_matrices_are_exact():
    y = np.random.default_rng(7).normal(3.4, 1, 25)
    man = validate_manifest(Manifest(gm_loglik_matrices(y, np.arange(1, 9.0))))
    loo = loo_all(man)
    exact = stats.norm.logpdf(y[:, None], np.arange(1, 9.0)[None, :], 1.0)
    np.testing.assert_allclose(loo.loo_lpd, exact, atol=1e-12, rtol=0)
    assert np.all(loo.k_hat == 0)
    assert loo.warnings == []
    np.testing.assert_allclose([e.p_loo for e in loo.elpd], 0, atol=1e-10)


def test_identical_models_identical_summaries():
    ll = np.random.default_rng(8).normal(-1, 0.2, (200, 15))
    man = validate_manifest(Manifest([ModelDrawMatrix(f"m{k}", ll.copy()) for k in range(3)]))
    loo = loo_all(man)
    for e in loo.elpd[1:]:
        assert (e.total, e.se, e.p_loo) == (loo.elpd[0].total, loo.elpd[0].se, loo.elpd[0].p_loo)


def test_loo_all_invariants():
    man = random_manifest(K=3, S=100, n=30, seed=9)
    loo = loo_all(man)
    assert loo.loo_lpd.shape == loo.k_hat.shape == loo.loo_mean.shape == (30, 3)
    assert np.all(np.isfinite(loo.loo_lpd)) and np.all(np.isfinite(loo.k_hat))
    for k, e in enumerate(loo.elpd):
        np.testing.assert_array_equal(e.pointwise, loo.loo_lpd[:, k])
        assert e.total == pytest.approx(e.pointwise.sum(), rel=1e-10)
        assert e.se >= 0


def test_warning_records_list_high_khat():
    rng = np.random.default_rng(10)
    ll = rng.normal(-1, 0.1, (400, 5))
    ll[:, 2] = -np.abs(rng.standard_cauchy(400)) * 5  # heavy-tailed ratios at point 2
    loo = loo_all(validate_manifest(Manifest([ModelDrawMatrix("a", ll)])))
    assert {"i": 2, "k": 0, "k_hat": loo.k_hat[2, 0]} in loo.warnings
    assert all(w["k_hat"] > 0.7 for w in loo.warnings)


def test_sample_size_warning():
    rng = np.random.default_rng(12)
    # wildly varying draws inflate p_loo far beyond n/5
    ll = rng.normal(-5, 4, (300, 6))
    loo = loo_all(validate_manifest(Manifest([ModelDrawMatrix("wild", ll)])))
    assert loo.sample_size_warnings and loo.sample_size_warnings[0]["model"] == "wild"


def test_deterministic_and_thread_independent():
    man = random_manifest(K=4, S=200, n=25, seed=13)
    a = loo_all(man)
    b = loo_all(man, threads=3)
    np.testing.assert_array_equal(a.loo_lpd, b.loo_lpd)
    np.testing.assert_array_equal(a.k_hat, b.k_hat)
    np.testing.assert_array_equal(a.loo_mean, b.loo_mean)
    assert [e.se for e in a.elpd] == [e.se for e in b.elpd]
