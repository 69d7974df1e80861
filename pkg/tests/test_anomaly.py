import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armident.anomaly import (
    ResidualStats,
    detect_contacts,
    f_cdf,
    f_quantile,
    rates,
    residual_stats,
    roc_auc,
    roc_curve,
    t2_score,
    t2_threshold,
)
from armident.estimators import T2ContactDetector


def chi2_cdf(x, k):
    """Lower regularised incomplete gamma P(k/2, x/2) by its power series."""
    a, z = k / 2.0, x / 2.0
    term = 1.0 / a
    total = term
    n = 0
    while term > 1e-17 * total:
        n += 1
        term *= z / (a + n)
        total += term
    return math.exp(-z + a * math.log(z) - math.lgamma(a)) * total


def chi2_quantile(p, k):
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if chi2_cdf(mid, k) < p else (lo, mid)
    return 0.5 * (lo + hi)


# -- residual statistics ------------------------------------------------

def test_zero_variance_component():
    with pytest.raises(ValueError, match="component 2 has zero variance"):
        residual_stats(np.array([[1.0, 0.0], [-1.0, 0.0]]))


def test_hand_variance():
    stats = residual_stats(np.array([[1.0, 2.0], [-1.0, -2.0]]))
    np.testing.assert_allclose(stats.variances, [2.0, 8.0])


def test_gaussian_variances():
    rng = np.random.default_rng(0)
    stats = residual_stats(rng.standard_normal((100_000, 3)))
    assert np.all((stats.variances > 0.98) & (stats.variances < 1.02))


def test_too_few_samples():
    with pytest.raises(ValueError, match="at least 2"):
        residual_stats(np.ones((1, 3)))


def test_t2_examples():
    stats = ResidualStats(np.array([1.0, 4.0]), n_samples=100)
    assert t2_score(np.zeros(2), stats) == 0.0
    assert t2_score(np.array([1.0, 2.0]), stats) == pytest.approx(2.0)
    assert t2_score(np.array([3.0, 4.0]), stats) == pytest.approx(13.0)
    with pytest.raises(ValueError, match="components"):
        t2_score(np.zeros(3), stats)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=3, max_size=3), st.integers(0, 1000))
def test_t2_scale_invariance(scales, seed):
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((50, 3))
    D = np.array(scales)
    a = t2_score(E, residual_stats(E))
    b = t2_score(E * D, residual_stats(E * D))
    np.testing.assert_allclose(a, b, rtol=1e-9)


# -- F distribution -------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_f_median_is_one(d):
    assert f_quantile(d, d, 0.5) == pytest.approx(1.0, abs=1e-8)


def test_f_two_two():
    # CDF x / (1 + x) gives the quantile a / (1 - a)
    assert f_quantile(2, 2, 0.9) == pytest.approx(9.0, abs=1e-6)
    for a in (0.1, 0.37, 0.99):
        assert f_quantile(2, 2, a) == pytest.approx(a / (1 - a), rel=1e-9)


def test_f_large_denominator_matches_chi2():
    ref = chi2_quantile(0.99, 1)
    assert ref == pytest.approx(2.5758293035489**2, abs=1e-9)
    assert f_quantile(1, 10**6, 0.99) == pytest.approx(ref, abs=1e-2)
    # F(k, inf) = chi2_k / k
    for k in (2, 5):
        assert f_quantile(k, 10**7, 0.95) == pytest.approx(chi2_quantile(0.95, k) / k, rel=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(1, 5000), st.floats(0.01, 0.999))
def test_f_quantile_inverts_cdf(d1, d2, alpha):
    x = f_quantile(d1, d2, alpha)
    assert abs(float(f_cdf(x, d1, d2)) - alpha) < 1e-10


def test_f_domain_errors():
    with pytest.raises(ValueError):
        f_quantile(0, 3, 0.5)
    with pytest.raises(ValueError):
        f_quantile(2, 3, 1.0)


# -- threshold ------------------------------------------------------------

def test_threshold_limit_one_latent():
    stats = ResidualStats(np.ones(10), n_samples=10**7, n_latent=1)
    assert t2_threshold(stats, 0.99) == pytest.approx(chi2_quantile(0.99, 1), abs=1e-2)


def test_threshold_small_sample():
    # F(2, 1) has CDF 1 - (1 + 2x)^(-1/2): its median is 1.5
    stats = ResidualStats(np.ones(2), n_samples=3, n_latent=2)
    assert t2_threshold(stats, 0.5) == pytest.approx(2 * 2 / 1 * 1.5, rel=1e-9)


def test_threshold_dof_choices():
    stats = ResidualStats(np.ones(10), n_samples=1000, n_latent=3)
    assert t2_threshold(stats, 0.9, "output") > t2_threshold(stats, 0.9, "latent")
    with pytest.raises(ValueError, match="degrees-of-freedom"):
        t2_threshold(stats, 0.9, "both")
    with pytest.raises(ValueError, match="latent"):
        t2_threshold(ResidualStats(np.ones(2), 10), 0.9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.001, 0.019), st.integers(1, 20))
def test_threshold_monotone(a1, gap, nu):
    stats = ResidualStats(np.ones(25), n_samples=500, n_latent=nu)
    assert t2_threshold(stats, a1) < t2_threshold(stats, a1 + gap)


def test_null_exceedance_rate():
    rng = np.random.default_rng(1)
    n = 10
    det = T2ContactDetector(alpha=0.99, dof="output", n_latent=n).fit(
        rng.standard_normal((5000, n)))
    rate = det.predict(rng.standard_normal((10_000, n))).mean()
    assert 0.005 <= rate <= 0.015


# -- detection and ROC ----------------------------------------------------

def test_noise_free_data_raises_no_flags(ref_model, truth, exact_heldout):
    stats = ResidualStats(np.full(10, 1e-4), n_samples=1000, n_latent=66)
    det = detect_contacts(exact_heldout, ref_model, truth.phi, stats)
    assert not det.flags.any()
    assert det.t2.max() < 1e-12


def test_detect_needs_derivatives(ref_model, truth, exact_heldout):
    stats = ResidualStats(np.ones(10), n_samples=1000, n_latent=66)
    with pytest.raises(ValueError, match="velocity"):
        detect_contacts(exact_heldout.without_derivatives(), ref_model, truth.phi, stats)


def test_roc_separated():
    scores = np.array([0.1, 0.2, 0.3, 5.0, 6.0])
    labels = np.array([0, 0, 0, 1, 1])
    curve = roc_curve(scores, labels)
    assert any((curve[:, 0] == 0) & (curve[:, 1] == 1))
    assert roc_auc(curve) == 1.0
    np.testing.assert_array_equal(curve[0], [0, 0, np.inf])
    np.testing.assert_array_equal(curve[-1], [1, 1, -np.inf])


def test_roc_chance():
    rng = np.random.default_rng(2)
    curve = roc_curve(rng.random(10_000), rng.random(10_000) < 0.3)
    assert 0.45 <= roc_auc(curve) <= 0.55


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=60), st.integers(0, 10**6))
def test_roc_properties(values, seed):
    scores = np.array(values, dtype=float)
    labels = np.random.default_rng(seed).random(scores.size) < 0.5
    labels[0], labels[-1] = True, False
    curve = roc_curve(scores, labels)
    assert len(curve) == np.unique(scores).size + 2
    assert np.all(np.diff(curve[:, 0]) >= 0) and np.all(np.diff(curve[:, 1]) >= 0)
    assert np.all(np.diff(curve[:, 2]) < 0)
    # each row equals the rates of thresholding at its score
    for fpr, tpr, thr in curve[1:-1]:
        t, f = rates(scores >= thr, labels)
        assert (fpr, tpr) == pytest.approx((f, t))
    # trapezoid area equals the rank statistic P(s+ > s-) + P(tie) / 2
    pos, neg = scores[labels], scores[~labels]
    diff = pos[:, None] - neg[None, :]
    auc = np.mean(diff > 0) + 0.5 * np.mean(diff == 0)
    assert roc_auc(curve) == pytest.approx(auc)


def test_roc_single_class():
    with pytest.raises(ValueError, match="both classes"):
        roc_curve([1.0, 2.0], [True, True])


def test_rates_undefined():
    assert rates([True, False], [False, False]) == (None, 0.5)
    assert rates([True, False], [True, True]) == (0.5, None)
