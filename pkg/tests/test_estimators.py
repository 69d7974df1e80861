import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from armident.anomaly import t2_threshold
from armident.estimators import DynamicsIdentifier, T2ContactDetector


def test_identifier_params(ref_model):
    est = DynamicsIdentifier(ref_model, n_components=10, window=9)
    params = clone(est).get_params()
    assert params["n_components"] == 10 and params["window"] == 9
    assert params["center"] is False
    with pytest.raises(NotFittedError):
        est.predict(None)


def test_identifier_rejects_other_inputs(ref_model):
    with pytest.raises(TypeError, match="Dataset"):
        DynamicsIdentifier(ref_model).fit(np.zeros((10, 3)))
    with pytest.raises(ValueError, match="model"):
        DynamicsIdentifier().fit(None)


def test_identifier_on_noisy_data(identified, noisy_train):
    assert identified.n_components_ == 66
    assert identified.coef_.shape == (108,)
    assert identified.residual_stats_.n_samples == len(noisy_train)
    E = identified.residuals(noisy_train)
    np.testing.assert_allclose(E, identified.training_residuals_, atol=1e-9)
    # force rows carry roughly the injected noise
    std = identified.training_residuals_.std(axis=0)
    assert np.all((std[4:7] > 0.08) & (std[4:7] < 0.15))
    pwm, wrench = identified.predict_measurements(noisy_train.subset(slice(0, 100)))
    assert pwm.shape == (100, 4) and wrench.shape == (100, 6)


def test_identifier_exact_data_has_no_t2_stats(ref_model, exact_train):
    with pytest.warns(RuntimeWarning, match="residual statistics"):
        est = DynamicsIdentifier(ref_model).fit(exact_train.subset(slice(0, 3000)))
    assert est.residual_stats_ is None


def test_detector_matches_stats(identified):
    stats = identified.residual_stats_
    det = T2ContactDetector.from_stats(stats, alpha=0.95)
    assert det.threshold_ == pytest.approx(t2_threshold(stats, 0.95))
    fitted = T2ContactDetector(alpha=0.95, n_latent=stats.n_latent).fit(
        identified.training_residuals_)
    assert fitted.threshold_ == pytest.approx(det.threshold_)
    flags = fitted.predict(identified.training_residuals_)
    assert flags.dtype == bool and flags.mean() < 0.05


def test_detector_alpha_checked():
    with pytest.raises(ValueError, match="alpha"):
        T2ContactDetector(alpha=1.0).fit(np.random.default_rng(0).normal(size=(20, 2)))
