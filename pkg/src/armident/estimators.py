"""Estimator-style front ends: identification on a Dataset and T^2
contact detection on its residuals."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import anomaly
from .model import ChainModel
from .pls import NIPALSRegression, select_latent_count
from .regressors import ParameterLayout, predict_measurements, stack_dataset
from .signal import DEFAULT_DEGREE, DEFAULT_WINDOW, Dataset, estimate_derivatives


class DynamicsIdentifier(BaseEstimator):
    """Identify inertial, friction, offset and drive-gain parameters of
    ``model`` from a :class:`Dataset` with PLS.

    ``fit`` estimates missing joint derivatives, stacks the sample blocks,
    picks the number of latent variables (unless ``n_components`` is given),
    runs NIPALS and records per-row residual variances on the training data.
    On exact data some variances vanish; ``residual_stats_`` is then None
    and a warning is issued.

    Parameters
    ----------
    model : ChainModel
    n_components : int or None
    policy : {"rank", "cv"}
        How to pick the latent count when ``n_components`` is None.
    rank_tol : float
    center, scale : bool
        Pre-processing of the stacked regressor (see :class:`NIPALSRegression`).
    window, degree : int
        Polynomial derivative estimator settings.
    """

    def __init__(self, model: ChainModel = None, n_components=None, policy="rank",
                 rank_tol=1e-8, center=False, scale=False, window=DEFAULT_WINDOW,
                 degree=DEFAULT_DEGREE):
        self.model = model
        self.n_components = n_components
        self.policy = policy
        self.rank_tol = rank_tol
        self.center = center
        self.scale = scale
        self.window = window
        self.degree = degree

    def _prepare(self, X: Dataset) -> Dataset:
        if not isinstance(X, Dataset):
            raise TypeError(f"expected a Dataset, got {type(X).__name__}")
        if not X.has_derivatives:
            X = estimate_derivatives(X, self.window, self.degree)
        return X

    def fit(self, X: Dataset, y=None):
        if self.model is None:
            raise ValueError("DynamicsIdentifier needs a model")
        data = self._prepare(X)
        A, b = stack_dataset(self.model, data)
        nu = self.n_components
        if nu is None:
            nu = select_latent_count(A, b, self.policy, self.rank_tol, center=self.center,
                                     scale=self.scale)
        self.pls_ = NIPALSRegression(
            n_components=nu, center=self.center, scale=self.scale, keep_scores=False
        ).fit(A, b)
        self.n_components_ = self.pls_.n_components_
        self.coef_ = self.pls_.coef_
        rows = ParameterLayout.for_model(self.model).n_rows
        E = (b - self.pls_.predict(A)).reshape(-1, rows)
        self.training_residuals_ = E
        try:
            self.residual_stats_ = anomaly.residual_stats(E, n_latent=self.n_components_)
        except ValueError as exc:
            # exact (noise-free) data: the fit is fine, only T^2 is undefined
            warnings.warn(f"no residual statistics for T^2 monitoring: {exc}", RuntimeWarning)
            self.residual_stats_ = None
        return self

    def residuals(self, X: Dataset) -> np.ndarray:
        """Per-sample residual blocks (N, rows) on new data."""
        check_is_fitted(self, "pls_")
        return anomaly.sample_residuals(self.model, self._prepare(X), self.pls_)

    def predict(self, X: Dataset) -> np.ndarray:
        """Predicted right-hand side blocks (N, rows)."""
        check_is_fitted(self, "pls_")
        data = self._prepare(X)
        A, _ = stack_dataset(self.model, data)
        return self.pls_.predict(A).reshape(len(data), -1)

    def predict_measurements(self, X: Dataset):
        """Predicted ``(pwm, wrench)`` along the motion of ``X``.

        Unlike :meth:`predict` this ignores the PLS intercept, which is zero
        unless ``center=True``.
        """
        check_is_fitted(self, "pls_")
        data = self._prepare(X)
        return predict_measurements(self.model, self.coef_, data.q, data.dq, data.ddq)


class T2ContactDetector(ClassifierMixin, BaseEstimator):
    """Flag residual vectors whose Hotelling T^2 exceeds the F-based limit.

    ``fit`` takes calibration residuals (N, n). The limit uses
    ``n_latent`` degrees of freedom with ``dof="latent"`` or the residual
    dimension with ``dof="output"``.
    """

    def __init__(self, alpha=0.99, dof="latent", n_latent=None):
        self.alpha = alpha
        self.dof = dof
        self.n_latent = n_latent

    def fit(self, E, y=None):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        E = check_array(E, dtype=np.float64)
        self.stats_ = anomaly.residual_stats(E, self.n_latent)
        self.threshold_ = anomaly.t2_threshold(self.stats_, self.alpha, self.dof)
        self.classes_ = np.array([False, True])
        return self

    @classmethod
    def from_stats(cls, stats: anomaly.ResidualStats, alpha=0.99, dof="latent"):
        det = cls(alpha=alpha, dof=dof, n_latent=stats.n_latent)
        det.stats_ = stats
        det.threshold_ = anomaly.t2_threshold(stats, alpha, dof)
        det.classes_ = np.array([False, True])
        return det

    def decision_function(self, E):
        check_is_fitted(self, "stats_")
        return anomaly.t2_score(check_array(E, dtype=np.float64), self.stats_)

    def predict(self, E):
        return self.decision_function(E) > self.threshold_
