"""Partial least squares regression by NIPALS, for a single response.

The fitted estimator exposes the score-loading decomposition

    A = T P^T + E_A,     b = T C + e_b

and the coefficient vector ``W (P^T W)^-1 C``, which stays well defined when
columns of ``A`` are collinear or structurally redundant.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

MAX_ITER = 500
INNER_TOL = 1e-12
RANK_TOL = 1e-8
DEGENERATE_TOL = 1e-14


class ConvergenceError(RuntimeError):
    pass


def _preprocess(A, center, scale):
    mean = A.mean(axis=0) if center else np.zeros(A.shape[1])
    Ac = A - mean if center else A.copy()
    if scale:
        std = Ac.std(axis=0, ddof=1) if A.shape[0] > 1 else np.ones(A.shape[1])
        std = np.where(std > 0, std, 1.0)
        Ac /= std
    else:
        std = np.ones(A.shape[1])
    return Ac, mean, std


def select_latent_count(A, b=None, policy="rank", tol=RANK_TOL, folds=5, center=False,
                        scale=False):
    """Number of latent variables to extract.

    ``policy="rank"`` counts singular values of the (centred) matrix above
    ``tol * sigma_max``. ``policy="cv"`` picks the count in ``1..rank`` with
    the smallest contiguous ``folds``-fold prediction error.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise ValueError("empty matrix")
    Ac, _, _ = _preprocess(A, center, scale)
    sv = np.linalg.svd(Ac, compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    if policy == "rank":
        return rank
    if policy != "cv":
        raise ValueError(f"unknown latent-count policy {policy!r}")
    if b is None:
        raise ValueError("policy 'cv' needs the response vector")
    if rank == 0:
        return 0
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if folds < 2 or n < folds:
        raise ValueError(f"cannot run {folds}-fold cross-validation on {n} rows")
    edges = np.linspace(0, n, folds + 1).astype(int)
    press = np.zeros(rank)
    for lo, hi in zip(edges[:-1], edges[1:]):
        train = np.r_[0:lo, hi:n]
        fold_rank = min(rank, train.size - int(center))
        est = NIPALSRegression(n_components=fold_rank, center=center, scale=scale)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est.fit(A[train], b[train])
        for k in range(1, rank + 1):
            pred = est.predict(A[lo:hi], n_components=min(k, est.n_components_))
            press[k - 1] += np.sum((b[lo:hi] - pred) ** 2)
    return int(np.argmin(press)) + 1


class NIPALSRegression(RegressorMixin, BaseEstimator):
    """PLS1 regression fitted with NIPALS.

    Parameters
    ----------
    n_components : int or None
        Latent variables to extract. ``None`` chooses with ``policy``.
    policy : {"rank", "cv"}
    rank_tol : float
        Relative singular-value cutoff of the ``"rank"`` policy.
    center, scale : bool
        Mean-centre the columns of ``A`` and ``b``; divide the columns of
        ``A`` by their standard deviation.
    max_iter : int
        Cap on inner NIPALS iterations per component.
    tol : float
        Relative score change that ends the inner iteration.
    keep_scores : bool
        Keep the (rows x components) score matrix after fitting.

    Attributes
    ----------
    x_scores_ : T, x_loadings_ : P, x_weights_ : W, y_loadings_ : C
    coef_ : estimated parameter vector in the original units
    intercept_ : float
    x_residual_norms_ : Frobenius norm of the deflated ``A`` after each component
    """

    def __init__(self, n_components=None, policy="rank", rank_tol=RANK_TOL, center=False,
                 scale=False, max_iter=MAX_ITER, tol=INNER_TOL, keep_scores=True):
        self.n_components = n_components
        self.policy = policy
        self.rank_tol = rank_tol
        self.center = center
        self.scale = scale
        self.max_iter = max_iter
        self.tol = tol
        self.keep_scores = keep_scores

    def fit(self, A, b):
        A, b = check_X_y(A, b, y_numeric=True, dtype=np.float64)
        rows, cols = A.shape
        nu = self.n_components
        if nu is None:
            nu = select_latent_count(A, b, self.policy, self.rank_tol, center=self.center,
                                     scale=self.scale)
        nu = int(nu)
        if not 1 <= nu <= min(rows, cols):
            raise ValueError(f"number of latent variables {nu} outside 1..{min(rows, cols)}")

        X, x_mean, x_std = _preprocess(A, self.center, self.scale)
        y_mean = float(b.mean()) if self.center else 0.0
        y = b - y_mean
        if not np.any(y):
            raise ValueError("response has zero variance")

        # Deflation is applied implicitly: E_k = X - T P^T is never formed,
        # products with it are expanded instead.
        a_norm = np.linalg.norm(X)
        T = np.empty((rows, nu), order="F")
        P = np.empty((cols, nu))
        W = np.empty((cols, nu))
        C = np.empty(nu)
        res_sq = a_norm**2
        res_norms = []
        n_iter = []
        y_norm = np.linalg.norm(y)
        floor = DEGENERATE_TOL * a_norm
        k = 0
        for k in range(nu):
            if np.linalg.norm(y) <= 1e-14 * y_norm:
                # response reproduced exactly: further components carry nothing
                break
            t, w, c, it = _nipals_component(X, T[:, :k], P[:, :k], y, self.max_iter, self.tol, k,
                                            floor)
            tt = t @ t
            if np.sqrt(tt) < floor:
                warnings.warn(
                    f"component {k} has a degenerate score; stopping at {k} latent variables",
                    RuntimeWarning,
                )
                break
            p = (X.T @ t - P[:, :k] @ (T[:, :k].T @ t)) / tt
            y = y - c * t
            T[:, k], P[:, k], W[:, k], C[k] = t, p, w, c
            res_sq = max(res_sq - tt * (p @ p), 0.0)
            res_norms.append(np.sqrt(res_sq))
            n_iter.append(it)
        else:
            k = nu
        if k == 0:
            raise ValueError("no latent variable could be extracted")

        self.n_components_ = k
        self.x_scores_ = T[:, :k] if self.keep_scores else None
        self.x_loadings_ = P[:, :k]
        self.x_weights_ = W[:, :k]
        self.y_loadings_ = C[:k]
        self.x_mean_ = x_mean
        self.x_scale_ = x_std
        self.y_mean_ = y_mean
        self.x_residual_norms_ = np.array(res_norms)
        self.n_iter_ = np.array(n_iter)
        self.n_features_in_ = cols
        self.n_rows_ = rows
        self.coef_ = estimate_parameters(self)
        self.intercept_ = y_mean - float(x_mean @ self.coef_)
        return self

    def predict(self, A, n_components=None):
        """``A @ coef_ + intercept_``; ``n_components`` truncates the model."""
        check_is_fitted(self, "coef_")
        A = check_array(A, dtype=np.float64)
        if A.shape[1] != self.n_features_in_:
            raise ValueError(
                f"A has {A.shape[1]} columns, model was fitted with {self.n_features_in_}"
            )
        if n_components is None or n_components == self.n_components_:
            coef, intercept = self.coef_, self.intercept_
        else:
            coef = estimate_parameters(self, n_components)
            intercept = self.y_mean_ - float(self.x_mean_ @ coef)
        return A @ coef + intercept


def _nipals_component(X, T, P, y, max_iter, tol, index, floor=0.0):
    """One NIPALS component of the deflated matrix ``X - T P^T``.

    Returns early when the score norm drops below ``floor`` (nothing left
    to extract); the caller decides what to do with it.
    """
    u = y
    t_old = None
    for it in range(1, max_iter + 1):
        w = X.T @ u - P @ (T.T @ u)
        w /= np.linalg.norm(w) if np.any(w) else 1.0
        t = X @ w - T @ (P.T @ w)
        tt = t @ t
        if np.sqrt(tt) < floor:
            return t, w, 0.0, it
        c = (t @ y) / tt if tt > 0 else 0.0
        if t_old is not None:
            change = np.linalg.norm(t - t_old)
            if change <= tol * max(np.linalg.norm(t), np.finfo(float).tiny):
                return t, w, c, it
        if c == 0.0:
            return t, w, c, it
        u = y / c
        t_old = t
    raise ConvergenceError(f"NIPALS component {index} did not converge in {max_iter} iterations")


def estimate_parameters(model: NIPALSRegression, n_components=None) -> np.ndarray:
    """``W (P^T W)^-1 C`` in the units of the original columns."""
    k = model.n_components_ if n_components is None else int(n_components)
    W = model.x_weights_[:, :k]
    P = model.x_loadings_[:, :k]
    C = model.y_loadings_[:k]
    PtW = P.T @ W
    sv = np.linalg.svd(PtW, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise np.linalg.LinAlgError("P^T W is numerically singular")
    beta = W @ np.linalg.solve(PtW, C)
    return beta / model.x_scale_


def nipals_fit(A, b, n_components, center=False, scale=False, **kwargs) -> NIPALSRegression:
    """Fit a PLS model with ``n_components`` latent variables."""
    return NIPALSRegression(n_components=n_components, center=center, scale=scale,
                            **kwargs).fit(A, b)


def predict(model, A_new):
    """Predict with a fitted model, or with a bare parameter vector."""
    if isinstance(model, NIPALSRegression):
        return model.predict(A_new)
    Phi = np.asarray(model, dtype=float)
    A_new = np.atleast_2d(np.asarray(A_new, dtype=float))
    if A_new.shape[1] != Phi.size:
        raise ValueError(f"A has {A_new.shape[1]} columns, parameter vector has {Phi.size}")
    return A_new @ Phi


def model_to_dict(model: NIPALSRegression) -> dict:
    """Serialisable fitted state (scores omitted: not needed to predict)."""
    check_is_fitted(model, "coef_")

    def mat(x):
        x = np.atleast_2d(x) if np.ndim(x) > 1 else np.asarray(x)
        return {"shape": list(x.shape), "data": x.reshape(-1).tolist()}

    return {
        "params": model.get_params(),
        "n_components": model.n_components_,
        "n_rows": model.n_rows_,
        "x_loadings": mat(model.x_loadings_),
        "x_weights": mat(model.x_weights_),
        "y_loadings": mat(model.y_loadings_),
        "x_mean": mat(model.x_mean_),
        "x_scale": mat(model.x_scale_),
        "y_mean": model.y_mean_,
        "coef": mat(model.coef_),
        "intercept": model.intercept_,
        "x_residual_norms": mat(model.x_residual_norms_),
    }


def model_from_dict(doc: dict) -> NIPALSRegression:
    def arr(d):
        return np.asarray(d["data"], dtype=float).reshape(d["shape"])

    est = NIPALSRegression(**doc["params"])
    est.n_components_ = int(doc["n_components"])
    est.n_rows_ = int(doc["n_rows"])
    est.x_scores_ = None
    est.x_loadings_ = arr(doc["x_loadings"])
    est.x_weights_ = arr(doc["x_weights"])
    est.y_loadings_ = arr(doc["y_loadings"])
    est.x_mean_ = arr(doc["x_mean"])
    est.x_scale_ = arr(doc["x_scale"])
    est.y_mean_ = float(doc["y_mean"])
    est.coef_ = arr(doc["coef"])
    est.intercept_ = float(doc["intercept"])
    est.x_residual_norms_ = arr(doc["x_residual_norms"])
    est.n_features_in_ = est.coef_.size
    est.n_iter_ = np.zeros(est.n_components_, dtype=int)
    return est
