"""Hotelling T^2 monitoring of identification residuals, its F-based
control limit, contact detection and ROC evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc, betaln

from . import pls
from .regressors import assemble_blocks

MIN_VARIANCE = 1e-15


@dataclass(frozen=True)
class ResidualStats:
    """Per-output residual variances from the calibration data."""

    variances: np.ndarray
    n_samples: int
    n_latent: int | None = None

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float).reshape(-1)
        if np.any(~np.isfinite(v)) or np.any(v < MIN_VARIANCE):
            raise ValueError("residual variances must be positive")
        # N > n is only needed by the control limit, which checks it
        if self.n_samples < 2:
            raise ValueError("need at least 2 calibration samples")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @property
    def n_outputs(self) -> int:
        return self.variances.size

    def to_dict(self):
        return {"variances": self.variances.tolist(), "n_samples": self.n_samples,
                "n_latent": self.n_latent}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["variances"]), int(doc["n_samples"]), doc.get("n_latent"))


def residual_stats(residuals, n_latent=None) -> ResidualStats:
    """Unbiased per-component variances of (N, n) calibration residuals."""
    E = np.asarray(residuals, dtype=float)
    if E.ndim != 2:
        raise ValueError("residuals must be a 2-D (samples x outputs) array")
    if E.shape[0] < 2:
        raise ValueError("need at least 2 residual samples")
    var = E.var(axis=0, ddof=1)
    bad = np.flatnonzero(var < MIN_VARIANCE)
    if bad.size:
        raise ValueError(f"component {bad[0] + 1} has zero variance")
    return ResidualStats(var, E.shape[0], n_latent)


def t2_score(e, stats: ResidualStats):
    """``sum(e_i^2 / var_i)`` for one residual vector or a (N, n) batch."""
    e = np.asarray(e, dtype=float)
    if e.shape[-1] != stats.n_outputs:
        raise ValueError(f"residual has {e.shape[-1]} components, stats have {stats.n_outputs}")
    return np.sum(e * e / stats.variances, axis=-1)


# -- F distribution -------------------------------------------------------

def _check_dof(d1, d2):
    if not (d1 >= 1 and d2 >= 1 and np.isfinite(d1) and np.isfinite(d2)):
        raise ValueError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")


def f_cdf(x, d1, d2):
    """CDF of Snedecor's F through the regularised incomplete beta."""
    _check_dof(d1, d2)
    x = np.asarray(x, dtype=float)
    z = np.where(x > 0, d1 * x / (d1 * x + d2), 0.0)
    return betainc(d1 / 2.0, d2 / 2.0, z)


def f_pdf(x, d1, d2):
    x = float(x)
    if x <= 0:
        return 0.0
    a, b = d1 / 2.0, d2 / 2.0
    logp = (a * np.log(d1 * x) + b * np.log(d2) - (a + b) * np.log(d1 * x + d2)
            - np.log(x) - betaln(a, b))
    return float(np.exp(logp))


def f_quantile(d1, d2, alpha, tol=1e-12):
    """Quantile of F(d1, d2): bracket, bisect, then Newton-polish."""
    _check_dof(d1, d2)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {alpha}")
    lo, hi = 0.0, 1.0
    while f_cdf(hi, d1, d2) < alpha:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ArithmeticError("could not bracket the F quantile")
    # bisection to a modest relative width
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, d1, d2) < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * hi:
            break
    x = 0.5 * (lo + hi)
    for _ in range(50):
        err = float(f_cdf(x, d1, d2)) - alpha
        if abs(err) < tol:
            break
        if err < 0:
            lo = x
        else:
            hi = x
        dens = f_pdf(x, d1, d2)
        step = err / dens if dens > 0 else np.inf
        x_new = x - step
        # fall back to bisection whenever Newton leaves the bracket
        x = x_new if lo < x_new < hi else 0.5 * (lo + hi)
    return x


def t2_threshold(stats: ResidualStats, alpha: float, dof: str = "latent") -> float:
    """Upper control limit ``n (N-1) / (N-n) * F(n, N-n; alpha)``.

    ``dof="latent"`` uses the number of latent variables for ``n``;
    ``dof="output"`` uses the residual dimension.
    """
    if dof == "latent":
        if stats.n_latent is None:
            raise ValueError("stats carry no latent-variable count")
        n = int(stats.n_latent)
    elif dof == "output":
        n = stats.n_outputs
    else:
        raise ValueError(f"unknown degrees-of-freedom choice {dof!r}")
    N = stats.n_samples
    if N <= n:
        raise ValueError(f"need more calibration samples ({N}) than degrees of freedom ({n})")
    return n * (N - 1) / (N - n) * f_quantile(n, N - n, alpha)


# -- detection and evaluation -------------------------------------------

class Detection(NamedTuple):
    t2: np.ndarray
    flags: np.ndarray
    threshold: float


def sample_residuals(model, dataset, Phi) -> np.ndarray:
    """Per-sample residual blocks ``b - A Phi`` of shape (N, rows).

    ``Phi`` is a fitted :class:`~armident.pls.NIPALSRegression` or a
    parameter vector.
    """
    A, b = assemble_blocks(model, dataset.q, dataset.dq, dataset.ddq, dataset.pwm,
                           dataset.wrench)
    N, rows, cols = A.shape
    pred = pls.predict(Phi, A.reshape(N * rows, cols)).reshape(N, rows)
    return b - pred


def detect_contacts(dataset, model, Phi, stats: ResidualStats, alpha=0.99,
                    dof="latent") -> Detection:
    """Flag samples whose T^2 exceeds the control limit."""
    if not dataset.has_derivatives:
        raise ValueError("dataset has no velocity/acceleration estimates")
    t2 = t2_score(sample_residuals(model, dataset, Phi), stats)
    thr = t2_threshold(stats, alpha, dof)
    return Detection(t2, t2 > thr, thr)


def roc_curve(scores, labels) -> np.ndarray:
    """ROC points ``(fpr, tpr, threshold)`` swept over every distinct score.

    A sample counts as positive when its score is ``>= threshold``. Rows go
    from ``threshold = +inf`` (0, 0) through the distinct scores in
    decreasing order to ``-inf`` (1, 1).
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("labels must contain both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # last index of every run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    thr = s_sorted[last]
    fpr = np.r_[0.0, fp[last] / n_neg, 1.0]
    tpr = np.r_[0.0, tp[last] / n_pos, 1.0]
    thr = np.r_[np.inf, thr, -np.inf]
    return np.column_stack([fpr, tpr, thr])


def roc_auc(curve) -> float:
    curve = np.asarray(curve)
    x, y = curve[:, 0], curve[:, 1]
    return float(np.sum(np.diff(x) * 0.5 * (y[1:] + y[:-1])))


def rates(flags, labels):
    """(true positive rate, false positive rate); ``None`` when undefined."""
    f = np.asarray(flags, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    tpr = float((f & y).sum() / n_pos) if n_pos else None
    fpr = float((f & ~y).sum() / n_neg) if n_neg else None
    return tpr, fpr
