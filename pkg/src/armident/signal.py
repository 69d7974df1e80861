"""Time-series container and noncausal derivative estimation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

DEFAULT_WINDOW = 11
DEFAULT_DEGREE = 3


@dataclass(frozen=True)
class Dataset:
    """Synchronised joint, PWM and wrench samples.

    Attributes
    ----------
    t : (N,) strictly increasing time stamps [s]
    q : (N, n_joints) joint angles [rad]
    pwm : (N, n_measured) motor PWM, in measured-joint order
    wrench : (N, 6) F/T sensor reading ``fx fy fz mx my mz``
    contact : (N,) bool, optional ground-truth contact labels
    dq, ddq : (N, n_joints), optional derivative estimates
    """

    t: np.ndarray
    q: np.ndarray
    pwm: np.ndarray
    wrench: np.ndarray
    contact: np.ndarray | None = None
    dq: np.ndarray | None = None
    ddq: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        N = t.size
        fields = {"t": t}
        for name in ("q", "pwm", "wrench", "dq", "ddq"):
            x = getattr(self, name)
            if x is None:
                continue
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(N, -1)
            if x.ndim != 2 or x.shape[0] != N:
                raise ValueError(f"column {name!r} has {x.shape[0] if x.ndim else 0} rows, expected {N}")
            if not np.all(np.isfinite(x)):
                raise ValueError(f"column {name!r} contains non-finite values")
            fields[name] = x
        if fields["wrench"].shape[1] != 6:
            raise ValueError("wrench must have 6 columns")
        for name in ("dq", "ddq"):
            if name in fields and fields[name].shape != fields["q"].shape:
                raise ValueError(f"{name} must have the same shape as q")
        if not np.all(np.isfinite(t)):
            raise ValueError("column 't' contains non-finite values")
        if N > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        if self.contact is not None:
            c = np.asarray(self.contact).reshape(-1).astype(bool)
            if c.size != N:
                raise ValueError(f"column 'contact' has {c.size} rows, expected {N}")
            fields["contact"] = c
        for name, x in fields.items():
            x.setflags(write=False)
            object.__setattr__(self, name, x)

    def __len__(self):
        return self.t.size

    @property
    def has_derivatives(self) -> bool:
        return self.dq is not None and self.ddq is not None

    def with_derivatives(self, dq, ddq) -> "Dataset":
        return replace(self, dq=dq, ddq=ddq)

    def without_derivatives(self) -> "Dataset":
        return replace(self, dq=None, ddq=None)

    def subset(self, index) -> "Dataset":
        pick = lambda x: None if x is None else x[index]  # noqa: E731
        return Dataset(
            self.t[index], self.q[index], self.pwm[index], self.wrench[index],
            pick(self.contact), pick(self.dq), pick(self.ddq),
        )


def _check_window(window, degree, n):
    if degree < 2:
        raise ValueError(f"polynomial degree must be at least 2, got {degree}")
    if window < degree + 1:
        raise ValueError(f"window ({window}) must be at least degree + 1 ({degree + 1})")
    if window % 2 != 1:
        raise ValueError(f"window must be odd, got {window}")
    if n < window:
        raise ValueError(f"dataset too short: {n} samples for a window of {window}")


def polynomial_derivatives(t, y, window: int = DEFAULT_WINDOW, degree: int = DEFAULT_DEGREE):
    """First and second derivatives of local least-squares polynomial fits.

    Each sample gets a polynomial of ``degree`` fitted over ``window``
    samples, in actual time coordinates, centred on it where possible; the
    first and last ``window // 2`` samples reuse the nearest full window
    (one-sided). Returns ``(dy, ddy)`` with the shape of ``y``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    n = t.size
    _check_window(window, degree, n)
    half = window // 2

    # window start for every sample
    start = np.clip(np.arange(n) - half, 0, n - window)
    idx = start[:, None] + np.arange(window)
    # local abscissa, scaled for conditioning
    dt = t[idx] - t[:, None]
    scale = np.max(np.abs(dt), axis=1, keepdims=True)
    x = dt / scale
    V = x[..., None] ** np.arange(degree + 1)
    # rows 1 and 2 of the pseudo-inverse give the derivative weights at x = 0
    pinv = np.linalg.pinv(V)
    s = scale[:, 0]
    w1 = pinv[:, 1, :] / s[:, None]
    w2 = 2.0 * pinv[:, 2, :] / (s * s)[:, None]
    win = y[idx]
    dy = np.einsum("nw,nwk->nk", w1, win)
    ddy = np.einsum("nw,nwk->nk", w2, win)
    if squeeze:
        return dy[:, 0], ddy[:, 0]
    return dy, ddy


def estimate_derivatives(dataset: Dataset, window: int = DEFAULT_WINDOW,
                         degree: int = DEFAULT_DEGREE) -> Dataset:
    """Return a copy of ``dataset`` with ``dq``/``ddq`` estimated from ``q``."""
    dq, ddq = polynomial_derivatives(dataset.t, dataset.q, window, degree)
    return dataset.with_derivatives(dq, ddq)


class PolynomialDifferentiator(TransformerMixin, BaseEstimator):
    """Transformer filling in joint velocity/acceleration estimates.

    Stateless: ``fit`` only validates the hyper-parameters.
    """

    def __init__(self, window=DEFAULT_WINDOW, degree=DEFAULT_DEGREE):
        self.window = window
        self.degree = degree

    def fit(self, X, y=None):
        _check_window(self.window, self.degree, len(X.t))
        return self

    def transform(self, X):
        return estimate_derivatives(X, self.window, self.degree)
