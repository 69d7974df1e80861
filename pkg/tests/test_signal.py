import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armident.signal import (
    Dataset,
    PolynomialDifferentiator,
    estimate_derivatives,
    polynomial_derivatives,
)

RATE = 100.0


def _t(n=400, rate=RATE):
    return np.arange(n) / rate


def _interior(x, window=11):
    h = window // 2
    return x[h:-h]


def test_ramp():
    t = _t()
    dq, ddq = polynomial_derivatives(t, 3 * t)
    np.testing.assert_allclose(dq, 3.0, atol=1e-9)
    np.testing.assert_allclose(ddq, 0.0, atol=1e-7)


def test_parabola():
    t = _t()
    _, ddq = polynomial_derivatives(t, t**2)
    np.testing.assert_allclose(_interior(ddq), 2.0, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.sampled_from([7, 11, 15]))
def test_exact_on_cubics(coeffs, window):
    t = _t(200)
    c0, c1, c2, c3 = coeffs
    y = c0 + c1 * t + c2 * t**2 + c3 * t**3
    dq, ddq = polynomial_derivatives(t, y, window, 3)
    np.testing.assert_allclose(dq, c1 + 2 * c2 * t + 3 * c3 * t**2, atol=1e-6)
    np.testing.assert_allclose(ddq, 2 * c2 + 6 * c3 * t, atol=1e-4)


def test_sinusoid_error():
    t = _t(1000)
    w = 2 * np.pi
    dq, _ = polynomial_derivatives(t, np.sin(w * t), 11, 3)
    assert np.abs(_interior(dq) - _interior(w * np.cos(w * t))).max() < 1e-3


def test_time_reversal():
    rng = np.random.default_rng(0)
    t = _t(300)
    y = np.cumsum(rng.normal(size=300)) * 0.01
    dq, ddq = polynomial_derivatives(t, y)
    dq_r, ddq_r = polynomial_derivatives(t, y[::-1])
    np.testing.assert_allclose(_interior(dq_r[::-1]), -_interior(dq), atol=1e-9)
    np.testing.assert_allclose(_interior(ddq_r[::-1]), _interior(ddq), atol=1e-7)


def test_zero_phase():
    # 4 Hz is below a tenth of the 50 Hz Nyquist frequency
    f = 4.0
    t = _t(2000)
    y = np.sin(2 * np.pi * f * t)
    dq, _ = polynomial_derivatives(t, y)
    ref = 2 * np.pi * f * np.cos(2 * np.pi * f * t)
    a, b = _interior(dq), _interior(ref)
    # phase of the estimate relative to the analytic derivative
    analytic = np.exp(-2j * np.pi * f * _interior(t))
    phase = np.angle(np.sum(a * analytic) / np.sum(b * analytic))
    assert abs(np.degrees(phase)) < 1.0


def test_non_uniform_sampling():
    rng = np.random.default_rng(1)
    t = np.cumsum(rng.uniform(0.005, 0.015, 500))
    dq, ddq = polynomial_derivatives(t, 0.5 * t**2 - t)
    np.testing.assert_allclose(dq, t - 1, atol=1e-8)
    np.testing.assert_allclose(ddq, 1.0, atol=1e-6)


@pytest.mark.parametrize(
    "window, degree, n, message",
    [(11, 1, 100, "degree"), (3, 3, 100, "window"), (10, 3, 100, "odd"), (11, 3, 5, "short")],
)
def test_invalid_settings(window, degree, n, message):
    t = _t(n)
    with pytest.raises(ValueError, match=message):
        polynomial_derivatives(t, t, window, degree)


def test_dataset_round_trip():
    t = _t(50)
    q = np.column_stack([np.sin(t), 2 * t])
    d = Dataset(t, q, np.zeros((50, 1)), np.zeros((50, 6)))
    assert not d.has_derivatives
    d2 = estimate_derivatives(d)
    assert d2.has_derivatives and d2.dq.shape == q.shape
    np.testing.assert_allclose(d2.dq[:, 1], 2.0, atol=1e-9)
    d3 = PolynomialDifferentiator().fit(d).transform(d)
    np.testing.assert_array_equal(d3.dq, d2.dq)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(t=[0.0, 0.0, 1.0]), "strictly increasing"),
        (dict(q=np.full((3, 1), np.nan)), "non-finite"),
        (dict(wrench=np.zeros((3, 5))), "6 columns"),
        (dict(pwm=np.zeros((2, 1))), "rows"),
    ],
)
def test_dataset_validation(kwargs, message):
    base = dict(t=[0.0, 0.1, 0.2], q=np.zeros((3, 1)), pwm=np.zeros((3, 1)),
                wrench=np.zeros((3, 6)))
    base.update(kwargs)
    with pytest.raises(ValueError, match=message):
        Dataset(**base)


def test_dataset_is_read_only():
    d = Dataset([0.0, 1.0], np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((2, 6)))
    with pytest.raises(ValueError):
        d.q[0, 0] = 1.0
