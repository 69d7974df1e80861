import numpy as np
import pytest

from armident.anomaly import ResidualStats, sample_residuals, t2_score
from armident.model import unpack_inertial
from armident.regressors import ParameterLayout, stack_dataset
from armident.signal import Dataset
from armident.sim import (
    ContactEpisode,
    GroundTruth,
    NoiseLevels,
    generate_trajectory,
    noise_free_measurements,
    random_ground_truth,
    simulate_measurements,
)

from conftest import NOISE, pendulum


def test_trajectory_determinism():
    a = generate_trajectory(4, 20.0, 100.0, seed=3)
    b = generate_trajectory(4, 20.0, 100.0, seed=3)
    c = generate_trajectory(4, 20.0, 100.0, seed=4)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert not np.array_equal(a.q, c.q)


def test_trajectory_limits():
    limits = np.array([[-0.2, 0.5], [0.0, 1.0], [-2.0, -1.0]])
    traj = generate_trajectory(3, 200.0, 100.0, seed=5, limits=limits, fill=1.0)
    assert np.all(traj.q >= limits[:, 0]) and np.all(traj.q <= limits[:, 1])
    assert traj.t.size == 20000


def test_trajectory_spectrum_is_band_limited():
    f_max = 0.5
    traj = generate_trajectory(2, 600.0, 100.0, seed=6, freq_range=(0.05, f_max))
    x = traj.q - traj.q.mean(axis=0)
    X = np.abs(np.fft.rfft(x * np.hanning(len(x))[:, None], axis=0)) ** 2
    f = np.fft.rfftfreq(len(x), 0.01)
    above = X[f > 2 * f_max].sum(axis=0) / X.sum(axis=0)
    assert np.all(above < 1e-6)


def test_trajectory_derivatives_are_consistent():
    traj = generate_trajectory(3, 10.0, 1000.0, seed=7)
    dt = traj.t[1] - traj.t[0]
    np.testing.assert_allclose(np.gradient(traj.q, dt, axis=0)[1:-1], traj.dq[1:-1], atol=1e-4)
    np.testing.assert_allclose(np.gradient(traj.dq, dt, axis=0)[1:-1], traj.ddq[1:-1], atol=1e-4)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(duration=0.05), "fewer than 10"),
        (dict(limits=[[1.0, 0.0]]), "invalid joint limits"),
        (dict(freq_range=(0.0, 1.0)), "frequency range"),
    ],
)
def test_trajectory_errors(kwargs, message):
    args = dict(n_joints=1, duration=10.0, rate=100.0, seed=0)
    args.update(kwargs)
    with pytest.raises(ValueError, match=message):
        generate_trajectory(**args)


def test_ground_truth_is_physical(ref_model):
    truth = random_ground_truth(ref_model, seed=9)
    parts = ParameterLayout.for_model(ref_model).split(truth.phi)
    for k in range(ref_model.n_bodies):
        m, mc, Io = unpack_inertial(parts["inertial"][10 * k:10 * k + 10])
        c = mc / m
        Ic = Io - m * (c @ c * np.eye(3) - np.outer(c, c))
        assert m > 0
        assert np.linalg.eigvalsh(Ic).min() > 0
    assert np.all(parts["gains_coupled"] > 0) and np.all(parts["gains_uncoupled"] > 0)
    for key in ("joint_friction_coupled", "joint_friction_uncoupled", "motor_friction"):
        assert np.all(parts[key] >= 0)


def test_ground_truth_round_trip(ref_model):
    truth = random_ground_truth(ref_model, 2, NOISE, (ContactEpisode(1.0, 2.0, (1, 0, 0, 0, 0, 0), 6),))
    again = GroundTruth.from_dict(truth.to_dict())
    assert np.array_equal(again.phi, truth.phi)
    assert again.noise == truth.noise and again.contacts == truth.contacts


def test_noise_free_self_consistency(ref_model, truth, exact_train):
    A, b = stack_dataset(ref_model, exact_train.subset(slice(0, 3000)))
    assert np.abs(A @ truth.phi - b).max() < 1e-8


def test_pendulum_pwm_is_gravity_torque_over_gain():
    g = 9.81
    model = pendulum(gravity=(0.0, -g, 0.0))
    lay = ParameterLayout.for_model(model)
    phi = np.zeros(lay.size)
    m, cx, cy = 0.9, 0.15, 0.02
    phi[:10] = [m, m * cx, m * cy, 0, 0.01, 0, 0, 0.01, 0, 0.01]
    gain = 0.012
    phi[lay.gains_uncoupled] = gain
    q = np.linspace(-2, 2, 9)[:, None]
    z = np.zeros_like(q)
    pwm, _ = noise_free_measurements(model, phi, q, z, z)
    np.testing.assert_allclose(pwm[:, 0], m * g * (cx * np.cos(q[:, 0]) - cy * np.sin(q[:, 0])) / gain,
                               rtol=1e-12)


def test_zero_gain_rejected(ref_model, truth):
    phi = truth.phi.copy()
    phi[ParameterLayout.for_model(ref_model).gains_uncoupled] = 0.0
    z = np.zeros((1, 4))
    with pytest.raises(ValueError, match="zero drive gain"):
        noise_free_measurements(ref_model, phi, z, z, z)


def test_zero_wrench_contact_changes_nothing(ref_model, truth):
    traj = generate_trajectory(4, 20.0, 100.0, seed=1)
    plain = simulate_measurements(ref_model, truth, traj, seed=4)
    ghost = GroundTruth(truth.phi, truth.noise, (ContactEpisode(5.0, 8.0, (0,) * 6, 6),))
    touched = simulate_measurements(ref_model, ghost, traj, seed=4)
    assert np.array_equal(plain.q, touched.q)
    assert np.array_equal(plain.pwm, touched.pwm)
    assert np.array_equal(plain.wrench, touched.wrench)
    inside = (traj.t >= 5.0) & (traj.t < 8.0)
    assert np.array_equal(touched.contact, inside)
    assert not plain.contact.any()


def test_injected_noise_levels(ref_model, truth):
    traj = generate_trajectory(4, 100.0, 100.0, seed=2)
    noisy = simulate_measurements(ref_model, truth, traj, seed=5)
    pwm, wrench = noise_free_measurements(ref_model, truth.phi, traj.q, traj.dq, traj.ddq)
    checks = [
        (noisy.wrench[:, :3] - wrench[:, :3], NOISE.force),
        (noisy.wrench[:, 3:] - wrench[:, 3:], NOISE.torque),
        (noisy.pwm - pwm, NOISE.pwm),
        (noisy.q - traj.q, NOISE.encoder),
    ]
    for err, sigma in checks:
        assert err.shape[0] == 10_000
        assert np.all(np.abs(err.std(axis=0) / sigma - 1) < 0.05)


def test_contacts_raise_t2(ref_model, truth):
    stats = ResidualStats(np.array([1.0] * 4 + [NOISE.force**2] * 3 + [NOISE.torque**2] * 3),
                          n_samples=10_000, n_latent=66)
    gaps = []
    for seed in range(5):
        traj = generate_trajectory(4, 30.0, 100.0, seed=seed)
        contact = GroundTruth(truth.phi, NOISE, (ContactEpisode(10.0, 20.0, (0.3, 0, 0.3, 0, 0, 0), 6),))
        runs = []
        for gt in (GroundTruth(truth.phi, NOISE), contact):
            d = simulate_measurements(ref_model, gt, traj, seed=50 + seed)
            d = Dataset(d.t, traj.q, d.pwm, d.wrench, d.contact, traj.dq, traj.ddq)
            runs.append(t2_score(sample_residuals(ref_model, d, truth.phi), stats))
        inside = (traj.t >= 10.0) & (traj.t < 20.0)
        gaps.append(runs[1][inside].mean() - runs[0][inside].mean())
    assert min(gaps) > 0
