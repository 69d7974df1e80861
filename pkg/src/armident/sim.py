"""Synthetic arm with known parameters: excitation trajectories and noisy
PWM/wrench measurements, optionally with labelled external contacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import rnea
from .model import ChainModel, pack_inertial
from .regressors import N_FRICTION, ParameterLayout, friction_block, friction_regressor_row, motor_velocities
from .signal import Dataset


class Trajectory(NamedTuple):
    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray


def generate_trajectory(n_joints: int, duration: float, rate: float, seed: int,
                        limits=None, freq_range=(0.05, 0.5), n_sines: int = 3,
                        fill: float = 0.95) -> Trajectory:
    """Sum-of-sinusoids excitation, ``n_sines`` per joint.

    ``limits`` is an (n_joints, 2) array of lower/upper angles (default
    +-1 rad). Each joint oscillates about the middle of its range with
    amplitudes summing to ``fill`` times the half range, so it never leaves
    the limits. Frequencies are drawn from ``freq_range`` [Hz].
    """
    n_samples = int(round(duration * rate))
    if n_samples < 10:
        raise ValueError(f"duration * rate = {duration * rate:g} gives fewer than 10 samples")
    if limits is None:
        limits = np.tile([-1.0, 1.0], (n_joints, 1))
    limits = np.asarray(limits, dtype=float).reshape(n_joints, 2)
    if not np.all(np.isfinite(limits)) or np.any(limits[:, 1] <= limits[:, 0]):
        raise ValueError("invalid joint limits: need finite lower < upper for every joint")
    f_lo, f_hi = freq_range
    if not 0 < f_lo <= f_hi:
        raise ValueError(f"invalid frequency range {freq_range}")

    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.2, 1.0, (n_joints, n_sines))
    half = 0.5 * (limits[:, 1] - limits[:, 0])
    amp = fill * half[:, None] * weights / weights.sum(axis=1, keepdims=True)
    freq = rng.uniform(f_lo, f_hi, (n_joints, n_sines))
    phase = rng.uniform(0.0, 2 * np.pi, (n_joints, n_sines))
    center = limits.mean(axis=1)

    t = np.arange(n_samples) / rate
    om = 2 * np.pi * freq
    arg = om[None] * t[:, None, None] + phase[None]
    q = center + np.sum(amp * np.sin(arg), axis=2)
    dq = np.sum(amp * om * np.cos(arg), axis=2)
    ddq = -np.sum(amp * om**2 * np.sin(arg), axis=2)
    return Trajectory(t, q, dq, ddq)


@dataclass(frozen=True)
class NoiseLevels:
    """Standard deviations of the i.i.d. Gaussian measurement noise."""

    force: float = 0.0
    torque: float = 0.0
    pwm: float = 0.0
    encoder: float = 0.0


@dataclass(frozen=True)
class ContactEpisode:
    """Constant wrench on ``body`` (body frame, about its origin) for
    ``start <= t < end``."""

    start: float
    end: float
    wrench: tuple
    body: int


@dataclass(frozen=True)
class GroundTruth:
    phi: np.ndarray
    noise: NoiseLevels = NoiseLevels()
    contacts: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "phi": np.asarray(self.phi).tolist(),
            "noise": vars(self.noise).copy(),
            "contacts": [
                {"start": c.start, "end": c.end, "wrench": list(c.wrench), "body": c.body}
                for c in self.contacts
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> "GroundTruth":
        return cls(
            np.asarray(doc["phi"], dtype=float),
            NoiseLevels(**doc.get("noise", {})),
            tuple(ContactEpisode(c["start"], c["end"], tuple(c["wrench"]), int(c["body"]))
                  for c in doc.get("contacts", [])),
        )


def random_inertial(rng, mass_range=(0.3, 1.5), com_radius=0.06) -> np.ndarray:
    """A physically consistent 10-vector: positive mass, COM in a ball,
    inertia about the COM positive definite with the triangle inequality."""
    m = rng.uniform(*mass_range)
    c = rng.uniform(-com_radius, com_radius, 3)
    # principal moments of a box with random side lengths
    sides = rng.uniform(0.03, 0.15, 3)
    sq = sides**2
    moments = m / 12.0 * np.array([sq[1] + sq[2], sq[0] + sq[2], sq[0] + sq[1]])
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Ic = Q @ np.diag(moments) @ Q.T
    return pack_inertial(m, c, Ic)


def random_ground_truth(model: ChainModel, seed: int, noise: NoiseLevels = NoiseLevels(),
                        contacts=()) -> GroundTruth:
    """Random plausible parameters in the sample-block column layout."""
    rng = np.random.default_rng(seed)
    lay = ParameterLayout.for_model(model)
    Phi = np.zeros(lay.size)
    Phi[lay.inertial] = np.concatenate([random_inertial(rng) for _ in model.bodies])
    Phi[lay.offset] = np.concatenate([rng.uniform(-2.0, 2.0, 3), rng.uniform(-0.2, 0.2, 3)])

    def friction(count):
        coul = rng.uniform(0.02, 0.3, (count, 2))
        visc = rng.uniform(0.01, 0.2, (count, 2))
        return np.column_stack([coul, visc]).reshape(-1)

    nI, nU = len(model.coupled_joints), len(model.uncoupled_joints)
    Phi[lay.joint_friction_coupled] = friction(nI)
    Phi[lay.joint_friction_uncoupled] = friction(nU)
    Phi[lay.motor_friction] = 0.5 * friction(nI)
    Phi[lay.gains_coupled] = rng.uniform(0.004, 0.02, nI)
    Phi[lay.gains_uncoupled] = rng.uniform(0.004, 0.02, nU)
    return GroundTruth(Phi, noise, tuple(contacts))


def contact_labels(t, contacts) -> np.ndarray:
    t = np.asarray(t)
    label = np.zeros(t.size, dtype=bool)
    for c in contacts:
        label |= (t >= c.start) & (t < c.end)
    return label


def external_wrenches(model: ChainModel, t, contacts) -> np.ndarray:
    ext = np.zeros((np.size(t), model.n_bodies, 6))
    for c in contacts:
        if not 0 <= c.body < model.n_bodies:
            raise ValueError(f"contact body {c.body} out of range")
        inside = (t >= c.start) & (t < c.end)
        ext[inside, c.body] += np.asarray(c.wrench, dtype=float)
    return ext


def noise_free_measurements(model: ChainModel, Phi, q, dq, ddq, external=None):
    """PWM and sensor wrench implied by parameters ``Phi`` along a motion.

    Torques come from inverse dynamics; the motor equations are inverted
    for the PWM. Returns ``(pwm, wrench)``.
    """
    lay = ParameterLayout.for_model(model)
    parts = lay.split(Phi)
    gains = np.concatenate([parts["gains_coupled"], parts["gains_uncoupled"]])
    if np.any(gains == 0):
        raise ValueError("zero drive gain: PWM is undefined")

    dyn = rnea(model, parts["inertial"], q, dq, ddq, external)
    wrench = dyn.cut_wrench + parts["offset"]
    N = dyn.torques.shape[0]
    pwm = np.zeros((N, len(model.measured_joints)))
    col = {j: i for i, j in enumerate(model.measured_joints)}
    dq = np.atleast_2d(dq)

    if model.coupled_group is not None:
        group = model.coupled_group
        idx = list(group.joint_indices)
        tau_I = dyn.torques[:, idx] + np.einsum(
            "nij,j->ni", friction_block(dq[:, idx]), parts["joint_friction_coupled"].reshape(-1)
        )
        tau_m = np.linalg.solve(group.coupling_transpose, tau_I.T).T
        motor_fric = np.einsum(
            "nij,j->ni",
            friction_block(motor_velocities(group, dq[:, idx])),
            parts["motor_friction"].reshape(-1),
        )
        pwm[:, [col[j] for j in idx]] = (tau_m + motor_fric) / parts["gains_coupled"]
    for u, j in enumerate(model.uncoupled_joints):
        tau = dyn.torques[:, j] + friction_regressor_row(dq[:, j]) @ parts["joint_friction_uncoupled"][u]
        pwm[:, col[j]] = tau / parts["gains_uncoupled"][u]
    return pwm, wrench


def simulate_measurements(model: ChainModel, truth: GroundTruth, trajectory: Trajectory,
                          seed: int) -> Dataset:
    """Noisy dataset (no derivative columns) with contact labels.

    Encoder noise is added to the reported joint angles only; the dynamics
    use the exact motion.
    """
    t, q, dq, ddq = trajectory
    ext = external_wrenches(model, t, truth.contacts) if truth.contacts else None
    pwm, wrench = noise_free_measurements(model, truth.phi, q, dq, ddq, ext)

    rng = np.random.default_rng(seed)
    nz = truth.noise
    q_meas = q + nz.encoder * rng.standard_normal(q.shape)
    pwm = pwm + nz.pwm * rng.standard_normal(pwm.shape)
    wrench = wrench + np.concatenate(
        [nz.force * rng.standard_normal((len(t), 3)), nz.torque * rng.standard_normal((len(t), 3))],
        axis=1,
    )
    return Dataset(t, q_meas, pwm, wrench, contact=contact_labels(t, truth.contacts))


__all__ = [
    "ContactEpisode", "GroundTruth", "NoiseLevels", "Trajectory", "generate_trajectory",
    "noise_free_measurements", "random_ground_truth", "simulate_measurements",
]
