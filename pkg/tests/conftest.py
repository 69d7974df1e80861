"""Shared fixtures: the reference arm, a pendulum, simulated datasets and a
fitted identifier. Expensive objects are session scoped."""

from __future__ import annotations

import numpy as np
import pytest

from armident.estimators import DynamicsIdentifier
from armident.model import Body, ChainModel, reference_model
from armident.signal import Dataset
from armident.sim import (
    ContactEpisode,
    NoiseLevels,
    generate_trajectory,
    noise_free_measurements,
    random_ground_truth,
    simulate_measurements,
)

NOISE = NoiseLevels(force=0.1, torque=0.01, pwm=1.0, encoder=1e-4)
RATE = 100.0
TRUTH_SEED = 1

# lines printed at the end of the run by pytest_terminal_summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pendulum(gravity=(0.0, -9.81, 0.0), sensor_body=-1) -> ChainModel:
    """One revolute link about the base z axis, sensor at the base."""
    return ChainModel(
        bodies=(Body("link", (0.0, 0.0, 0.0, 0.0)),),
        measured_joints=(0,),
        sensor_body=sensor_body,
        sensor_transform=np.eye(4),
        gravity=np.array(gravity),
        name="pendulum",
    )


def exact_dataset(model, truth, duration, seed, external=None):
    """Noise-free dataset carrying the analytic derivatives."""
    traj = generate_trajectory(model.n_joints, duration, RATE, seed)
    pwm, wrench = noise_free_measurements(model, truth.phi, traj.q, traj.dq, traj.ddq, external)
    return Dataset(traj.t, traj.q, pwm, wrench, dq=traj.dq, ddq=traj.ddq)


def contact_episodes(duration, period=20.0, length=3.0, body=6, wrench=(1, 1, 1, 0, 0, 0)):
    starts = np.arange(10.0, duration - length, period)
    return tuple(ContactEpisode(float(s), float(s + length), tuple(map(float, wrench)), body)
                 for s in starts)


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def truth(ref_model):
    return random_ground_truth(ref_model, TRUTH_SEED, NOISE)


@pytest.fixture(scope="session")
def exact_train(ref_model, truth):
    return exact_dataset(ref_model, truth, 300.0, seed=0)


@pytest.fixture(scope="session")
def exact_heldout(ref_model, truth):
    return exact_dataset(ref_model, truth, 60.0, seed=11)


@pytest.fixture(scope="session")
def noisy_train(ref_model, truth):
    traj = generate_trajectory(ref_model.n_joints, 300.0, RATE, seed=0)
    return simulate_measurements(ref_model, truth, traj, seed=100)


@pytest.fixture(scope="session")
def noisy_heldout(ref_model, truth):
    traj = generate_trajectory(ref_model.n_joints, 300.0, RATE, seed=1)
    return simulate_measurements(ref_model, truth, traj, seed=101)


@pytest.fixture(scope="session")
def contact_data(ref_model, truth):
    duration = 200.0
    with_contacts = random_ground_truth(ref_model, TRUTH_SEED, NOISE, contact_episodes(duration))
    traj = generate_trajectory(ref_model.n_joints, duration, RATE, seed=2)
    return simulate_measurements(ref_model, with_contacts, traj, seed=102)


@pytest.fixture(scope="session")
def identified(ref_model, noisy_train):
    return DynamicsIdentifier(ref_model).fit(noisy_train)
