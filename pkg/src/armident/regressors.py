"""Linear-in-parameters regressors for joint torques, the cut wrench and
the motor/friction equations, and their assembly into one block per sample.

Parameter vector layout (columns of every sample block)::

    [ inertial (10 per body)
    | wrench offset (6)
    | joint friction, coupled joints (4 each)
    | joint friction, uncoupled measured joints (4 each)
    | motor friction, coupled motors (4 each)
    | drive gains, coupled motors
    | drive gains, uncoupled measured joints ]

Rows of a block are one torque row per measured joint (coupled group first,
see :attr:`ChainModel.row_joints`) followed by the six wrench rows
``fx, fy, fz, mx, my, mz``. The right-hand side is zero on the torque rows
and the measured wrench on the wrench rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import N_INERTIAL, ChainModel, CoupledGroup, Kinematics, frame_kinematics, inertial_labels

N_FRICTION = 4
FRICTION_NAMES = ("coulomb_pos", "coulomb_neg", "viscous_pos", "viscous_neg")
WRENCH_NAMES = ("fx", "fy", "fz", "mx", "my", "mz")


@dataclass(frozen=True)
class ParameterLayout:
    """Column slices of the stacked parameter vector for a model."""

    inertial: slice
    offset: slice
    joint_friction_coupled: slice
    joint_friction_uncoupled: slice
    motor_friction: slice
    gains_coupled: slice
    gains_uncoupled: slice
    size: int
    n_rows: int

    @classmethod
    def for_model(cls, model: ChainModel) -> "ParameterLayout":
        nI = len(model.coupled_joints)
        nU = len(model.uncoupled_joints)
        sizes = [model.n_inertial, 6, N_FRICTION * nI, N_FRICTION * nU, N_FRICTION * nI, nI, nU]
        edges = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        sl = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        return cls(*sl, size=int(edges[-1]), n_rows=nI + nU + 6)

    def split(self, Phi) -> dict:
        Phi = np.asarray(Phi, dtype=float)
        if Phi.shape != (self.size,):
            raise ValueError(f"parameter vector must have {self.size} entries, got {Phi.shape}")
        return {
            "inertial": Phi[self.inertial],
            "offset": Phi[self.offset],
            "joint_friction_coupled": Phi[self.joint_friction_coupled].reshape(-1, N_FRICTION),
            "joint_friction_uncoupled": Phi[self.joint_friction_uncoupled].reshape(-1, N_FRICTION),
            "motor_friction": Phi[self.motor_friction].reshape(-1, N_FRICTION),
            "gains_coupled": Phi[self.gains_coupled],
            "gains_uncoupled": Phi[self.gains_uncoupled],
        }


def parameter_labels(model: ChainModel) -> list[str]:
    labels = inertial_labels(model)
    labels += [f"offset.{w}" for w in WRENCH_NAMES]
    for j in model.coupled_joints + model.uncoupled_joints:
        labels += [f"joint{j}.{f}" for f in FRICTION_NAMES]
    for j in model.coupled_joints:
        labels += [f"motor{j}.{f}" for f in FRICTION_NAMES]
    labels += [f"gain{j}" for j in model.coupled_joints + model.uncoupled_joints]
    return labels


def row_labels(model: ChainModel) -> list[str]:
    return [f"tau{j}" for j in model.row_joints] + list(WRENCH_NAMES)


# -- inertial blocks ------------------------------------------------------

def body_regressor(omega, domega, acc) -> np.ndarray:
    """(N, 6, 10) map from one body's inertial parameters to its net wrench.

    The wrench ``[f; n]`` is in the body frame with the moment about the body
    origin; ``acc`` is the origin acceleration with gravity subtracted.
    """
    wx, wy, wz = omega[:, 0], omega[:, 1], omega[:, 2]
    dx, dy, dz = domega[:, 0], domega[:, 1], domega[:, 2]
    ax, ay, az = acc[:, 0], acc[:, 1], acc[:, 2]
    K = np.zeros((omega.shape[0], 6, N_INERTIAL))

    # force = m a + (dw^ + w^ w^) h
    K[:, 0, 0], K[:, 1, 0], K[:, 2, 0] = ax, ay, az
    K[:, 0, 1] = -wy * wy - wz * wz
    K[:, 0, 2] = wx * wy - dz
    K[:, 0, 3] = wx * wz + dy
    K[:, 1, 1] = wx * wy + dz
    K[:, 1, 2] = -wx * wx - wz * wz
    K[:, 1, 3] = wy * wz - dx
    K[:, 2, 1] = wx * wz - dy
    K[:, 2, 2] = wy * wz + dx
    K[:, 2, 3] = -wx * wx - wy * wy

    # moment = h x a + I dw + w x (I w)
    K[:, 3, 2], K[:, 3, 3] = az, -ay
    K[:, 4, 1], K[:, 4, 3] = -az, ax
    K[:, 5, 1], K[:, 5, 2] = ay, -ax
    # I @ v == L(v) @ [Ixx, Ixy, Ixz, Iyy, Iyz, Izz]
    K[:, 3:, 4:] = _inertia_map(domega) + np.cross(
        omega[:, :, None], _inertia_map(omega), axisa=1, axisb=1, axisc=1
    )
    return K


def _inertia_map(v):
    L = np.zeros((v.shape[0], 3, 6))
    L[:, 0, 0], L[:, 0, 1], L[:, 0, 2] = v[:, 0], v[:, 1], v[:, 2]
    L[:, 1, 1], L[:, 1, 3], L[:, 1, 4] = v[:, 0], v[:, 1], v[:, 2]
    L[:, 2, 2], L[:, 2, 4], L[:, 2, 5] = v[:, 0], v[:, 1], v[:, 2]
    return L


def _wrench_transport(R, p):
    """(N, 6, 6) map of a wrench from a child frame to its parent frame."""
    N = R.shape[0]
    X = np.zeros((N, 6, 6))
    X[:, :3, :3] = R
    X[:, 3:, 3:] = R
    px = np.zeros((N, 3, 3))
    px[:, 0, 1], px[:, 0, 2] = -p[:, 2], p[:, 1]
    px[:, 1, 0], px[:, 1, 2] = p[:, 2], -p[:, 0]
    px[:, 2, 0], px[:, 2, 1] = -p[:, 1], p[:, 0]
    X[:, 3:, :3] = px @ R
    return X


def _transmitted_wrench_regressors(model: ChainModel, kin: Kinematics):
    """Backward pass: per body, the (N, 6, 10 n_B) regressor of the wrench
    the parent applies to it, in the body frame about its origin."""
    N, nb = kin.omega.shape[:2]
    out = [None] * nb
    U = np.zeros((N, 6, model.n_inertial))
    for k in range(nb - 1, -1, -1):
        if k + 1 < nb:
            X = _wrench_transport(kin.rel_rotation[:, k + 1], kin.rel_position[:, k + 1])
            U = X @ U
        else:
            U = U.copy()
        cols = slice(N_INERTIAL * k, N_INERTIAL * (k + 1))
        U[:, :, cols] += body_regressor(kin.omega[:, k], kin.domega[:, k], kin.acceleration[:, k])
        out[k] = U
    return out


def _kinematics(model, q, dq, ddq):
    return frame_kinematics(model, q, dq, ddq)


def inertial_regressors(model: ChainModel, q, dq, ddq):
    """Joint-torque and cut-wrench regressors in one pass.

    Returns ``(Y_tau, Y_s)`` with shapes (N, n_joints, 10 n_B) and
    (N, 6, 10 n_B).
    """
    kin = _kinematics(model, q, dq, ddq)
    U = _transmitted_wrench_regressors(model, kin)
    Y_tau = np.stack([U[k][:, 5, :] for k in model.joint_bodies], axis=1)

    c1 = model.sensor_body + 1
    Xs = model.sensor_transform
    # sensor frame relative to the parent frame of the first distal body
    X_child = _wrench_transport(kin.rel_rotation[:, c1], kin.rel_position[:, c1])
    Rs, ps = Xs[:3, :3], Xs[:3, 3]
    N = kin.omega.shape[0]
    X_sensor = _wrench_transport(
        np.broadcast_to(Rs.T, (N, 3, 3)), np.broadcast_to(-Rs.T @ ps, (N, 3))
    )
    Y_s = X_sensor @ X_child @ U[c1]
    return Y_tau, Y_s


def inertial_torque_regressor(model: ChainModel, q, dq, ddq) -> np.ndarray:
    """Y_tau: joint torques = Y_tau @ phi. Shape (n_joints, 10 n_B) for a
    single state, (N, n_joints, 10 n_B) for a batch."""
    single = np.ndim(q) == 1
    Y_tau, _ = inertial_regressors(model, q, dq, ddq)
    return Y_tau[0] if single else Y_tau


def sensor_wrench_regressor(model: ChainModel, q, dq, ddq) -> np.ndarray:
    """Y_s: cut wrench in the sensor frame = Y_s @ phi."""
    single = np.ndim(q) == 1
    _, Y_s = inertial_regressors(model, q, dq, ddq)
    return Y_s[0] if single else Y_s


# -- friction and motors --------------------------------------------------

def friction_regressor_row(dq):
    """``[sgn(dq)^+, -sgn(dq)^-, dq^+, -dq^-]`` with ``sgn(0) = 0``.

    Vectorised: an input of shape S gives an output of shape S + (4,).
    """
    dq = np.asarray(dq, dtype=float)
    s = np.sign(dq)
    return np.stack(
        [np.maximum(s, 0.0), -np.maximum(-s, 0.0), np.maximum(dq, 0.0), -np.maximum(-dq, 0.0)],
        axis=-1,
    )


def friction_block(dq) -> np.ndarray:
    """Block-diagonal friction regressor for joints/motors ``dq`` (..., k):
    shape (..., k, 4k)."""
    dq = np.asarray(dq, dtype=float)
    k = dq.shape[-1]
    rows = friction_regressor_row(dq)
    Y = np.zeros(dq.shape[:-1] + (k, N_FRICTION * k))
    for i in range(k):
        Y[..., i, N_FRICTION * i:N_FRICTION * (i + 1)] = rows[..., i, :]
    return Y


def motor_velocities(group: CoupledGroup, dq_I) -> np.ndarray:
    """Motor-side velocities ``T @ dq_I`` (power balance with
    ``tau_I = T^T tau_m``)."""
    dq_I = np.asarray(dq_I, dtype=float)
    return dq_I @ group.coupling_transpose


def coupling_blocks(group: CoupledGroup, dq_I, v_I):
    """The coupled-group motor-friction and drive-gain blocks.

    Returns ``(T^T Y_Fm, -T^T diag(v_I))`` where ``Y_Fm`` is the friction
    regressor evaluated at the motor velocities. Shapes (k, 4k) and (k, k)
    for single samples, with a leading batch axis otherwise.
    """
    dq_I = np.asarray(dq_I, dtype=float)
    v_I = np.asarray(v_I, dtype=float)
    k = group.size
    if dq_I.shape[-1] != k or v_I.shape[-1] != k:
        raise ValueError(f"coupled group has {k} joints; got dq {dq_I.shape}, v {v_I.shape}")
    Tt = group.coupling_transpose
    Y_Fm = friction_block(motor_velocities(group, dq_I))
    motor = Tt @ Y_Fm
    gains = -Tt * v_I[..., None, :]
    return motor, gains


# -- assembly -------------------------------------------------------------

@dataclass(frozen=True)
class SampleBlock:
    matrix: np.ndarray
    rhs: np.ndarray


def _measurement_arrays(model, v, w_s, N):
    m = len(model.measured_joints)
    v = np.asarray(v, dtype=float).reshape(N, m) if m else np.zeros((N, 0))
    w_s = np.asarray(w_s, dtype=float).reshape(N, 6)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w_s))):
        raise ValueError("non-finite measurement")
    return v, w_s


def assemble_blocks(model: ChainModel, q, dq, ddq, v, w_s):
    """Batched sample blocks: (N, rows, P) matrices and (N, rows) rhs.

    ``v`` holds one PWM value per measured joint, in ``model.measured_joints``
    order; ``w_s`` is the measured wrench.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    ddq = np.atleast_2d(np.asarray(ddq, dtype=float))
    N = q.shape[0]
    m = len(model.measured_joints)
    if np.shape(v)[-1:] != (m,) and not (m == 0 and np.size(v) == 0):
        raise ValueError(f"expected {m} PWM values per sample, got shape {np.shape(v)}")
    if np.shape(w_s)[-1:] != (6,):
        raise ValueError(f"measured wrench must have 6 entries, got shape {np.shape(w_s)}")
    v, w_s = _measurement_arrays(model, v, w_s, N)

    lay = ParameterLayout.for_model(model)
    Y_tau, Y_s = inertial_regressors(model, q, dq, ddq)
    pwm_col = {j: i for i, j in enumerate(model.measured_joints)}

    A = np.zeros((N, lay.n_rows, lay.size))
    b = np.zeros((N, lay.n_rows))
    nI = len(model.coupled_joints)

    row = 0
    if nI:
        group = model.coupled_group
        idx = list(group.joint_indices)
        A[:, :nI, lay.inertial] = Y_tau[:, idx, :]
        A[:, :nI, lay.joint_friction_coupled] = friction_block(dq[:, idx])
        motor, gains = coupling_blocks(group, dq[:, idx], v[:, [pwm_col[j] for j in idx]])
        A[:, :nI, lay.motor_friction] = motor
        A[:, :nI, lay.gains_coupled] = gains
        row = nI
    for u, j in enumerate(model.uncoupled_joints):
        A[:, row, lay.inertial] = Y_tau[:, j, :]
        c0 = lay.joint_friction_uncoupled.start + N_FRICTION * u
        A[:, row, c0:c0 + N_FRICTION] = friction_regressor_row(dq[:, j])
        A[:, row, lay.gains_uncoupled.start + u] = -v[:, pwm_col[j]]
        row += 1

    A[:, row:, lay.inertial] = Y_s
    A[:, row:, lay.offset] = np.eye(6)
    b[:, row:] = w_s
    return A, b


def assemble_sample(model: ChainModel, q, dq, ddq, v, w_s) -> SampleBlock:
    """Sample block for one time step."""
    for name, x in (("q", q), ("dq", dq), ("ddq", ddq)):
        if np.ndim(x) != 1:
            raise ValueError(f"{name} must be a single state vector")
    A, b = assemble_blocks(model, q, dq, ddq, np.atleast_1d(v), w_s)
    return SampleBlock(A[0], b[0])


def stack_dataset(model: ChainModel, dataset, chunk: int = 4096, n_jobs: int = 1):
    """Stack the sample blocks of a dataset into ``(A, b)``.

    The dataset must carry derivative estimates. Chunks are written to
    pre-assigned slots, so the result does not depend on ``n_jobs``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.dq is None or dataset.ddq is None:
        raise ValueError("dataset has no velocity/acceleration estimates")
    if dataset.pwm.shape[1] != len(model.measured_joints):
        raise ValueError(
            f"dataset has {dataset.pwm.shape[1]} PWM columns, model measures "
            f"{len(model.measured_joints)} joints"
        )
    if dataset.q.shape[1] != model.n_joints:
        raise ValueError(
            f"dataset has {dataset.q.shape[1]} joint columns, model has {model.n_joints}"
        )
    lay = ParameterLayout.for_model(model)
    N = len(dataset)
    A = np.empty((N, lay.n_rows, lay.size))
    b = np.empty((N, lay.n_rows))

    def work(start):
        s = slice(start, min(start + chunk, N))
        A[s], b[s] = assemble_blocks(
            model, dataset.q[s], dataset.dq[s], dataset.ddq[s], dataset.pwm[s], dataset.wrench[s]
        )

    starts = range(0, N, chunk)
    if n_jobs == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(work, starts))
    return A.reshape(N * lay.n_rows, lay.size), b.reshape(-1)


def predict_measurements(model: ChainModel, Phi, q, dq, ddq):
    """PWM and sensor wrench predicted by a parameter vector.

    Inverts the motor equations for the PWM, which needs nonzero drive gains.
    Returns ``(pwm, wrench)`` with shapes (N, n_measured) and (N, 6).
    """
    lay = ParameterLayout.for_model(model)
    parts = lay.split(Phi)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    ddq = np.atleast_2d(np.asarray(ddq, dtype=float))
    Y_tau, Y_s = inertial_regressors(model, q, dq, ddq)
    phi = parts["inertial"]
    wrench = Y_s @ phi + parts["offset"]
    tau = Y_tau @ phi

    pwm = np.zeros((q.shape[0], len(model.measured_joints)))
    col = {j: i for i, j in enumerate(model.measured_joints)}
    with np.errstate(divide="raise", invalid="raise"):
        if model.coupled_group is not None:
            group = model.coupled_group
            idx = list(group.joint_indices)
            tau_I = tau[:, idx] + friction_block(dq[:, idx]) @ parts["joint_friction_coupled"].reshape(-1)
            tau_m = np.linalg.solve(group.coupling_transpose, tau_I.T).T
            fric_m = friction_block(motor_velocities(group, dq[:, idx])) @ parts["motor_friction"].reshape(-1)
            pwm[:, [col[j] for j in idx]] = (tau_m + fric_m) / parts["gains_coupled"]
        for u, j in enumerate(model.uncoupled_joints):
            t_j = tau[:, j] + friction_regressor_row(dq[:, j]) @ parts["joint_friction_uncoupled"][u]
            pwm[:, col[j]] = t_j / parts["gains_uncoupled"][u]
    return pwm, wrench
