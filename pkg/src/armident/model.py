"""Kinematic chain description and forward kinematics.

Frames follow the modified (proximal) Denavit-Hartenberg convention: the
transform from body ``k-1`` to body ``k`` is

    RotX(alpha) @ TransX(a) @ RotZ(theta0 + q) @ TransZ(d)

so the z axis of every body frame is the axis of the joint that moves it.
Inertial parameters of a body are expressed in its own frame, about its
origin, ordered ``[m, mcx, mcy, mcz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import yaml

N_INERTIAL = 10
INERTIAL_NAMES = ("m", "mcx", "mcy", "mcz", "Ixx", "Ixy", "Ixz", "Iyy", "Iyz", "Izz")
DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


class ModelError(ValueError):
    """Raised when a model document is malformed or violates an invariant."""


@dataclass(frozen=True)
class Body:
    """One rigid link and the joint connecting it to its parent.

    ``dh`` holds ``(a, d, alpha, theta0)``. A ``locked`` joint keeps the
    constant angle ``theta0 + locked_angle`` and carries no degree of freedom.
    """

    name: str
    dh: tuple[float, float, float, float]
    joint_type: str = "revolute"
    locked_angle: float = 0.0

    def __post_init__(self):
        if len(self.dh) != 4:
            raise ModelError(f"body {self.name!r}: dh needs 4 values, got {len(self.dh)}")
        if not np.all(np.isfinite(self.dh)) or not np.isfinite(self.locked_angle):
            raise ModelError(f"body {self.name!r}: non-finite DH value")
        if self.joint_type not in ("revolute", "locked"):
            raise ModelError(f"body {self.name!r}: unknown joint type {self.joint_type!r}")

    @property
    def is_revolute(self) -> bool:
        return self.joint_type == "revolute"


@dataclass(frozen=True)
class CoupledGroup:
    """Joints driven through a shared transmission.

    ``coupling_transpose`` maps motor torques to joint torques,
    ``tau_joint = coupling_transpose @ tau_motor``.
    """

    joint_indices: tuple[int, ...]
    coupling_transpose: np.ndarray

    def __post_init__(self):
        Tt = np.asarray(self.coupling_transpose, dtype=float)
        k = len(self.joint_indices)
        if Tt.shape != (k, k):
            raise ModelError(
                f"coupling matrix shape {Tt.shape} does not match {k} coupled joints"
            )
        if not np.all(np.isfinite(Tt)):
            raise ModelError("non-finite coupling matrix")
        if abs(np.linalg.det(Tt)) <= 1e-9:
            raise ModelError("singular coupling matrix")
        if len(set(self.joint_indices)) != k:
            raise ModelError("duplicate joint in coupled group")
        Tt.setflags(write=False)
        object.__setattr__(self, "coupling_transpose", Tt)
        object.__setattr__(self, "joint_indices", tuple(int(j) for j in self.joint_indices))

    @property
    def size(self) -> int:
        return len(self.joint_indices)

    @property
    def coupling(self) -> np.ndarray:
        """The coupling matrix ``T`` itself (motor velocity = ``T @ joint velocity``)."""
        return self.coupling_transpose.T


@dataclass(frozen=True)
class ChainModel:
    bodies: tuple[Body, ...]
    measured_joints: tuple[int, ...]
    sensor_body: int
    sensor_transform: np.ndarray
    coupled_group: CoupledGroup | None = None
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "measured_joints", tuple(int(j) for j in self.measured_joints))
        if not self.bodies:
            raise ModelError("model has no bodies")
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ModelError("body names must be unique")

        g = np.asarray(self.gravity, dtype=float).reshape(-1)
        if g.shape != (3,) or not np.all(np.isfinite(g)):
            raise ModelError("gravity must be a finite 3-vector")
        g.setflags(write=False)
        object.__setattr__(self, "gravity", g)

        X = np.asarray(self.sensor_transform, dtype=float)
        if X.shape != (4, 4) or not np.all(np.isfinite(X)):
            raise ModelError("sensor transform must be a finite 4x4 matrix")
        R = X[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ModelError("sensor transform rotation is not a proper rotation")
        if not np.allclose(X[3], [0, 0, 0, 1]):
            raise ModelError("sensor transform last row must be [0, 0, 0, 1]")
        X.setflags(write=False)
        object.__setattr__(self, "sensor_transform", X)

        if not -1 <= self.sensor_body < self.n_bodies - 1:
            raise ModelError(
                f"sensor cut body {self.sensor_body} leaves no distal bodies "
                f"(valid range -1..{self.n_bodies - 2})"
            )

        n = self.n_joints
        for j in self.measured_joints:
            if not 0 <= j < n:
                raise ModelError(f"measured joint {j} out of range (model has {n} joints)")
        if len(set(self.measured_joints)) != len(self.measured_joints):
            raise ModelError("duplicate measured joint")
        if self.coupled_group is not None:
            missing = set(self.coupled_group.joint_indices) - set(self.measured_joints)
            if missing:
                raise ModelError(f"coupled joints {sorted(missing)} are not measured")

    # -- sizes -----------------------------------------------------------
    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def n_joints(self) -> int:
        return sum(b.is_revolute for b in self.bodies)

    @property
    def n_inertial(self) -> int:
        return N_INERTIAL * self.n_bodies

    @property
    def joint_bodies(self) -> tuple[int, ...]:
        """Body index moved by each joint."""
        return tuple(i for i, b in enumerate(self.bodies) if b.is_revolute)

    @property
    def coupled_joints(self) -> tuple[int, ...]:
        return () if self.coupled_group is None else self.coupled_group.joint_indices

    @property
    def uncoupled_joints(self) -> tuple[int, ...]:
        coupled = set(self.coupled_joints)
        return tuple(j for j in self.measured_joints if j not in coupled)

    @property
    def row_joints(self) -> tuple[int, ...]:
        """Joint of each torque row of a sample block: coupled group first."""
        return self.coupled_joints + self.uncoupled_joints

    @property
    def distal_bodies(self) -> range:
        return range(self.sensor_body + 1, self.n_bodies)


def dh_transform(a, d, alpha, theta):
    """Homogeneous transform ``RotX(alpha) TransX(a) RotZ(theta) TransZ(d)``.

    ``theta`` may be an array; the result then has shape ``theta.shape + (4, 4)``.
    """
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    T = np.zeros(theta.shape + (4, 4))
    T[..., 0, 0] = ct
    T[..., 0, 1] = -st
    T[..., 0, 3] = a
    T[..., 1, 0] = st * ca
    T[..., 1, 1] = ct * ca
    T[..., 1, 2] = -sa
    T[..., 1, 3] = -sa * d
    T[..., 2, 0] = st * sa
    T[..., 2, 1] = ct * sa
    T[..., 2, 2] = ca
    T[..., 2, 3] = ca * d
    T[..., 3, 3] = 1.0
    return T


def _check_state(model: ChainModel, *arrays):
    n = model.n_joints
    out = []
    for name, x in zip(("q", "dq", "ddq"), arrays):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != n:
            raise ValueError(f"{name} must have {n} columns, got shape {np.shape(x)}")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{name} contains non-finite values")
        out.append(x)
    if len({x.shape[0] for x in out}) != 1:
        raise ValueError("q, dq and ddq must have the same number of samples")
    return out


def body_angles(model: ChainModel, q) -> np.ndarray:
    """DH angle of every body for joint positions ``q`` of shape (N, n_joints)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    theta = np.empty((q.shape[0], model.n_bodies))
    j = 0
    for i, b in enumerate(model.bodies):
        if b.is_revolute:
            theta[:, i] = b.dh[3] + q[:, j]
            j += 1
        else:
            theta[:, i] = b.dh[3] + b.locked_angle
    return theta


def _skew(v):
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


class Kinematics(NamedTuple):
    """Per-body kinematic quantities, batched over samples.

    Shapes are ``(N, n_bodies, 3, 3)`` for rotations and ``(N, n_bodies, 3)``
    otherwise. ``rel_rotation[:, k]``/``rel_position[:, k]`` place body ``k``
    in its parent frame (the base for ``k = 0``). Velocities and
    accelerations are expressed in the body frame; ``acceleration`` is the
    linear acceleration of the frame origin minus gravity.
    """

    rotation: np.ndarray
    position: np.ndarray
    rel_rotation: np.ndarray
    rel_position: np.ndarray
    omega: np.ndarray
    velocity: np.ndarray
    domega: np.ndarray
    acceleration: np.ndarray


def frame_kinematics(model: ChainModel, q, dq, ddq) -> Kinematics:
    """Forward pass for poses, spatial velocities and spatial accelerations.

    Accepts a single state (1-D arrays) or a batch of shape (N, n_joints);
    the output is always batched. The base is given the acceleration
    ``-gravity`` so static gravity loads appear as inertial accelerations.
    """
    q, dq, ddq = _check_state(model, q, dq, ddq)
    N, nb = q.shape[0], model.n_bodies

    theta = body_angles(model, q)
    qd_body = np.zeros((N, nb))
    qdd_body = np.zeros((N, nb))
    jb = list(model.joint_bodies)
    qd_body[:, jb] = dq
    qdd_body[:, jb] = ddq

    Rrel = np.empty((N, nb, 3, 3))
    prel = np.empty((N, nb, 3))
    Rw = np.empty((N, nb, 3, 3))
    pw = np.empty((N, nb, 3))
    w = np.empty((N, nb, 3))
    v = np.empty((N, nb, 3))
    dw = np.empty((N, nb, 3))
    acc = np.empty((N, nb, 3))

    R_par = np.broadcast_to(np.eye(3), (N, 3, 3))
    p_par = np.zeros((N, 3))
    w_par = np.zeros((N, 3))
    v_par = np.zeros((N, 3))
    dw_par = np.zeros((N, 3))
    a_par = np.broadcast_to(-model.gravity, (N, 3))
    ez = np.array([0.0, 0.0, 1.0])

    for k, body in enumerate(model.bodies):
        a, d, alpha, _ = body.dh
        T = dh_transform(a, d, alpha, theta[:, k])
        R, p = T[:, :3, :3], T[:, :3, 3]
        Rt = np.swapaxes(R, 1, 2)

        w_in = np.einsum("nij,nj->ni", Rt, w_par)
        wk = w_in + qd_body[:, k, None] * ez
        dwk = (
            np.einsum("nij,nj->ni", Rt, dw_par)
            + np.cross(w_in, qd_body[:, k, None] * ez)
            + qdd_body[:, k, None] * ez
        )
        vk = np.einsum("nij,nj->ni", Rt, v_par + np.cross(w_par, p))
        ak = np.einsum(
            "nij,nj->ni",
            Rt,
            a_par + np.cross(dw_par, p) + np.cross(w_par, np.cross(w_par, p)),
        )

        Rrel[:, k], prel[:, k] = R, p
        Rw[:, k] = R_par @ R
        pw[:, k] = p_par + np.einsum("nij,nj->ni", R_par, p)
        w[:, k], v[:, k], dw[:, k], acc[:, k] = wk, vk, dwk, ak

        R_par, p_par = Rw[:, k], pw[:, k]
        w_par, v_par, dw_par, a_par = wk, vk, dwk, ak

    return Kinematics(Rw, pw, Rrel, prel, w, v, dw, acc)


def sensor_pose(model: ChainModel, kin: Kinematics):
    """World rotation and position of the F/T sensor frame."""
    Xs = model.sensor_transform
    if model.sensor_body < 0:
        N = kin.rotation.shape[0]
        return np.broadcast_to(Xs[:3, :3], (N, 3, 3)), np.broadcast_to(Xs[:3, 3], (N, 3))
    R = kin.rotation[:, model.sensor_body]
    p = kin.position[:, model.sensor_body]
    return R @ Xs[:3, :3], p + np.einsum("nij,j->ni", R, Xs[:3, 3])


# -- document loading -----------------------------------------------------

def _require(doc, key, where):
    if key not in doc:
        raise ModelError(f"{where}: missing field {key!r}")
    return doc[key]


def _floats(value, n, where):
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: expected numbers ({exc})") from None
    if arr.size != n:
        raise ModelError(f"{where}: expected {n} values, got {arr.size}")
    return arr


def model_from_dict(doc: dict) -> ChainModel:
    """Build a validated :class:`ChainModel` from a parsed model document."""
    if not isinstance(doc, dict):
        raise ModelError("model document must be a mapping")
    raw_bodies = _require(doc, "bodies", "model")
    if not isinstance(raw_bodies, list):
        raise ModelError("model: 'bodies' must be a list")

    bodies = []
    for i, rb in enumerate(raw_bodies):
        where = f"bodies[{i}]"
        if not isinstance(rb, dict):
            raise ModelError(f"{where}: expected a mapping")
        dh = tuple(_floats(_require(rb, "dh", where), 4, f"{where}.dh"))
        joint = rb.get("joint", {"type": "revolute"}) or {}
        jtype = joint.get("type", "revolute")
        locked = float(joint.get("locked_angle", 0.0))
        bodies.append(Body(str(rb.get("name", f"body{i}")), dh, jtype, locked))
    n_joints = sum(b.is_revolute for b in bodies)

    measured = doc.get("measured_joints", list(range(n_joints)))
    if not isinstance(measured, list):
        raise ModelError("model: 'measured_joints' must be a list")

    group = None
    rg = doc.get("coupled_group")
    if rg:
        joints = _require(rg, "joints", "coupled_group")
        k = len(joints)
        Tt = _floats(_require(rg, "T_transpose", "coupled_group"), k * k, "coupled_group.T_transpose")
        group = CoupledGroup(tuple(joints), Tt.reshape(k, k))

    sensor = _require(doc, "sensor", "model")
    cut = int(_require(sensor, "cut_body", "sensor"))
    X = sensor.get("transform")
    X = np.eye(4) if X is None else _floats(X, 16, "sensor.transform").reshape(4, 4)

    gravity = _floats(doc.get("gravity", DEFAULT_GRAVITY), 3, "gravity")
    return ChainModel(
        bodies=tuple(bodies),
        measured_joints=tuple(measured),
        sensor_body=cut,
        sensor_transform=X,
        coupled_group=group,
        gravity=gravity,
        name=str(doc.get("name", "chain")),
    )


def load_model(text: str) -> ChainModel:
    """Parse a YAML (or JSON) model document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ModelError(f"cannot parse model document{loc}: {exc}") from None
    return model_from_dict(doc)


def load_model_file(path) -> ChainModel:
    return load_model(Path(path).read_text(encoding="utf-8"))


def model_to_dict(model: ChainModel) -> dict:
    doc = {
        "name": model.name,
        "bodies": [
            {
                "name": b.name,
                "dh": [float(x) for x in b.dh],
                "joint": {"type": b.joint_type, **({"locked_angle": b.locked_angle} if not b.is_revolute else {})},
            }
            for b in model.bodies
        ],
        "measured_joints": list(model.measured_joints),
        "sensor": {
            "cut_body": model.sensor_body,
            "transform": model.sensor_transform.reshape(-1).tolist(),
        },
        "gravity": model.gravity.tolist(),
    }
    if model.coupled_group is not None:
        doc["coupled_group"] = {
            "joints": list(model.coupled_group.joint_indices),
            "T_transpose": model.coupled_group.coupling_transpose.reshape(-1).tolist(),
        }
    return doc


def reference_model_path() -> Path:
    """Path of the bundled illustrative 7-body, 4-joint arm."""
    return Path(__file__).with_name("data") / "icub_like_arm.yaml"


def reference_model() -> ChainModel:
    return load_model_file(reference_model_path())


def shoulder_coupling_transpose(r: float = 65.0 / 40.0) -> np.ndarray:
    """Transposed coupling matrix of a three-joint differential shoulder."""
    return np.array([[1.0, -r, -r], [0.0, r, r], [0.0, 0.0, r]])


def inertial_labels(model: ChainModel) -> list[str]:
    return [f"{b.name}.{p}" for b in model.bodies for p in INERTIAL_NAMES]


def pack_inertial(mass: float, com: Sequence[float], inertia_com) -> np.ndarray:
    """10-vector for a body from mass, COM and inertia about the COM.

    The inertia is shifted to the body origin with the parallel-axis rule.
    """
    c = np.asarray(com, dtype=float)
    Ic = np.asarray(inertia_com, dtype=float)
    Io = Ic + mass * (c @ c * np.eye(3) - np.outer(c, c))
    return np.array([
        mass, *(mass * c),
        Io[0, 0], Io[0, 1], Io[0, 2], Io[1, 1], Io[1, 2], Io[2, 2],
    ])


def unpack_inertial(phi) -> tuple[float, np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_inertial`: (mass, first moment, inertia about origin)."""
    phi = np.asarray(phi, dtype=float)
    I = np.array([
        [phi[4], phi[5], phi[6]],
        [phi[5], phi[7], phi[8]],
        [phi[6], phi[8], phi[9]],
    ])
    return float(phi[0]), phi[1:4].copy(), I
