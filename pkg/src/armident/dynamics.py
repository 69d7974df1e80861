"""Recursive Newton-Euler inverse dynamics.

This is the reference the regressors are checked against, and the forward
model the simulator uses. It works with world-frame vectors and COM-based
Newton/Euler equations, a different route from the body-frame linear
regressors in :mod:`armident.regressors`. It needs a nonzero mass for every
body (COM = first moment / mass).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .model import N_INERTIAL, ChainModel, body_angles, dh_transform


class InverseDynamics(NamedTuple):
    torques: np.ndarray
    """(N, n_joints) joint torques, positive about each joint's z axis."""
    cut_wrench: np.ndarray
    """(N, 6) force/moment exerted by the proximal part on the distal part,
    expressed in the sensor frame, moment about the sensor origin."""


def rnea(model: ChainModel, phi, q, dq, ddq, external=None) -> InverseDynamics:
    """Inverse dynamics for a batch of states.

    Parameters
    ----------
    model : ChainModel
    phi : array_like, shape (10 * n_bodies,)
        Stacked inertial parameters (inertia about each body origin).
    q, dq, ddq : array_like, shape (N, n_joints) or (n_joints,)
    external : array_like, shape (N, n_bodies, 6), optional
        Wrench applied by the environment on each body, expressed in the
        body frame, moment about the body origin.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    dq = np.atleast_2d(np.asarray(dq, dtype=float))
    ddq = np.atleast_2d(np.asarray(ddq, dtype=float))
    N, nb = q.shape[0], model.n_bodies
    phi = np.asarray(phi, dtype=float).reshape(nb, N_INERTIAL)
    if np.any(phi[:, 0] == 0):
        raise ValueError("RNEA needs nonzero body masses")

    theta = body_angles(model, q)
    rate = np.zeros((N, nb))
    accel = np.zeros((N, nb))
    jb = list(model.joint_bodies)
    rate[:, jb] = dq
    accel[:, jb] = ddq

    # forward: world-frame kinematics
    R = np.empty((N, nb, 3, 3))
    o = np.empty((N, nb, 3))
    w = np.empty((N, nb, 3))
    dw = np.empty((N, nb, 3))
    a_o = np.empty((N, nb, 3))
    R_prev = np.broadcast_to(np.eye(3), (N, 3, 3))
    o_prev = np.zeros((N, 3))
    w_prev = np.zeros((N, 3))
    dw_prev = np.zeros((N, 3))
    a_prev = np.zeros((N, 3))
    for k, body in enumerate(model.bodies):
        a, d, alpha, _ = body.dh
        T = dh_transform(a, d, alpha, theta[:, k])
        R[:, k] = R_prev @ T[:, :3, :3]
        o[:, k] = o_prev + np.einsum("nij,nj->ni", R_prev, T[:, :3, 3])
        axis = R[:, k, :, 2]
        w[:, k] = w_prev + rate[:, k, None] * axis
        dw[:, k] = dw_prev + accel[:, k, None] * axis + rate[:, k, None] * np.cross(w_prev, axis)
        r = o[:, k] - o_prev
        a_o[:, k] = a_prev + np.cross(dw_prev, r) + np.cross(w_prev, np.cross(w_prev, r))
        R_prev, o_prev, w_prev, dw_prev, a_prev = R[:, k], o[:, k], w[:, k], dw[:, k], a_o[:, k]

    # per-body Newton-Euler about the COM
    g = model.gravity
    F = np.empty((N, nb, 3))
    M = np.empty((N, nb, 3))  # about body origin
    for k in range(nb):
        m = phi[k, 0]
        c_local = phi[k, 1:4] / m
        Io = np.array([
            [phi[k, 4], phi[k, 5], phi[k, 6]],
            [phi[k, 5], phi[k, 7], phi[k, 8]],
            [phi[k, 6], phi[k, 8], phi[k, 9]],
        ])
        Ic_local = Io - m * (c_local @ c_local * np.eye(3) - np.outer(c_local, c_local))
        Rk = R[:, k]
        c = np.einsum("nij,j->ni", Rk, c_local)
        Ic = Rk @ Ic_local @ np.swapaxes(Rk, 1, 2)
        a_c = a_o[:, k] + np.cross(dw[:, k], c) + np.cross(w[:, k], np.cross(w[:, k], c))
        F[:, k] = m * (a_c - g)
        Iw = np.einsum("nij,nj->ni", Ic, w[:, k])
        N_c = np.einsum("nij,nj->ni", Ic, dw[:, k]) + np.cross(w[:, k], Iw)
        M[:, k] = N_c + np.cross(c, F[:, k])

    if external is not None:
        ext = np.asarray(external, dtype=float).reshape(N, nb, 6)
        F = F - np.einsum("nkij,nkj->nki", R, ext[..., :3])
        M = M - np.einsum("nkij,nkj->nki", R, ext[..., 3:])

    # backward: wrench transmitted from parent into each body
    f = np.zeros((N, nb, 3))
    n = np.zeros((N, nb, 3))
    f_child = np.zeros((N, 3))
    n_child = np.zeros((N, 3))  # about child origin
    for k in range(nb - 1, -1, -1):
        f[:, k] = F[:, k] + f_child
        if k + 1 < nb:
            lever = o[:, k + 1] - o[:, k]
            n[:, k] = M[:, k] + n_child + np.cross(lever, f_child)
        else:
            n[:, k] = M[:, k]
        f_child, n_child = f[:, k], n[:, k]

    torques = np.einsum("nki,nki->nk", n, R[..., 2])[:, jb]

    # cut wrench: what the sensor body passes to its distal neighbour
    c1 = model.sensor_body + 1
    Xs = model.sensor_transform
    if model.sensor_body < 0:
        Rs = np.broadcast_to(Xs[:3, :3], (N, 3, 3))
        ps = np.broadcast_to(Xs[:3, 3], (N, 3))
    else:
        Rb = R[:, model.sensor_body]
        Rs = Rb @ Xs[:3, :3]
        ps = o[:, model.sensor_body] + np.einsum("nij,j->ni", Rb, Xs[:3, 3])
    f_cut = f[:, c1]
    n_cut = n[:, c1] + np.cross(o[:, c1] - ps, f_cut)
    RsT = np.swapaxes(Rs, 1, 2)
    wrench = np.concatenate(
        [np.einsum("nij,nj->ni", RsT, f_cut), np.einsum("nij,nj->ni", RsT, n_cut)], axis=1
    )
    return InverseDynamics(torques, wrench)
