"""Planar rigid-body algebra.

Poses are ``[x, y, theta]``, twists ``[vx, vy, omega]`` and wrenches
``[fx, fy, m]``. The named tuples below are conveniences; every function
accepts any length-3 array-like and returns numpy arrays. Angles are never
wrapped here.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Pose(NamedTuple):
    x: float
    y: float
    theta: float


class Twist(NamedTuple):
    vx: float
    vy: float
    omega: float


class Wrench(NamedTuple):
    fx: float
    fy: float
    m: float


def rot(theta: float) -> np.ndarray:
    """Rotation about z, acting on ``[x, y, theta]``-shaped vectors."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def jac(r) -> np.ndarray:
    """Velocity Jacobian of a point at planar offset ``r``.

    ``jac(r1) @ jac(r2) == jac(r1 + r2)`` and ``inv(jac(r)) == jac(-r)``.
    """
    x, y = float(r[0]), float(r[1])
    return np.array([[1.0, 0.0, -y], [0.0, 1.0, x], [0.0, 0.0, 1.0]])


def adjoint(q_rel) -> np.ndarray:
    """Twist map ``G`` from frame O to a frame P at relative pose ``q_rel``.

    ``nu_p = G @ nu_o`` and ``w_o = G.T @ w_p``.
    """
    q = np.asarray(q_rel, dtype=float)
    return rot(q[2]).T @ jac(q[:2])


def adjoint_inv(q_rel) -> np.ndarray:
    q = np.asarray(q_rel, dtype=float)
    return jac(-q[:2]) @ rot(q[2])


def rel_pose(q_h, q_o) -> np.ndarray:
    """Pose of frame H expressed in frame O: ``R(-theta_o) (q_h - q_o)``."""
    q_h = np.asarray(q_h, dtype=float)
    q_o = np.asarray(q_o, dtype=float)
    return rot(-q_o[2]) @ (q_h - q_o)


def compose(q_a, q_b) -> np.ndarray:
    """Pose of a frame given relative to ``q_a``, expressed in ``q_a``'s parent."""
    q_a = np.asarray(q_a, dtype=float)
    return q_a + rot(q_a[2]) @ np.asarray(q_b, dtype=float)


def inverse(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return -(rot(-q[2]) @ q)


def twist_between(q0, q1, dt: float) -> np.ndarray:
    """Constant body twist carrying pose ``q0`` to ``q1`` in time ``dt``.

    Exact SE(2) logarithm, so integrating the returned twist reproduces ``q1``.
    """
    d = rel_pose(q1, q0)
    th = d[2]
    if abs(th) < 1e-9:
        # series of th / (2 tan(th/2)) and th / 2
        a = 1.0 - th * th / 12.0
        b = th / 2.0
    else:
        a = th / 2.0 / np.tan(th / 2.0)
        b = th / 2.0
    v = np.array([[a, b], [-b, a]]) @ d[:2]
    return np.array([v[0], v[1], th]) / dt


def wrap_angle(theta):
    """Map angles to (-pi, pi]; display use only."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


def adjoint_batch(q_rel) -> np.ndarray:
    """:func:`adjoint` for an ``(n, 3)`` array of relative poses."""
    q = np.asarray(q_rel, dtype=float)
    c, s = np.cos(q[:, 2]), np.sin(q[:, 2])
    x, y = q[:, 0], q[:, 1]
    G = np.zeros((len(q), 3, 3))
    # R(theta)^T J(r)
    G[:, 0, 0] = c
    G[:, 0, 1] = s
    G[:, 0, 2] = -c * y + s * x
    G[:, 1, 0] = -s
    G[:, 1, 1] = c
    G[:, 1, 2] = s * y + c * x
    G[:, 2, 2] = 1.0
    return G


def rel_pose_batch(q_h, q_o) -> np.ndarray:
    d = np.asarray(q_h, dtype=float) - np.asarray(q_o, dtype=float)
    c, s = np.cos(q_o[:, 2]), np.sin(q_o[:, 2])
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]])
