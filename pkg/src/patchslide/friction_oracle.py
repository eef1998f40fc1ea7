"""Brute-force Coulomb friction integrals over a pressure distribution.

This is the ground truth the ellipsoidal model is checked against: the
friction wrench of a sliding contact is integrated cell by cell, limit
surfaces are sampled over many twist directions, and an ellipsoid is fitted
by linear least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import RankDeficient, ZeroTwist
from .limit_surface import LimitSurface

# ||v|| below this is the centre of rotation itself; the integrand is undefined there
V_EPS = 1e-12


@dataclass(frozen=True)
class PressureField:
    """Normal pressure over a rectangle (``half_extents``) or a disc (``radius``).

    ``profile`` maps cell-centre coordinates to an unnormalised pressure; the
    discretisation rescales it so the total equals ``load``.
    """

    mu: float
    load: float
    half_extents: tuple[float, float] | None = None
    radius: float | None = None
    profile: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    @classmethod
    def uniform_rectangle(cls, half_extents, load: float, mu: float) -> "PressureField":
        return cls(mu=mu, load=load, half_extents=tuple(map(float, half_extents)))

    @classmethod
    def uniform_disc(cls, radius: float, load: float, mu: float) -> "PressureField":
        return cls(mu=mu, load=load, radius=float(radius))

    @classmethod
    def hertz_disc(cls, radius: float, load: float, mu: float) -> "PressureField":
        a = float(radius)
        return cls(mu=mu, load=load, radius=a,
                   profile=lambda x, y: np.sqrt(np.clip(1.0 - (x * x + y * y) / (a * a), 0.0, None)))

    @property
    def char_length(self) -> float:
        if self.radius is not None:
            return self.radius
        return math.hypot(*self.half_extents)

    def discretize(self, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
        """Cell centres ``(n, 2)`` and cell forces ``p dA`` summing to ``load``.

        Rectangles use a regular Cartesian grid; discs a regular polar grid so
        the support boundary is represented exactly.
        """
        if grid_n < 32:
            raise ValueError("grid_n must be at least 32")
        if self.radius is not None:
            dr = self.radius / grid_n
            rr = (np.arange(grid_n) + 0.5) * dr
            n_phi = 4 * grid_n
            dphi = 2.0 * math.pi / n_phi
            pp = (np.arange(n_phi) + 0.5) * dphi
            R, P = np.meshgrid(rr, pp, indexing="ij")
            x, y = R * np.cos(P), R * np.sin(P)
            area = R * dr * dphi
        else:
            hx, hy = self.half_extents
            nx = grid_n
            ny = max(grid_n, int(round(grid_n * hy / hx)))
            xs = -hx + (np.arange(nx) + 0.5) * (2 * hx / nx)
            ys = -hy + (np.arange(ny) + 0.5) * (2 * hy / ny)
            x, y = np.meshgrid(xs, ys, indexing="ij")
            area = np.full_like(x, (2 * hx / nx) * (2 * hy / ny))
        p = np.ones_like(x) if self.profile is None else self.profile(x, y)
        weight = p * area
        weight *= self.load / weight.sum()
        return np.column_stack([x.ravel(), y.ravel()]), weight.ravel()


class LsSample(NamedTuple):
    twist_dir: np.ndarray
    wrench: np.ndarray


def _wrenches(points: np.ndarray, weights: np.ndarray, mu: float, twists: np.ndarray) -> np.ndarray:
    """Friction wrenches for a batch of twists ``(k, 3)`` about the origin."""
    x, y = points[:, 0], points[:, 1]
    out = np.empty((len(twists), 3))
    for i, (vx, vy, w) in enumerate(twists):
        ux = vx - w * y
        uy = vy + w * x
        speed = np.hypot(ux, uy)
        moving = speed >= V_EPS
        scale = np.zeros_like(speed)
        scale[moving] = mu * weights[moving] / speed[moving]
        fx = -np.dot(scale, ux)
        fy = -np.dot(scale, uy)
        m = -np.dot(scale, x * uy - y * ux)
        out[i] = fx, fy, m
    return out


def friction_wrench(field: PressureField, nu, grid_n: int = 64) -> np.ndarray:
    """Coulomb friction wrench about the origin for sliding twist ``nu``."""
    nu = np.asarray(nu, dtype=float)
    if not np.any(nu):
        raise ZeroTwist("friction wrench is undefined for a zero twist")
    pts, wts = field.discretize(grid_n)
    return _wrenches(pts, wts, field.mu, nu[None, :])[0]


def sphere_directions(n: int) -> np.ndarray:
    """Fibonacci lattice of ``n`` nearly uniform unit vectors."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    rho = np.sqrt(1.0 - z * z)
    phi = math.pi * (1.0 + math.sqrt(5.0)) * k
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def sample_limit_surface(field: PressureField, n_dirs: int = 200, grid_n: int = 64) -> list[LsSample]:
    """One friction wrench per twist direction on the unit sphere.

    The angular component is divided by the support's characteristic length
    so force- and torque-dominated sliding are sampled evenly.
    """
    if n_dirs < 50:
        raise ValueError("n_dirs must be at least 50")
    dirs = sphere_directions(n_dirs)
    twists = dirs * np.array([1.0, 1.0, 1.0 / field.char_length])
    twists /= np.linalg.norm(twists, axis=1, keepdims=True)
    pts, wts = field.discretize(grid_n)
    W = _wrenches(pts, wts, field.mu, twists)
    return [LsSample(t, w) for t, w in zip(twists, W)]


class EllipsoidFit(NamedTuple):
    surface: LimitSurface
    rms: float
    """RMS of ``sqrt(w^T A w) - 1`` over the samples (relative radial error)."""
    clamped: bool


def fit_ellipsoid(samples) -> EllipsoidFit:
    """Least-squares ``A`` with ``w^T A w ~ 1`` over the sampled wrenches."""
    W = np.array([s.wrench if isinstance(s, LsSample) else s for s in samples], dtype=float)
    if W.ndim != 2 or len(W) < 6:
        raise RankDeficient("need at least 6 wrench samples")
    w1, w2, w3 = W.T
    D = np.column_stack([w1 * w1, w2 * w2, w3 * w3, 2 * w1 * w2, 2 * w1 * w3, 2 * w2 * w3])
    # column scaling keeps force and torque blocks comparable
    col = np.linalg.norm(D, axis=0)
    if np.any(col == 0):
        raise RankDeficient("samples do not excite every quadratic term")
    coef, _, rank, sv = np.linalg.lstsq(D / col, np.ones(len(W)), rcond=None)
    if rank < 6 or sv[-1] < 1e-12 * sv[0]:
        raise RankDeficient(f"normal system is singular (rank {rank})")
    a11, a22, a33, a12, a13, a23 = coef / col
    A = np.array([[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]])
    lam, V = np.linalg.eigh(A)
    clamped = bool(lam.min() <= 1e-12 * max(lam.max(), 1e-300))
    if clamped:
        lam = np.clip(lam, 1e-12 * max(lam.max(), 1e-300), None)
        A = (V * lam) @ V.T
    h = np.einsum("ij,jk,ik->i", W, A, W)
    rms = float(np.sqrt(np.mean((np.sqrt(h) - 1.0) ** 2)))
    return EllipsoidFit(LimitSurface(A), rms, clamped)
