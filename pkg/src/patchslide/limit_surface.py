"""Ellipsoidal limit surfaces ``w^T A w = 1`` and their load dependence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import se2
from .errors import NonPositiveForce, NotOnSurface, NotPositiveDefinite, ZeroTwist

GRAVITY = 9.81
HERTZ_TORQUE_FACTOR = 3.0 * math.pi / 16.0


@dataclass(frozen=True, eq=False)
class LimitSurface:
    """Quadratic-form matrix of an ellipsoidal limit surface plus a frame tag."""

    A: np.ndarray
    frame: str = "O"

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.shape != (3, 3):
            raise ValueError(f"limit surface matrix must be 3x3, got {A.shape}")
        scale = max(np.abs(A).max(), 1e-300)
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise NotPositiveDefinite("limit surface matrix is not symmetric")
        A = 0.5 * (A + A.T)
        check_spd(A)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def __array__(self, dtype=None, copy=None):
        return self.A if dtype is None else self.A.astype(dtype)

    def H(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.A @ w)


def check_spd(A: np.ndarray) -> None:
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None


def as_matrix(A) -> np.ndarray:
    return np.asarray(A, dtype=float)


@dataclass(frozen=True)
class PatchModel:
    """Hand-object contact patch.

    Either a Hertzian sphere (``sphere_radius``, ``effective_modulus``) whose
    contact radius grows with load, or a disc of ``fixed_radius`` carrying a
    Hertzian pressure profile. ``B_unit`` optionally replaces the diagonal
    model with a full SPD matrix given at 1 N of normal load.
    """

    mu_ho: float
    sphere_radius: float | None = None
    effective_modulus: float | None = None
    fixed_radius: float | None = None
    B_unit: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.mu_ho > 0:
            raise ValueError("mu_ho must be positive")
        hertz = self.sphere_radius is not None and self.effective_modulus is not None
        if not hertz and self.fixed_radius is None and self.B_unit is None:
            raise ValueError("patch needs sphere_radius+effective_modulus or fixed_radius")
        for name in ("sphere_radius", "effective_modulus", "fixed_radius"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.B_unit is not None:
            B = np.array(self.B_unit, dtype=float)
            check_spd(B)
            object.__setattr__(self, "B_unit", B)


@dataclass(frozen=True)
class ObjectModel:
    """Rectangular slider on a flat surface.

    ``A_cop_unit`` is the limit surface at the centre of pressure for 1 N of
    total normal load; when omitted it is integrated numerically from a
    uniform pressure over the footprint.
    """

    half_extents: tuple[float, float]
    mass: float
    mu_oe: float
    cop_shift_c: float = 0.0
    cop_shift_delta: float = 0.0
    A_cop_unit: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        hx, hy = self.half_extents
        if not (hx > 0 and hy > 0 and self.mass > 0 and self.mu_oe > 0):
            raise ValueError("object geometry, mass and friction must be positive")
        object.__setattr__(self, "half_extents", (float(hx), float(hy)))
        if self.A_cop_unit is not None:
            A = np.array(self.A_cop_unit, dtype=float)
            check_spd(A)
            object.__setattr__(self, "A_cop_unit", A)

    @property
    def weight(self) -> float:
        return self.mass * GRAVITY

    def a_cop(self) -> np.ndarray:
        if self.A_cop_unit is not None:
            return self.A_cop_unit
        return _uniform_rectangle_ls(self.half_extents, self.mu_oe)


@lru_cache(maxsize=32)
def _uniform_rectangle_ls(half_extents: tuple[float, float], mu: float) -> np.ndarray:
    from .friction_oracle import PressureField, fit_ellipsoid, sample_limit_surface

    field_ = PressureField.uniform_rectangle(half_extents, load=1.0, mu=mu)
    fit = fit_ellipsoid(sample_limit_surface(field_, n_dirs=400, grid_n=96))
    A = np.array(fit.surface.A)
    # the footprint is symmetric about both axes; drop quadrature noise
    A[0, 1] = A[1, 0] = A[0, 2] = A[2, 0] = A[1, 2] = A[2, 1] = 0.0
    A.setflags(write=False)
    return A


@dataclass(frozen=True)
class LsDecomposition:
    theta: float
    r: np.ndarray
    Lambda: np.ndarray
    degenerate: bool = False

    def reconstruct(self) -> np.ndarray:
        R = se2.rot(self.theta)
        J = se2.jac(self.r)
        return R.T @ J @ self.Lambda @ J.T @ R


def transform_ls(A, q_rel, frame: str = "P") -> LimitSurface:
    """Re-express a limit surface in a frame at relative pose ``q_rel``."""
    G = se2.adjoint(q_rel)
    return LimitSurface(G @ as_matrix(A) @ G.T, frame=frame)


def decompose(A) -> LsDecomposition:
    """Write ``A = R(th)^T J(r) Lambda J(r)^T R(th)`` with ``Lambda`` diagonal.

    ``lambda_1 >= lambda_2``. When the two force eigenvalues coincide the
    orientation is arbitrary; ``theta = 0`` is returned and ``degenerate`` set.
    """
    A = as_matrix(A)
    check_spd(A)
    a33 = A[2, 2]
    x = (A[0, 0] - A[1, 1]) + (A[1, 2] ** 2 - A[0, 2] ** 2) / a33
    y = -2.0 * (A[1, 0] - A[0, 2] * A[1, 2] / a33)
    degenerate = math.hypot(x, y) < 1e-10 * np.trace(A)
    theta = 0.0 if degenerate else 0.5 * math.atan2(y, x)
    R = se2.rot(theta)
    Lt = R @ A @ R.T
    r = np.array([Lt[1, 2] / Lt[2, 2], -Lt[0, 2] / Lt[2, 2]])
    J = se2.jac(-r)
    Lam = J @ Lt @ J.T
    return LsDecomposition(theta=theta, r=r, Lambda=np.diag(np.diag(Lam)), degenerate=degenerate)


def wrench_from_twist(A, nu) -> np.ndarray:
    """Friction wrench on the limit surface for sliding twist ``nu``."""
    nu = np.asarray(nu, dtype=float)
    if not np.any(nu):
        raise ZeroTwist("wrench is indeterminate for a zero twist")
    Ainv_nu = np.linalg.solve(as_matrix(A), nu)
    return -Ainv_nu / math.sqrt(nu @ Ainv_nu)


def twist_dir_from_wrench(A, w, tol: float = 1e-6) -> np.ndarray:
    """Unit sliding direction ``-A w`` for a wrench on the limit surface."""
    A = as_matrix(A)
    w = np.asarray(w, dtype=float)
    h = w @ A @ w
    if abs(h - 1.0) > tol:
        raise NotOnSurface(f"H(w) = {h:.6g}; sliding needs H(w) = 1")
    d = -A @ w
    return d / np.linalg.norm(d)


def hertz_contact(patch: PatchModel, f_n: float) -> tuple[float, float, float]:
    """Contact radius, maximum friction force and maximum friction torque."""
    if f_n < 0:
        raise ValueError("normal force must be non-negative")
    if patch.sphere_radius is None or patch.effective_modulus is None:
        raise ValueError("hertz_contact needs sphere_radius and effective_modulus")
    a = (0.75 * patch.sphere_radius * f_n / patch.effective_modulus) ** (1.0 / 3.0)
    return a, patch.mu_ho * f_n, patch.mu_ho * HERTZ_TORQUE_FACTOR * a * f_n


def contact_radius(patch: PatchModel, f_n: float, fixed_radius: float | None = None) -> float:
    radius = fixed_radius if fixed_radius is not None else patch.fixed_radius
    if radius is not None:
        return radius
    return hertz_contact(patch, f_n)[0]


def cop_shift(obj: ObjectModel, f_n: float) -> float:
    """Fraction by which the object's centre of pressure moves toward the patch."""
    if f_n < 0:
        raise ValueError("normal force must be non-negative")
    return 1.0 - (obj.cop_shift_c * f_n / obj.weight + 1.0) ** (-obj.cop_shift_delta)


def object_ls_matrix(obj: ObjectModel, r, f_n: float) -> np.ndarray:
    """Object-surface limit surface in the object frame, as a raw matrix."""
    load = obj.weight + f_n
    s = cop_shift(obj, f_n)
    A = obj.a_cop() / (load * load)
    # J(-s r) A J(-s r)^T written out
    x, y = s * float(r[0]), s * float(r[1])
    J = np.array([[1.0, 0.0, y], [0.0, 1.0, -x], [0.0, 0.0, 1.0]])
    return J @ A @ J.T


def object_ls_batch(A_cop_unit, weight, c, delta, r, f_n) -> np.ndarray:
    """:func:`object_ls_matrix` over a batch; every argument has a leading axis."""
    f_n = np.asarray(f_n, dtype=float)
    weight = np.asarray(weight, dtype=float)
    load = weight + f_n
    s = 1.0 - (np.asarray(c) * f_n / weight + 1.0) ** (-np.asarray(delta, dtype=float))
    r = np.asarray(r, dtype=float)
    n = len(f_n)
    J = np.zeros((n, 3, 3))
    J[:, 0, 0] = J[:, 1, 1] = J[:, 2, 2] = 1.0
    J[:, 0, 2] = s * r[:, 1]
    J[:, 1, 2] = -s * r[:, 0]
    A = np.asarray(A_cop_unit, dtype=float) / (load * load)[:, None, None]
    return J @ A @ np.swapaxes(J, 1, 2)


def build_object_ls(obj: ObjectModel, r, f_n: float) -> LimitSurface:
    return LimitSurface(object_ls_matrix(obj, r, f_n), frame="O")


def patch_ls_matrix(patch: PatchModel, f_n: float, fixed_radius: float | None = None) -> np.ndarray:
    if not f_n > 0:
        raise NonPositiveForce(f"patch limit surface needs f_n > 0, got {f_n}")
    if patch.B_unit is not None:
        return patch.B_unit / (f_n * f_n)
    a = contact_radius(patch, f_n, fixed_radius)
    f_max = patch.mu_ho * f_n
    m_max = patch.mu_ho * HERTZ_TORQUE_FACTOR * a * f_n
    return np.diag([1.0 / f_max**2, 1.0 / f_max**2, 1.0 / m_max**2])


def build_patch_ls(patch: PatchModel, f_n: float, fixed_radius: float | None = None) -> LimitSurface:
    """Patch limit surface in the hand frame for normal load ``f_n``."""
    return LimitSurface(patch_ls_matrix(patch, f_n, fixed_radius), frame="H")
