"""A patch pressed on a rectangular object: everything the solver needs."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import se2
from .limit_surface import (
    ObjectModel,
    PatchModel,
    contact_radius,
    object_ls_matrix,
    patch_ls_matrix,
)
from .solver import DiagonalizedPair, ModeSolution, diagonalize, solve


@dataclass(frozen=True)
class ContactScene:
    """Object, patch, the patch pose in the object frame and the normal force."""

    obj: ObjectModel
    patch: PatchModel
    q_rel: np.ndarray
    f_n: float

    def __post_init__(self):
        q = np.asarray(self.q_rel, dtype=float).reshape(3)
        object.__setattr__(self, "q_rel", q)
        object.__setattr__(self, "f_n", float(self.f_n))

    def with_(self, **kw) -> "ContactScene":
        return replace(self, **kw)

    @property
    def r(self) -> np.ndarray:
        return self.q_rel[:2]

    def G(self) -> np.ndarray:
        return se2.adjoint(self.q_rel)

    def A(self) -> np.ndarray:
        """Object-surface limit surface in the object frame."""
        return object_ls_matrix(self.obj, self.r, self.f_n)

    def A_hat(self) -> np.ndarray:
        G = self.G()
        return G @ self.A() @ G.T

    def B(self) -> np.ndarray:
        return patch_ls_matrix(self.patch, self.f_n)

    def pair(self) -> DiagonalizedPair:
        return diagonalize(self.A_hat(), self.B())

    def solve(self, nu_h, strict: bool = False) -> ModeSolution:
        return solve(self.A_hat(), self.B(), self.G(), nu_h, strict=strict)

    def patch_radius(self) -> float:
        return contact_radius(self.patch, self.f_n)

    def patch_inside(self) -> bool:
        return patch_inside(self.obj, self.r, self.patch_radius())


def patch_inside(obj: ObjectModel, r, radius: float) -> bool:
    """Whether a disc of ``radius`` at ``r`` lies within the object's footprint."""
    hx, hy = obj.half_extents
    return abs(float(r[0])) + radius <= hx and abs(float(r[1])) + radius <= hy
