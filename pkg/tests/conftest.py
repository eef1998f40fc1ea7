import numpy as np
import pytest
from hypothesis import settings

from patchslide.limit_surface import ObjectModel, PatchModel
from patchslide.scene import ContactScene

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

BOX_HALF = (0.078, 0.118)


def box_object(**kw):
    args = dict(half_extents=BOX_HALF, mass=0.45, mu_oe=0.2, cop_shift_c=0.6, cop_shift_delta=2.0)
    args.update(kw)
    return ObjectModel(**args)


def disc_patch(**kw):
    args = dict(mu_ho=0.8, fixed_radius=0.02)
    args.update(kw)
    return PatchModel(**args)


def box_scene(f_n=2.5, q_rel=(-0.03, 0.07, 0.0), **obj_kw):
    return ContactScene(box_object(**obj_kw), disc_patch(), np.array(q_rel, dtype=float), f_n)


def random_spd(rng, scale=None, cond=1e3):
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    lam = np.exp(rng.uniform(0, np.log(cond), 3))
    if scale is not None:
        lam = lam * scale
    return (Q * lam) @ Q.T


def boundary_twist(scene, rng):
    """Hand twist on the sticking boundary of ``scene`` (``None`` if there is none)."""
    pair = scene.pair()
    c = pair.c
    if not (c.min() < 0 < c.max()):
        return None
    nt = rng.normal(size=3)
    pos = c > 0
    P = (c[pos] * nt[pos] ** 2).sum()
    N = -(c[~pos] * nt[~pos] ** 2).sum()
    nt[~pos] *= np.sqrt(P / N)
    return scene.A_hat() @ pair.Phi @ nt


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scene():
    return box_scene()


BOX_SHAPES = [(0.05, 0.05), (0.04, 0.12), (0.078, 0.118), (0.15, 0.06), (0.1, 0.14)]


def random_box_scene(rng):
    """Box, disc patch, placement and normal force drawn from realistic ranges."""
    # shapes and friction come from small sets so the fitted limit surfaces are cached
    half = np.array(BOX_SHAPES[rng.integers(len(BOX_SHAPES))])
    obj = ObjectModel(tuple(half), rng.uniform(0.1, 2.0), float(rng.choice([0.15, 0.3, 0.5])),
                      rng.uniform(0.0, 1.0), rng.uniform(0.5, 3.0))
    patch = PatchModel(rng.uniform(0.4, 1.2), fixed_radius=rng.uniform(0.005, 0.025))
    room = half - patch.fixed_radius
    q_rel = np.array([*rng.uniform(-room, room), rng.uniform(-np.pi, np.pi)])
    return ContactScene(obj, patch, q_rel, rng.uniform(0.5, 10.0))


def random_pivoting_problem(rng, max_tries=1000):
    """``(scene, nu_h, exact_solution)`` for a realistic scene that pivots."""
    for _ in range(max_tries):
        scene = random_box_scene(rng)
        nu = rng.normal(size=3) * [0.01, 0.01, 0.2]
        s = scene.solve(nu)
        if s.mode.code == 1 and s.alpha is not None:
            return scene, nu, s
    raise RuntimeError("no pivoting scene drawn")
