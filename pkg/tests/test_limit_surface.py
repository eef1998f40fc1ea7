import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box_object, disc_patch, random_spd
from patchslide import se2
from patchslide.errors import NonPositiveForce, NotOnSurface, NotPositiveDefinite, ZeroTwist
from patchslide.limit_surface import (
    HERTZ_TORQUE_FACTOR,
    LimitSurface,
    PatchModel,
    build_object_ls,
    build_patch_ls,
    cop_shift,
    decompose,
    hertz_contact,
    object_ls_batch,
    object_ls_matrix,
    transform_ls,
    twist_dir_from_wrench,
    wrench_from_twist,
)

seeds = st.integers(0, 2**32 - 1)


def test_limit_surface_rejects_bad_matrices():
    with pytest.raises(NotPositiveDefinite):
        LimitSurface(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(NotPositiveDefinite):
        LimitSurface(np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1]]))
    assert LimitSurface(np.eye(3)).H([1, 0, 0]) == 1.0


def test_transform_identity_and_inverse(rng):
    A = random_spd(rng)
    assert np.allclose(transform_ls(A, [0, 0, 0]).A, A)
    q = np.array([0.3, -0.2, 1.1])
    back = transform_ls(transform_ls(A, q).A, se2.inverse(q))
    assert np.allclose(back.A, A, rtol=1e-10, atol=1e-12)


def test_transform_pure_translation_expansion():
    a1, a2, a3, d = 2.0, 3.0, 5.0, 0.4
    A_hat = transform_ls(np.diag([a1, a2, a3]), [0, d, 0]).A
    # J([0, d]) diag J^T written out by hand
    expected = np.array([[a1 + d * d * a3, 0, -d * a3], [0, a2, 0], [-d * a3, 0, a3]])
    assert np.allclose(A_hat, expected)


@given(seeds)
def test_transform_preserves_spd(seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng)
    q = rng.normal(size=3)
    assert np.all(np.linalg.eigvalsh(transform_ls(A, q).A) > 0)


def test_decompose_diagonal():
    d = decompose(np.diag([1.0, 1.0, 4.0]))
    assert d.theta == 0.0 and d.degenerate
    assert np.allclose(d.r, 0) and np.allclose(d.Lambda, np.diag([1, 1, 4]))


def test_decompose_recovers_shift():
    J = se2.jac([0, -0.06])
    A = J @ np.diag([2.0, 2.0, 50.0]) @ J.T
    d = decompose(A)
    assert np.allclose(d.r, [0, -0.06], atol=1e-9)


@given(seeds)
def test_decompose_reconstructs(seed):
    A = random_spd(np.random.default_rng(seed))
    d = decompose(A)
    assert np.allclose(d.reconstruct(), A, rtol=1e-9, atol=1e-9 * np.abs(A).max())
    lam = np.diag(d.Lambda)
    assert lam[0] >= lam[1] and np.all(lam > 0)


def test_wrench_from_twist_examples():
    assert np.allclose(wrench_from_twist(np.eye(3), [1, 0, 0]), [-1, 0, 0])
    with pytest.raises(ZeroTwist):
        wrench_from_twist(np.eye(3), [0, 0, 0])


@given(seeds, st.floats(0.01, 100))
def test_wrench_on_surface_and_scale_free(seed, c):
    rng = np.random.default_rng(seed)
    A = random_spd(rng)
    nu = rng.normal(size=3)
    w = wrench_from_twist(A, nu)
    assert math.isclose(w @ A @ w, 1.0, rel_tol=1e-10)
    assert np.allclose(wrench_from_twist(A, c * nu), w, rtol=1e-9, atol=1e-12)
    assert np.allclose(twist_dir_from_wrench(A, w), nu / np.linalg.norm(nu), atol=1e-9)


def test_twist_dir_examples():
    assert np.allclose(twist_dir_from_wrench(np.eye(3), [-1, 0, 0]), [1, 0, 0])
    with pytest.raises(NotOnSurface):
        twist_dir_from_wrench(np.eye(3), [-0.5, 0, 0])


def test_hertz_contact():
    p = PatchModel(0.8, sphere_radius=0.01, effective_modulus=1e5)
    assert hertz_contact(p, 0.0) == (0.0, 0.0, 0.0)
    a, f, m = hertz_contact(p, 4.0)
    assert math.isclose(f, 3.2)
    assert math.isclose(a, (3 * 0.01 * 4.0 / (4 * 1e5)) ** (1 / 3))
    for fn in (0.1, 1.0, 7.0):
        a, f, m = hertz_contact(p, fn)
        assert math.isclose(m / (0.8 * a * fn), 3 * math.pi / 16)
    assert math.isclose(HERTZ_TORQUE_FACTOR, 0.5890486225480862)


def test_cop_shift():
    o = box_object()
    assert cop_shift(o, 0.0) == 0.0
    assert math.isclose(cop_shift(o, o.weight), 0.609375)
    s = [cop_shift(o, f) for f in np.linspace(0, 50, 200)]
    assert np.all(np.diff(s) >= 0) and max(s) < 1
    slab = box_object(cop_shift_c=0.9642, cop_shift_delta=1.324, mass=1.593)
    assert 0 < cop_shift(slab, slab.weight) < 1


def test_object_ls_unloaded_force_capacity():
    A = object_ls_matrix(box_object(), [0.02, 0.05], 0.0)
    # no load from the patch, no shift: force capacity close to mu m g
    for i in (0, 1):
        assert math.isclose(1 / math.sqrt(A[i, i]), 0.2 * 0.45 * 9.81, rel_tol=0.02)
    d = decompose(A)
    assert np.allclose(d.r, 0, atol=1e-12)


def test_object_ls_shift_moves_toward_patch():
    o = box_object()
    r = np.array([-0.03, 0.07])
    prev = np.inf
    for fn in np.linspace(0.5, 20, 12):
        d = decompose(build_object_ls(o, r, fn).A)
        s = cop_shift(o, fn)
        # A = J(r) Lambda J(r)^T describes a centre of pressure at -r
        cop = -d.r
        assert np.allclose(cop, s * r, atol=1e-9)
        dist = np.linalg.norm(cop - r)
        assert dist < prev
        prev = dist


def test_object_ls_batch_matches(rng):
    o = box_object()
    r = rng.uniform(-0.05, 0.05, size=(10, 2))
    fn = rng.uniform(0.1, 8, size=10)
    batch = object_ls_batch(np.repeat(o.a_cop()[None], 10, 0), np.full(10, o.weight),
                            np.full(10, 0.6), np.full(10, 2.0), r, fn)
    assert np.allclose(batch, [object_ls_matrix(o, ri, fi) for ri, fi in zip(r, fn)], rtol=1e-14)


def test_patch_ls_scaling():
    p = disc_patch()
    B1, B2 = build_patch_ls(p, 2.0).A, build_patch_ls(p, 4.0).A
    assert np.allclose(B2, B1 / 4)
    with pytest.raises(NonPositiveForce):
        build_patch_ls(p, 0.0)
    h = PatchModel(0.8, sphere_radius=0.01, effective_modulus=1e5)
    ratios = [math.sqrt(build_patch_ls(h, f).A[0, 0] / build_patch_ls(h, f).A[2, 2]) for f in (1, 8)]
    # torque grows as f^(4/3) against force f: the ratio grows as f^(1/3)
    assert math.isclose(ratios[1] / ratios[0], 2.0, rel_tol=1e-12)


def test_patch_full_override():
    B = np.array([[2.0, 0.1, 0], [0.1, 3.0, 0], [0, 0, 900.0]])
    p = PatchModel(0.8, fixed_radius=0.02, B_unit=B)
    assert np.allclose(build_patch_ls(p, 2.0).A, B / 4)
