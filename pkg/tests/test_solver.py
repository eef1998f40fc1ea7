import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from patchslide import se2
from patchslide.errors import DegenerateC, NotPositiveDefinite
from patchslide.solver import (
    PIVOT,
    SLIP,
    STICK,
    DiagonalizedPair,
    Mode,
    alpha_branch,
    alpha_residual,
    diagonalize,
    positive_alpha_roots_batch,
    select_mode,
    select_mode_batch,
    solve,
    solve_alpha,
    solve_batch,
)

seeds = st.integers(0, 2**32 - 1)


def random_problem(rng):
    A_hat = random_spd(rng, cond=1e2)
    B = random_spd(rng, cond=1e2) * math.exp(rng.uniform(-1.5, 1.5))
    G = se2.adjoint(rng.normal(size=3) * [0.1, 0.1, 3])
    nu = rng.normal(size=3)
    return A_hat, B, G, nu


def test_diagonalize_examples(rng):
    A = random_spd(rng)
    p = diagonalize(A, A)
    assert np.allclose(p.lam, 1) and p.is_degenerate()
    p = diagonalize(A, 2 * A)
    assert np.allclose(p.lam, 2)
    with pytest.raises(NotPositiveDefinite):
        diagonalize(A, -A)


@given(seeds)
def test_diagonalize_identities(seed):
    rng = np.random.default_rng(seed)
    A, B = random_spd(rng), random_spd(rng)
    p = diagonalize(A, B)
    assert np.allclose(p.Phi.T @ A @ p.Phi, np.eye(3), atol=1e-9)
    assert np.allclose(p.Phi.T @ B @ p.Phi, np.diag(p.lam), atol=1e-9 * p.lam.max())
    assert np.all(np.diff(p.lam) <= 0) and np.all(p.lam > 0)
    assert np.allclose(p.C, np.diag(p.lam - 1))


def _pair(lam):
    return DiagonalizedPair(np.eye(3), np.asarray(lam, dtype=float))


def test_solve_alpha_same_sign_has_no_root():
    assert solve_alpha(_pair([2.0, 3.0, 4.0]), [1, 1, 1]) is None
    assert solve_alpha(_pair([0.2, 0.3, 0.4]), [1, 1, 1]) is None


def test_solve_alpha_closed_form_example():
    # (1 + a/2)^2 = (1 + 2a)^2 / 2 for lam = (2, 0.5, 0.5), nu~ = (1, 1, 0)
    r = math.sqrt(0.5)
    expected = (1 - r) / (2 * r - 0.5)
    a = solve_alpha(_pair([2.0, 0.5, 0.5]), [1, 1, 0])
    assert math.isclose(a, expected, rel_tol=1e-9)
    # independent check: bisection on the unreduced equation
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = 1 / (1 + 2 * mid) ** 2 - 0.5 / (1 + 0.5 * mid) ** 2
        lo, hi = (mid, hi) if g > 0 else (lo, mid)
    assert math.isclose(a, lo, rel_tol=1e-9)


def test_solve_alpha_degenerate():
    with pytest.raises(DegenerateC):
        solve_alpha(_pair([2.0, 1.0, 0.5]), [1, 1, 1])
    with pytest.raises(ValueError):
        solve_alpha(_pair([2.0, 1.5, 0.5]), [0, 0, 0])


def test_select_mode_examples():
    assert select_mode(_pair([0.5, 0.4, 0.3]), [0, 0, 0])[0] is Mode.STICKING
    assert select_mode(_pair([2.0, 3.0, 4.0]), [0, 0, 0])[0] is Mode.SLIPPING
    mode, alpha = select_mode(_pair([2.0, 0.5, 0.5]), [0, 0, 0])
    assert mode is Mode.PIVOTING and alpha is None
    assert select_mode(_pair([2.0, 0.5, 0.5]), [0, 1, 0])[0] is Mode.STICKING
    with pytest.raises(DegenerateC):
        select_mode(_pair([1.0, 0.5, 0.5]), [0, 1, 0])


@given(seeds)
def test_unique_root_and_mode(seed):
    rng = np.random.default_rng(seed)
    lam = np.exp(rng.uniform(-3, 3, size=(200, 3)))
    nt = rng.normal(size=(200, 3))
    roots = positive_alpha_roots_batch(lam, nt)
    assert np.all((~np.isnan(roots)).sum(1) <= 1)
    mode, alpha, _ = select_mode_batch(lam, nt)
    c = lam - 1
    g0 = (c * nt**2).sum(1)
    ginf = (c * nt**2 / lam**2).sum(1)
    stick_ok, slip_ok, piv_ok = g0 <= 0, ginf >= 0, ~np.isnan(alpha)
    assert np.all(stick_ok.astype(int) + slip_ok + piv_ok == 1)
    assert np.all((mode == STICK) == stick_ok)
    assert np.all((mode == SLIP) == slip_ok)
    assert np.all((mode == PIVOT) == piv_ok)


@given(seeds)
def test_solution_relations(seed):
    rng = np.random.default_rng(seed)
    A_hat, B, G, nu = random_problem(rng)
    s = solve(A_hat, B, G, nu)
    wh = s.w_h
    assert np.allclose(s.w_o, G.T @ wh, atol=1e-9 * np.linalg.norm(wh))
    hA, hB = wh @ A_hat @ wh, wh @ B @ wh
    hnu_o = G @ s.nu_o
    if s.mode is Mode.PIVOTING:
        assert math.isclose(hA, 1, rel_tol=1e-8) and math.isclose(hB, 1, rel_tol=1e-8)
        M = np.eye(3) + s.alpha * B @ np.linalg.inv(A_hat)
        assert np.allclose(hnu_o, np.linalg.solve(M, nu), atol=1e-9 * np.linalg.norm(nu))
        assert np.allclose(s.nu_rel, nu - hnu_o, atol=1e-12)
        assert math.isclose(s.k2, s.alpha * s.k1, rel_tol=1e-12)
    elif s.mode is Mode.STICKING:
        assert math.isclose(hA, 1, rel_tol=1e-8) and hB <= 1 + 1e-9
        assert np.allclose(hnu_o, nu) and np.allclose(s.nu_rel, 0)
        assert s.alpha is None and s.pivot is not None
    else:
        assert math.isclose(hB, 1, rel_tol=1e-8) and hA <= 1 + 1e-9
        assert np.allclose(s.nu_o, 0) and np.allclose(s.nu_rel, nu)
    assert s.k1 >= 0 and s.k2 >= 0
    # friction resists: the patch slides against w_h, the object against w_o
    assert s.nu_rel @ wh <= 1e-12
    assert s.nu_o @ s.w_o <= 1e-12


@given(seeds, st.sampled_from([-1.0, 0.1, 10.0]))
def test_scaling_and_reversal(seed, c):
    rng = np.random.default_rng(seed)
    A_hat, B, G, nu = random_problem(rng)
    s1, s2 = solve(A_hat, B, G, nu), solve(A_hat, B, G, c * nu)
    assert s1.mode is s2.mode
    assert np.allclose(s2.nu_o, c * s1.nu_o, rtol=1e-8, atol=1e-12)
    assert np.allclose(s2.nu_rel, c * s1.nu_rel, rtol=1e-8, atol=1e-12)
    if s1.alpha is not None:
        assert math.isclose(s1.alpha, s2.alpha, rel_tol=1e-8)
    if s1.pivot is not None:
        assert np.allclose(s1.pivot, s2.pivot, rtol=1e-7, atol=1e-9)


def test_pivot_periodic_in_direction(rng):
    A_hat, B, G, _ = random_problem(rng)
    for phi in np.linspace(0, math.pi, 13):
        u = [math.cos(phi), math.sin(phi), 0.0]
        p1, p2 = solve(A_hat, B, G, u).pivot, solve(A_hat, B, G, -np.array(u)).pivot
        if p1 is None:
            assert p2 is None
        else:
            assert np.allclose(p1, p2, rtol=1e-8, atol=1e-10)


def test_pure_rotation_pivot_at_origin():
    A_hat, B = np.diag([1.0, 1.0, 1.0]), np.diag([1e6, 1e6, 1e6])
    s = solve(A_hat, B, np.eye(3), [0, 0, 1.0])
    assert s.mode is Mode.SLIPPING
    assert np.allclose(s.pivot, 0)
    t = solve(A_hat, B, np.eye(3), [1.0, 0, 0])
    assert t.pivot is None


def test_degenerate_flag_and_strict(rng):
    A = random_spd(rng)
    s = solve(A, A, np.eye(3), [1, 0, 0])
    assert s.degenerate and s.mode is Mode.STICKING
    with pytest.raises(DegenerateC):
        solve(A, A, np.eye(3), [1, 0, 0], strict=True)


def test_zero_twist():
    s = solve(np.eye(3), np.diag([2.0, 0.5, 0.5]), np.eye(3), [0, 0, 0])
    assert s.mode is Mode.PIVOTING and s.alpha is None and np.allclose(s.nu_o, 0)


@given(seeds)
def test_batch_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    probs = [random_problem(rng) for _ in range(16)]
    A, B, G, nu = (np.array(x) for x in zip(*probs))
    r = solve_batch(A, B, G, nu)
    for i, (a, b, g, n) in enumerate(probs):
        s = solve(a, b, g, n)
        assert s.mode.code == r["mode"][i]
        assert np.allclose(s.nu_o, r["nu_o"][i], rtol=1e-8, atol=1e-12)
        assert np.allclose(s.w_h, r["w_h"][i], rtol=1e-8, atol=1e-12)


def test_forced_mode(rng):
    for _ in range(50):
        A_hat, B, G, nu = random_problem(rng)
        s = solve(A_hat, B, G, nu)
        if s.mode is Mode.PIVOTING:
            break
    forced = solve(A_hat, B, G, nu, mode=Mode.STICKING)
    assert forced.mode is Mode.STICKING
    assert np.allclose(G @ forced.nu_o, nu)


def test_alpha_branch_crosses_zero(rng):
    # near the sticking boundary (x = sqrt(0.128)) the branch changes sign smoothly
    lam = np.array([2.0, 0.9, 0.3])
    pair = _pair(lam)
    vals = []
    for x in np.linspace(0.33, 0.39, 7):
        nt = np.array([x, 1.0, 0.2])
        a = alpha_branch(pair, nt)
        assert abs(alpha_residual(lam, nt, a)[0]) < 1e-10
        vals.append(a)
    assert vals[0] < 0 < vals[-1] and np.all(np.diff(vals) > 0)
