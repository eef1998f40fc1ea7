"""Pivoting solution with a presumed pivot point.

Given a guess ``p`` of the pivot point (hand frame), the object twist is
fixed up to one scalar ``gamma``: the hand twist's component that keeps ``p``
stationary is transferred to the object, and ``gamma`` adds rotation about
``p``. ``gamma`` follows from a quadratic; refining ``p`` from the resulting
relative twist and repeating converges to the exact pivoting solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NegativeK2Both, NoRealRoot, ZeroTwist
from .solver import Mode, ModeSolution, PIVOT_INF_EPS, diagonalize_batch


DISC_RTOL = 1e-12  # discriminants this small relative to their terms count as zero


@dataclass(frozen=True)
class PivotGuess:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(2)
        if not np.all(np.isfinite(p)):
            raise ValueError("pivot guess must be finite")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class ApproxResult:
    solution: ModeSolution
    gamma: float
    pivot_update: np.ndarray | None
    """Pivot implied by the patch's own sliding direction; equals the guess at convergence."""
    iterations: int = 1
    converged: bool = True


def _as_point(guess) -> np.ndarray:
    return guess.p if isinstance(guess, PivotGuess) else PivotGuess(guess).p


def pivot_jacobian(p) -> np.ndarray:
    """First two rows of ``J(p)``: velocity of point ``p`` for a twist."""
    x, y = float(p[0]), float(p[1])
    return np.array([[1.0, 0.0, -y], [0.0, 1.0, x]])


def pivot_jacobian_pinv(p) -> np.ndarray:
    """Closed-form right pseudo-inverse ``J_p^T (J_p J_p^T)^-1``."""
    x, y = float(p[0]), float(p[1])
    d = 1.0 + x * x + y * y
    # (J_p J_p^T)^-1 = [[1 + x^2, x y], [x y, 1 + y^2]] / d
    M = np.array([[1.0 + x * x, x * y], [x * y, 1.0 + y * y]]) / d
    return pivot_jacobian(p).T @ M


def null_twist(p) -> np.ndarray:
    """Rotation about ``p``: spans the null space of ``pivot_jacobian(p)``."""
    return np.array([float(p[1]), -float(p[0]), 1.0])


def _parts(Phi, nu_h, p):
    Jpinv = pivot_jacobian_pinv(p)
    v_p = pivot_jacobian(p) @ nu_h
    n = null_twist(p)
    base = Jpinv @ v_p
    return base, n, Phi.T @ base, Phi.T @ n


def approx_solve(A_hat, B, G, nu_h, guess, branch: int | None = None) -> ApproxResult:
    """Pivoting solution assuming the pivot sits at ``guess``.

    When both ``gamma`` roots are admissible the one whose implied pivot is
    closest to the guess is kept; ``branch`` (0 for the quadratic's
    ``+sqrt`` root, 1 for ``-sqrt``) forces a root instead.
    """
    return _approx(A_hat, B, G, nu_h, guess, branch, extend=False)


def _approx(A_hat, B, G, nu_h, guess, branch, extend):
    """:func:`approx_solve`; ``extend`` clamps a negative discriminant to zero
    and keeps branches with ``k2 <= 0``, continuing each branch across the
    fold of the quadratic and across sign changes of the sliding rate."""
    A_hat = np.asarray(A_hat, dtype=float)
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    if not np.any(nu_h):
        raise ZeroTwist("hand twist must be non-zero")
    p = _as_point(guess)
    Phi, lam = diagonalize_batch(A_hat, B)
    c = lam - 1.0
    base, n, w_bar, w0 = _parts(Phi, nu_h, p)

    qa = float(w0 @ (c * w0))
    qb = float(w0 @ (c * w_bar))
    qc = float(w_bar @ (c * w_bar))
    scale = max(abs(qa), abs(qb), abs(qc), 1e-300)
    if abs(qa) <= 1e-14 * scale:
        if abs(qb) <= 1e-14 * scale:
            raise NoRealRoot("gamma equation is degenerate for this pivot guess")
        gammas = [(0, -qc / (2.0 * qb))]
    else:
        disc = qb * qb - qa * qc
        if disc < 0 and (extend or -disc <= DISC_RTOL * max(qb * qb, abs(qa * qc))):
            disc = 0.0
        if disc < 0:
            raise NoRealRoot(f"no real gamma (discriminant {disc:.3g})")
        sq = math.sqrt(disc)
        gammas = [(0, (-qb + sq) / qa), (1, (-qb - sq) / qa)]
    if branch is not None:
        gammas = [g for g in gammas if g[0] == branch]

    omega_free = float(n @ nu_h) / float(n @ n)
    cands = []
    for _, gamma in gammas:
        k1 = float(np.linalg.norm(w_bar + gamma * w0))
        if k1 == 0.0:
            continue
        w = -(w_bar + gamma * w0) / k1
        BPw = B @ (Phi @ w)
        if BPw[2] == 0.0:
            continue
        k2 = -(omega_free - gamma) / BPw[2]
        if k2 <= 0 and not extend:
            continue
        vx, vy, om = (-k2 * BPw).tolist()
        if abs(om) < PIVOT_INF_EPS * (1.0 + abs(vx) + abs(vy)):
            update, dist = None, math.inf
        else:
            update = np.array([-vy / om, vx / om])
            dist = float(np.linalg.norm(update - p))
        cands.append((dist, gamma, k1, k2, w, update))
    if not cands:
        raise NegativeK2Both("no gamma branch gives a positive sliding rate")
    # both branches admissible: keep the one most consistent with the guess
    _, gamma, k1, k2, w, update = min(cands, key=lambda c: c[0])

    hnu_o = base + gamma * n
    nu_o = np.linalg.solve(G, hnu_o)
    nu_rel = nu_h - hnu_o
    w_h = Phi @ w
    sol = ModeSolution(
        mode=Mode.PIVOTING,
        alpha=k2 / k1,
        k1=k1,
        k2=k2,
        nu_o=nu_o,
        nu_rel=nu_rel,
        w_h=w_h,
        w_o=G.T @ w_h,
        pivot=p.copy(),
    )
    return ApproxResult(sol, gamma, update)


def _try(A_hat, B, G, nu_h, p):
    try:
        res = approx_solve(A_hat, B, G, nu_h, p)
    except (NoRealRoot, NegativeK2Both):
        return None, None
    if res.pivot_update is None:
        return res, None
    return res, res.pivot_update - p


def _newton_step(A_hat, B, G, nu_h, p, r):
    """Newton step on ``update(p) - p`` with a finite-difference Jacobian.

    The update can be very sensitive to ``p`` (an expanding map), so the
    difference step shrinks with the residual and central differences are
    used when both sides admit a solution.
    """
    size = float(np.linalg.norm(r))
    h = min(1e-7, max(1e-3 * size, 1e-10)) * (1.0 + float(np.abs(p).max()))
    J = np.empty((2, 2))
    for k in range(2):
        dp = np.zeros(2)
        dp[k] = h
        _, rp = _try(A_hat, B, G, nu_h, p + dp)
        _, rm = _try(A_hat, B, G, nu_h, p - dp)
        if rp is not None and rm is not None:
            J[:, k] = (rp - rm) / (2.0 * h)
        elif rp is not None:
            J[:, k] = (rp - r) / h
        elif rm is not None:
            J[:, k] = (r - rm) / h
        else:
            return None
    try:
        return -np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        return None


def _descend(A_hat, B, G, nu_h, p, step, size):
    """Backtrack along ``step`` until the residual shrinks."""
    t = 1.0
    for _ in range(30):
        cand, rc = _try(A_hat, B, G, nu_h, p + t * step)
        if rc is not None and np.linalg.norm(rc) < size:
            return p + t * step, cand, rc
        t *= 0.5
    return None


def _iterate(A_hat, B, G, nu_h, p, max_iter, tol, fixed_point_iters):
    res, r = _try(A_hat, B, G, nu_h, p)
    if res is None:
        return None
    if r is None:
        return ApproxResult(res.solution, res.gamma, None, 1, False)
    for it in range(1, max_iter + 1):
        size = float(np.linalg.norm(r))
        # a far pivot (near-translation) only fixes the twist to tol / |p|^2
        tol_p = tol * max(1.0, float(p @ p))
        if size < tol_p:
            return ApproxResult(res.solution, res.gamma, res.pivot_update, it, True)
        newton = _newton_step(A_hat, B, G, nu_h, p, r)
        if newton is not None and float(np.linalg.norm(newton)) < tol_p:
            # the pivot is known to tol even if roundoff keeps the residual up
            _, rn = _try(A_hat, B, G, nu_h, p + newton)
            if rn is not None and np.linalg.norm(rn) <= 10.0 * size:
                return ApproxResult(res.solution, res.gamma, res.pivot_update, it, True)
        steps = [r, newton] if it <= fixed_point_iters else [newton, r]
        moved = None
        for step in steps:
            if step is not None:
                moved = _descend(A_hat, B, G, nu_h, p, step, size)
                if moved is not None:
                    break
        if moved is None:
            return ApproxResult(res.solution, res.gamma, res.pivot_update, it, False)
        p, res, r = moved
    return ApproxResult(res.solution, res.gamma, res.pivot_update, max_iter, False)


def feasible_pivot(A_hat, B) -> np.ndarray | None:
    """Pivot guess deepest inside the region where a pivoting solution exists.

    A guess ``p`` admits a real ``gamma`` whenever the rotation about ``p``
    lies in the sticking cone of the pair, i.e. ``n^T M n < 0`` with
    ``M = A_hat^-1 (B - A_hat) A_hat^-1``. This returns the stationary point of
    that quadratic over the plane, or ``None`` when it is singular.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    Ainv = np.linalg.inv(A_hat)
    M = Ainv @ (np.asarray(B, dtype=float) - A_hat) @ Ainv
    # n(p) = T [x, y, 1]
    T = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    N = T.T @ M @ T
    try:
        return np.linalg.solve(N[:2, :2], -N[:2, 2])
    except np.linalg.LinAlgError:
        return None


def iterate_pivot(A_hat, B, G, nu_h, guess=(0.0, 0.0), max_iter: int = 50,
                  tol: float = 1e-11, fixed_point_iters: int = 8) -> ApproxResult:
    """Alternate :func:`approx_solve` and the pivot update until it settles.

    The first ``fixed_point_iters`` rounds move the guess to the update,
    halving any update larger than the previous one. Later rounds take
    Newton steps on ``update(p) - p`` with backtracking, which rescues slowly
    contracting or oscillating cases.

    The region of guesses that admit a pivoting solution can be a thin band
    around the true pivot. If the iteration from ``guess`` breaks down it is
    restarted from :func:`feasible_pivot` and then from the centres of
    rotation of the sticking and slipping limits. As a last resort the
    fixed point is located directly on the curve of pivots the patch can
    produce. Without convergence the last iterate is returned with
    ``converged=False``.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    p = _as_point(guess)
    res = _iterate(A_hat, B, G, nu_h, p, max_iter, tol, fixed_point_iters)
    if res is not None and res.converged:
        return res
    for p2 in _restarts(A_hat, B, nu_h):
        res2 = _iterate(A_hat, B, G, nu_h, p2, max_iter, tol, fixed_point_iters)
        if res2 is not None and res2.converged:
            return res2
        if res is None:
            res = res2
    # near a fold of the gamma quadratic the basins are too thin for the
    # iteration; solve the one-dimensional fixed-point problem on the curve
    for p2, branch in _curve_roots(A_hat, B, G, nu_h):
        res2 = _iterate(A_hat, B, G, nu_h, p2, max_iter, tol, fixed_point_iters)
        if res2 is not None and res2.converged:
            return res2
        root = approx_solve(A_hat, B, G, nu_h, p2, branch)
        return ApproxResult(root.solution, root.gamma, root.pivot_update, max_iter, True)
    if res is None:
        approx_solve(A_hat, B, G, nu_h, p)  # raises the guess's own failure
    return res


def _restarts(A_hat, B, nu_h):
    """Fallback guesses: the most feasible pivot, then the centres of rotation
    of the two limiting regimes (``alpha -> 0`` and ``alpha -> inf``)."""
    out = []
    p = feasible_pivot(A_hat, B)
    if p is not None and np.all(np.isfinite(p)):
        out.append(p)
    for twist in (B @ np.linalg.solve(A_hat, nu_h), nu_h):
        if abs(twist[2]) > PIVOT_INF_EPS * (1.0 + abs(twist[0]) + abs(twist[1])):
            out.append(np.array([-twist[1], twist[0]]) / twist[2])
    return out


class _PivotCurve:
    """Closed curve of wrenches on both limit surfaces, by one angle.

    In the diagonalizing coordinates the curve is ``sum c_i w_i^2 = 0``.
    Scaling each axis by ``|c_i|^-1/2`` spreads the angle evenly along it.
    """

    def __init__(self, A_hat, B):
        self.B = B
        self.Phi, lam = diagonalize_batch(A_hat, B)
        c = lam - 1.0
        self.k = 0 if np.sum(c > 0) == 1 else 2  # the axis whose sign is unique
        self.i, self.j = [a for a in range(3) if a != self.k]
        self.a = 1.0 / np.sqrt(np.abs(c))

    def wrench(self, phi):
        w = np.zeros(3)
        w[self.i] = self.a[self.i] * math.cos(phi)
        w[self.j] = self.a[self.j] * math.sin(phi)
        w[self.k] = self.a[self.k]
        return w

    def angle(self, w):
        """Angle of a curve wrench (sign of ``w`` ignored)."""
        s = self.a[self.k] / w[self.k]
        return math.atan2(s * w[self.j] / self.a[self.j], s * w[self.i] / self.a[self.i])

    def pivot(self, phi):
        t = self.B @ (self.Phi @ self.wrench(phi))
        if abs(t[2]) < PIVOT_INF_EPS * (1.0 + abs(t[0]) + abs(t[1])):
            return None
        return np.array([-t[1], t[0]]) / t[2]


def _curve_mismatch_batch(curve, c, B, nu_h, phis, branch):
    """Vectorized curve-angle mismatch of the ``branch`` root, extended as in ``_approx``."""
    a, Phi = curve.a, curve.Phi
    W = np.zeros((len(phis), 3))
    W[:, curve.i] = a[curve.i] * np.cos(phis)
    W[:, curve.j] = a[curve.j] * np.sin(phis)
    W[:, curve.k] = a[curve.k]
    T = (W @ Phi.T) @ B.T
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y = -T[:, 1] / T[:, 2], T[:, 0] / T[:, 2]
        # closed-form J_p^+ J_p applied to nu_h, and the rotation about p
        d = 1.0 + x * x + y * y
        vx = nu_h[0] - nu_h[2] * y
        vy = nu_h[1] + nu_h[2] * x
        mx = ((1.0 + x * x) * vx + x * y * vy) / d
        my = (x * y * vx + (1.0 + y * y) * vy) / d
        base = np.column_stack([mx, my, -y * mx + x * my])
        n = np.column_stack([y, -x, np.ones_like(x)])
        wb, w0 = base @ Phi, n @ Phi
        qa = (w0 * c * w0).sum(1)
        qb = (w0 * c * wb).sum(1)
        qc = (wb * c * wb).sum(1)
        sq = np.sqrt(np.maximum(qb * qb - qa * qc, 0.0))
        gamma = (-qb + (sq if branch == 0 else -sq)) / qa
        v = wb + gamma[:, None] * w0
        w = -v / np.linalg.norm(v, axis=1, keepdims=True)
        s = a[curve.k] / w[:, curve.k]
        ang = np.arctan2(s * w[:, curve.j] / a[curve.j], s * w[:, curve.i] / a[curve.i])
    out = (ang - phis + math.pi) % (2.0 * math.pi) - math.pi
    out[~np.isfinite(out)] = np.nan
    return out


def _curve_roots(A_hat, B, G, nu_h, n: int = 100_000):
    """``(pivot, branch)`` pairs at which a pivot on the curve reproduces itself.

    A fixed point is a curve wrench whose patch centre of rotation, used as
    the guess, returns the same wrench. Near a fold of the ``gamma``
    quadratic the two roots swap roles and the admissible stretch of the
    curve can be very short, so each root is followed on its own over a fine
    scan; sign changes of the mismatch in curve angle are refined by
    bracketing with the scalar solver.
    """
    curve = _PivotCurve(A_hat, B)
    Phi_inv = np.linalg.inv(curve.Phi)
    _, lam = diagonalize_batch(A_hat, B)
    c = lam - 1.0

    def mismatch(phi, branch, extend=True):
        p = curve.pivot(phi)
        if p is None:
            return math.nan
        try:
            res = _approx(A_hat, B, G, nu_h, p, branch, extend)
        except (NoRealRoot, NegativeK2Both):
            return math.nan
        w = Phi_inv @ res.solution.w_h
        d = curve.angle(w) - phi
        return (d + math.pi) % (2.0 * math.pi) - math.pi

    phis = np.linspace(0.0, 2.0 * math.pi, n + 1)
    found = []
    for branch in (0, 1):
        vals = _curve_mismatch_batch(curve, c, B, nu_h, phis, branch)
        # a genuine crossing is small on both sides; wrap-around jumps are not
        cross = (vals[:-1] * vals[1:] <= 0) & (np.abs(vals[:-1] - vals[1:]) < 1.0)
        for idx in np.flatnonzero(cross):
            a, b = phis[idx], phis[idx + 1]
            try:
                phi = brentq(mismatch, a, b, args=(branch,), xtol=1e-15, rtol=1e-15)
            except (ValueError, RuntimeError):
                phi = a if abs(vals[idx]) < abs(vals[idx + 1]) else b
            # keep roots that hold without the extension
            m = mismatch(phi, branch, extend=False)
            if abs(m) < 1e-6:
                found.append((abs(m), curve.pivot(phi), branch))
    found.sort(key=lambda x: x[0])
    return [(p, branch) for _, p, branch in found]


def solve_zero_torsion(A_hat, G, nu_h, p) -> float:
    """``gamma`` when the contact at ``p`` transmits no torque about ``p``."""
    A_hat = np.asarray(A_hat, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    if not np.any(nu_h):
        raise ZeroTwist("hand twist must be non-zero")
    p = _as_point(p)
    base = pivot_jacobian_pinv(p) @ (pivot_jacobian(p) @ nu_h)
    n = null_twist(p)
    # with Phi Phi^T = A_hat^{-1}: w0 . w_bar = n^T A_hat^-1 base
    Ainv_n = np.linalg.solve(A_hat, n)
    return -float(Ainv_n @ base) / float(Ainv_n @ n)


def solve_fixed_torsion(A_hat, G, nu_h, p, m_p: float) -> tuple[float, float]:
    """``(gamma, k1)`` when the torque about ``p`` is held at ``m_p``.

    The torque condition ``gamma |w0|^2 + w0.w_bar = -k1 m_p`` squared against
    ``k1 = |w_bar + gamma w0|`` gives a quadratic in ``gamma``; the branch
    consistent with the unsquared sign and ``k1 > 0`` is returned.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    if not np.any(nu_h):
        raise ZeroTwist("hand twist must be non-zero")
    p = _as_point(p)
    L = np.linalg.cholesky(A_hat)
    # any Phi with Phi Phi^T = A_hat^-1 gives the same inner products
    Phi = np.linalg.inv(L).T
    _, _, w_bar, w0 = _parts(Phi, nu_h, p)
    a = float(w0 @ w0)
    b = float(w0 @ w_bar)
    c = float(w_bar @ w_bar)
    m = float(m_p)
    if m == 0.0:
        gamma = -b / a
        return gamma, float(np.linalg.norm(w_bar + gamma * w0))
    m2 = m * m
    qa = a * a - m2 * a
    qb = b * (a - m2)
    qc = b * b - m2 * c
    if abs(qa) <= 1e-14 * max(a * a, 1e-300):
        cands = [-qc / (2.0 * qb)] if qb != 0 else []
    else:
        disc = qb * qb - qa * qc
        if disc < 0 and -disc <= DISC_RTOL * max(qb * qb, abs(qa * qc)):
            disc = 0.0
        if disc < 0:
            raise NoRealRoot(f"no real gamma for m_p = {m_p}")
        sq = math.sqrt(disc)
        cands = [(-qb + sq) / qa, (-qb - sq) / qa]
    for gamma in cands:
        k1 = float(np.linalg.norm(w_bar + gamma * w0))
        lhs = gamma * a + b
        scale = abs(gamma * a) + abs(b) + k1 * abs(m)
        if k1 > 0 and abs(lhs + k1 * m) <= 1e-9 * max(scale, 1e-300):
            return gamma, k1
    raise NoRealRoot(f"no branch with positive k1 for m_p = {m_p}")
