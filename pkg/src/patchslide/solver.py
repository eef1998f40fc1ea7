"""Exact quasi-static solution for a patch dragging an object.

The object-surface limit surface seen from the hand (``A_hat``) and the
patch limit surface ``B`` are diagonalized together; the contact mode,
the sliding ratio ``alpha = k2 / k1`` and all twists and wrenches follow
in closed form.

All ``*_batch`` functions take arrays with a leading batch axis. The scalar
:func:`solve` repeats the same steps on plain floats, which is much faster
for one scene at a time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateC, NotPositiveDefinite

ALPHA_EPS = 1e-10
ROOT_IMAG_TOL = 1e-8
C_EPS = 1e-10
PIVOT_INF_EPS = 1e-12

STICK, PIVOT, SLIP = 0, 1, 2


class Mode(enum.Enum):
    STICKING = "stick"
    PIVOTING = "pivot"
    SLIPPING = "slip"

    @property
    def code(self) -> int:
        return _MODE_CODE[self]

    @classmethod
    def from_code(cls, code: int) -> "Mode":
        return _CODE_MODE[int(code)]


_MODE_CODE = {Mode.STICKING: STICK, Mode.PIVOTING: PIVOT, Mode.SLIPPING: SLIP}
_CODE_MODE = {v: k for k, v in _MODE_CODE.items()}


@dataclass(frozen=True)
class DiagonalizedPair:
    """``Phi^T A_hat Phi = I`` and ``Phi^T B Phi = diag(lam)``, ``lam`` descending."""

    Phi: np.ndarray
    lam: np.ndarray

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(self.lam)

    @property
    def c(self) -> np.ndarray:
        return self.lam - 1.0

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.c)

    def is_degenerate(self) -> bool:
        return bool(np.any(np.abs(self.c) < C_EPS))


@dataclass(frozen=True)
class ModeSolution:
    mode: Mode
    alpha: float | None
    k1: float
    k2: float
    nu_o: np.ndarray
    nu_rel: np.ndarray
    w_h: np.ndarray
    w_o: np.ndarray
    pivot: np.ndarray | None
    """Pivot point in the hand frame; ``None`` when it is at infinity."""
    degenerate: bool = False


# ---------------------------------------------------------------------------
# generalized eigenproblem

def diagonalize_batch(A_hat: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``B Phi = A_hat Phi Lambda`` by Cholesky reduction."""
    try:
        L = np.linalg.cholesky(A_hat)
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("limit surfaces must be positive definite") from None
    Linv = np.linalg.inv(L)
    M = Linv @ B @ np.swapaxes(Linv, -1, -2)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    lam, V = np.linalg.eigh(M)
    lam = lam[..., ::-1]
    V = V[..., ::-1]
    Phi = np.swapaxes(Linv, -1, -2) @ V
    return Phi, lam


def diagonalize(A_hat, B) -> DiagonalizedPair:
    Phi, lam = diagonalize_batch(np.asarray(A_hat, dtype=float), np.asarray(B, dtype=float))
    return DiagonalizedPair(Phi, lam)


# ---------------------------------------------------------------------------
# alpha: sum_i c_i nt_i^2 / (1 + alpha lam_i)^2 = 0

def _polymul2(p, q):
    """Product of two quadratics, coefficients low to high along the last axis."""
    return np.stack([
        p[..., 0] * q[..., 0],
        p[..., 0] * q[..., 1] + p[..., 1] * q[..., 0],
        p[..., 0] * q[..., 2] + p[..., 1] * q[..., 1] + p[..., 2] * q[..., 0],
        p[..., 1] * q[..., 2] + p[..., 2] * q[..., 1],
        p[..., 2] * q[..., 2],
    ], axis=-1)


def alpha_quartic(lam: np.ndarray, nt: np.ndarray) -> np.ndarray:
    """Quartic in alpha (coefficients low to high) with the same positive roots."""
    lam = np.asarray(lam, dtype=float)
    nt = np.asarray(nt, dtype=float)
    sq = np.stack([np.ones_like(lam), 2.0 * lam, lam * lam], axis=-1)  # (1 + lam a)^2
    t = (lam - 1.0) * nt * nt
    out = 0.0
    for i, (j, k) in enumerate(((1, 2), (0, 2), (0, 1))):
        out = out + t[..., i, None] * _polymul2(sq[..., j, :], sq[..., k, :])
    return out


def alpha_residual(lam, nt, alpha):
    """Left-hand side of the alpha equation and its derivative."""
    lam = np.asarray(lam, dtype=float)
    nt = np.asarray(nt, dtype=float)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    d = 1.0 + alpha * lam
    t = (lam - 1.0) * nt * nt
    return (t / d**2).sum(-1), (-2.0 * t * lam / d**3).sum(-1)


def _poly_roots_batch(coef: np.ndarray) -> np.ndarray:
    """Roots of polynomials (low to high, degree <= 4) via companion matrices.

    Returns ``(n, 4)`` complex roots padded with ``nan``.
    """
    n, m = coef.shape
    deg_max = m - 1
    roots = np.full((n, deg_max), np.nan, dtype=complex)
    scale = np.abs(coef).max(axis=1)
    scale[scale == 0] = 1.0
    c = coef / scale[:, None]
    lead_ok = np.abs(c) > 1e-13
    # effective degree: highest coefficient that is not negligible
    deg = np.where(lead_ok.any(1), deg_max - np.argmax(lead_ok[:, ::-1], axis=1), 0)
    for d in range(1, deg_max + 1):
        rows = np.nonzero(deg == d)[0]
        if rows.size == 0:
            continue
        cc = c[rows, : d + 1]
        comp = np.zeros((rows.size, d, d))
        comp[:, 0, :] = -cc[:, d - 1 :: -1] / cc[:, d, None]
        if d > 1:
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        roots[rows, :d] = np.linalg.eigvals(comp)
    return roots


def _polish(lam, nt, alpha, iters: int = 4):
    for _ in range(iters):
        g, dg = alpha_residual(lam, nt, alpha)
        ok = np.isfinite(alpha) & (dg != 0)
        step = np.where(ok, g / np.where(dg == 0, 1.0, dg), 0.0)
        alpha = alpha - step
    return alpha


def positive_alpha_roots_batch(lam: np.ndarray, nt: np.ndarray) -> np.ndarray:
    """All distinct positive real roots, ``(n, 4)`` padded with ``nan``."""
    roots = _poly_roots_batch(alpha_quartic(lam, nt))
    re, im = roots.real, roots.imag
    real = np.isfinite(re) & (np.abs(im) / (1.0 + np.abs(re)) < ROOT_IMAG_TOL)
    cand = np.where(real & (re > 0), re, np.nan)
    L, T = lam[:, None, :], nt[:, None, :]
    cand = _polish(L, T, cand)
    g, _ = alpha_residual(L, T, cand)
    size = (np.abs((L - 1.0) * T * T) / (1.0 + cand[..., None] * L) ** 2).sum(-1)
    cand = np.where((cand > ALPHA_EPS) & (np.abs(g) <= 1e-8 * size), cand, np.nan)
    # merge numerically repeated roots
    cand = np.sort(cand, axis=1)
    dup = np.zeros_like(cand, dtype=bool)
    dup[:, 1:] = np.abs(np.diff(cand, axis=1)) <= 1e-6 * np.abs(cand[:, 1:])
    return np.where(dup, np.nan, cand)


def solve_alpha_batch(lam: np.ndarray, nt: np.ndarray) -> np.ndarray:
    """The positive alpha root per row, ``nan`` where none exists.

    Rows with a sign change between ``alpha = 0`` and ``alpha -> inf`` are
    guaranteed a root; if the companion eigenvalues miss it, bisection
    recovers it.
    """
    roots = positive_alpha_roots_batch(lam, nt)
    alpha = np.nanmin(np.where(np.isnan(roots), np.inf, roots), axis=1)
    alpha[np.isinf(alpha)] = np.nan
    c = lam - 1.0
    g0 = (c * nt * nt).sum(-1)
    ginf = (c * nt * nt / lam**2).sum(-1)
    missed = np.isnan(alpha) & (g0 > 0) & (ginf < 0)
    if missed.any():
        alpha[missed] = _bisect_alpha(lam[missed], nt[missed])
    return alpha


def _bisect_alpha(lam, nt, iters: int = 200):
    # alpha = u / (1 - u) maps (0, 1) onto (0, inf)
    lo = np.zeros(len(lam))
    hi = np.ones(len(lam))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        a = mid / (1.0 - mid)
        g, _ = alpha_residual(lam, nt, a)
        pos = g > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    mid = 0.5 * (lo + hi)
    return mid / (1.0 - mid)


def solve_alpha(pair: DiagonalizedPair, nu_h_tilde) -> float | None:
    """Positive root of the alpha equation, or ``None`` if there is none."""
    nt = np.asarray(nu_h_tilde, dtype=float)
    if not np.any(nt):
        raise ValueError("nu_h_tilde must be non-zero")
    if pair.is_degenerate():
        raise DegenerateC(f"generalized eigenvalue at 1: {pair.lam}")
    a = solve_alpha_batch(pair.lam[None], nt[None])[0]
    return None if np.isnan(a) else float(a)


def alpha_branch(pair: DiagonalizedPair, nu_h_tilde) -> float:
    """Real root of the alpha quartic closest to zero, of either sign.

    Near the sticking boundary this is the root that crosses ``alpha = 0``;
    it extends ``alpha`` smoothly into the sticking side.
    """
    nt = np.asarray(nu_h_tilde, dtype=float)
    roots = _poly_roots_batch(alpha_quartic(pair.lam[None], nt[None]))[0]
    roots = roots[np.isfinite(roots.real)]
    real = roots[np.abs(roots.imag) / (1.0 + np.abs(roots.real)) < ROOT_IMAG_TOL].real
    if real.size == 0:
        return float("nan")
    a = real[np.argmin(np.abs(real))]
    return float(_polish(pair.lam, nt, np.array(a)))


# ---------------------------------------------------------------------------
# mode selection

def select_mode_batch(lam: np.ndarray, nt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mode codes, alpha (``nan`` unless pivoting) and a degeneracy mask."""
    n = len(lam)
    c = lam - 1.0
    zero = ~np.any(nt != 0.0, axis=1)
    degenerate = np.any(np.abs(c) < C_EPS, axis=1)
    mode = np.full(n, STICK, dtype=int)
    alpha = np.full(n, np.nan)

    z = zero
    mode[z] = np.where(np.all(c[z] < 0, 1), STICK, np.where(np.all(c[z] > 0, 1), SLIP, PIVOT))

    act = ~zero & ~degenerate
    if act.any():
        a = solve_alpha_batch(lam[act], nt[act])
        q = (c[act] * nt[act] ** 2).sum(-1)
        m = np.where(~np.isnan(a), PIVOT, np.where(q <= 0.0, STICK, SLIP))
        mode[act] = m
        alpha[act] = a
    # degenerate C: relative velocity zero is the conservative prediction
    mode[~zero & degenerate] = STICK
    return mode, alpha, degenerate & ~zero


def select_mode(pair: DiagonalizedPair, nu_h_tilde) -> tuple[Mode, float | None]:
    nt = np.asarray(nu_h_tilde, dtype=float)
    if np.any(nt) and pair.is_degenerate():
        raise DegenerateC(f"generalized eigenvalue at 1: {pair.lam}")
    mode, alpha, _ = select_mode_batch(pair.lam[None], nt[None])
    a = alpha[0]
    return Mode.from_code(mode[0]), (None if np.isnan(a) else float(a))


# ---------------------------------------------------------------------------
# full solution

def _pivot_from(nu: np.ndarray) -> np.ndarray:
    w = nu[..., 2]
    far = np.abs(w) < PIVOT_INF_EPS * (1.0 + np.abs(nu[..., :2]).sum(-1))
    ws = np.where(far, 1.0, w)
    p = np.stack([-nu[..., 1] / ws, nu[..., 0] / ws], axis=-1)
    p[far] = np.nan
    return p


def solve_batch(A_hat, B, G, nu_h, modes=None) -> dict[str, np.ndarray]:
    """Vectorized solve. ``modes`` (optional) forces the mode per row.

    A forced pivoting row with no positive root falls back to the selected
    mode, so the returned ``mode`` array is authoritative.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    n = len(nu_h)
    Phi, lam = diagonalize_batch(A_hat, B)
    nt = np.einsum("nji,nj->ni", Phi, nu_h)
    mode, alpha, degenerate = select_mode_batch(lam, nt)
    if modes is not None:
        forced = np.asarray(modes, dtype=int)
        keep_piv = forced == PIVOT
        ok = ~keep_piv | ~np.isnan(alpha)
        # a forced pivoting row without a root keeps its selected mode
        mode = np.where(ok, forced, mode)
        alpha = np.where(mode == PIVOT, alpha, np.nan)

    piv = mode == PIVOT
    stick = mode == STICK
    slip = mode == SLIP
    zero = ~np.any(nu_h != 0.0, axis=1)

    a = np.where(piv, alpha, 0.0)
    y = nt / (1.0 + a[:, None] * lam)  # object twist in the eigenbasis, up to A_hat Phi
    k1 = np.linalg.norm(y, axis=1)
    w = np.zeros((n, 3))
    k2 = np.zeros(n)
    ok = ~zero & (piv | stick)
    w[ok] = -y[ok] / k1[ok, None]
    k2[piv] = a[piv] * k1[piv]
    if slip.any():
        s = slip & ~zero
        k2s = np.sqrt((nt[s] ** 2 / lam[s]).sum(-1))
        w[s] = -(nt[s] / lam[s]) / k2s[:, None]
        k2[s] = k2s
        k1[slip] = 0.0
    k1[zero] = 0.0
    k2[zero] = 0.0
    w[zero] = 0.0

    APhi = A_hat @ Phi  # equals Phi^{-T}
    hnu_o = np.einsum("nij,nj->ni", APhi, y)
    hnu_o[slip | zero] = 0.0
    nu_rel = nu_h - hnu_o
    nu_rel[stick] = 0.0
    G_inv = np.linalg.inv(G)
    nu_o = np.einsum("nij,nj->ni", G_inv, hnu_o)
    w_h = np.einsum("nij,nj->ni", Phi, w)
    w_o = np.einsum("nji,nj->ni", G, w_h)

    # sticking: pivot is the alpha -> 0 limit of nu_rel, i.e. B A_hat^{-1} nu_h
    nu_piv = nu_rel.copy()
    nu_piv[stick] = np.einsum("nij,nj->ni", APhi, lam * nt)[stick]
    pivot = _pivot_from(nu_piv)
    pivot[zero] = np.nan
    return dict(mode=mode, alpha=np.where(piv, alpha, np.nan), k1=k1, k2=k2, nu_o=nu_o,
                nu_rel=nu_rel, w_h=w_h, w_o=w_o, pivot=pivot, degenerate=degenerate,
                lam=lam, Phi=Phi, nu_h_tilde=nt)


def _residual_single(lam, t, a):
    g = dg = size = 0.0
    for li, ti in zip(lam, t):
        d = 1.0 + a * li
        g += ti / (d * d)
        dg -= 2.0 * ti * li / (d * d * d)
        size += abs(ti) / (d * d)
    return g, dg, size


def _positive_root_single(lam, nt) -> float:
    """Scalar twin of :func:`solve_alpha_batch` on plain floats."""
    lam = [float(v) for v in lam]
    t = [(li - 1.0) * float(v) * float(v) for li, v in zip(lam, nt)]
    coef = [0.0] * 5
    for i, (j, k) in enumerate(((1, 2), (0, 2), (0, 1))):
        sj, pj = lam[j] + lam[k], lam[j] * lam[k]
        q = (1.0, 2.0 * sj, sj * sj + 2.0 * pj, 2.0 * sj * pj, pj * pj)
        for n in range(5):
            coef[n] += t[i] * q[n]
    scale = max(abs(v) for v in coef)
    if scale == 0.0:
        return float("nan")
    c = [v / scale for v in coef]
    d = max((n for n in range(5) if abs(c[n]) > 1e-13), default=0)
    best = float("nan")
    if d >= 1:
        comp = np.zeros((d, d))
        comp[0, :] = [-c[n] / c[d] for n in range(d - 1, -1, -1)]
        for n in range(1, d):
            comp[n, n - 1] = 1.0
        for z in np.linalg.eigvals(comp).tolist():
            z = complex(z)
            if z.real <= 0 or abs(z.imag) / (1.0 + abs(z.real)) >= ROOT_IMAG_TOL:
                continue
            a = z.real
            for _ in range(4):
                g, dg, _ = _residual_single(lam, t, a)
                if dg == 0.0:
                    break
                a -= g / dg
            g, _, size = _residual_single(lam, t, a)
            if a > ALPHA_EPS and abs(g) <= 1e-8 * size and not a >= best:
                best = a
    g_inf = sum(ti / (li * li) for li, ti in zip(lam, t))
    if best != best and sum(t) > 0 and g_inf < 0:
        # bracketed on alpha = u / (1 - u), u in [0, 1]
        def g(u):
            if u >= 1.0:
                return g_inf
            return _residual_single(lam, t, u / (1.0 - u))[0] * (1.0 - u) ** 2
        u = brentq(g, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        best = u / (1.0 - u)
    return best


def solve(A_hat, B, G, nu_h, strict: bool = False, mode: Mode | None = None) -> ModeSolution:
    """Mode, twists, wrenches and pivot point for hand twist ``nu_h``.

    ``G`` maps object twists to the hand frame. With ``strict`` a degenerate
    eigenvalue raises :class:`DegenerateC` instead of being reported as
    sticking with ``degenerate=True``. ``mode`` forces the contact mode; a
    forced pivoting mode without a positive root falls back to selection.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    nu_h = np.asarray(nu_h, dtype=float)
    Phi, lam = diagonalize_batch(A_hat, B)
    nt = Phi.T @ nu_h
    c = lam - 1.0
    degenerate = bool(np.any(np.abs(c) < C_EPS))
    zero = not np.any(nu_h)
    if zero:
        sel = STICK if np.all(c < 0) else SLIP if np.all(c > 0) else PIVOT
        z = np.zeros(3)
        return ModeSolution(Mode.from_code(sel), None, 0.0, 0.0, z, z.copy(), z.copy(),
                            z.copy(), None, False)
    if degenerate:
        if strict:
            raise DegenerateC(f"generalized eigenvalue at 1: {lam}")
        sel, alpha = STICK, float("nan")
    else:
        alpha = float("nan")
        if mode is None or mode is Mode.PIVOTING:
            alpha = _positive_root_single(lam, nt)
        if mode is not None and mode is not Mode.PIVOTING:
            sel = mode.code
        elif alpha == alpha:
            sel = PIVOT
        else:
            sel = STICK if (c * nt * nt).sum() <= 0.0 else SLIP

    APhi = A_hat @ Phi
    if sel == SLIP:
        k2 = float(np.sqrt((nt * nt / lam).sum()))
        w = -(nt / lam) / k2
        k1 = 0.0
        nu_o = np.zeros(3)
        nu_rel = nu_h.copy()
        nu_piv = nu_rel
        alpha_out = None
    else:
        a = alpha if sel == PIVOT else 0.0
        y = nt / (1.0 + a * lam)
        k1 = float(np.sqrt(y @ y))
        w = -y / k1
        k2 = a * k1
        hnu_o = APhi @ y
        nu_o = np.linalg.solve(G, hnu_o)
        if sel == PIVOT:
            nu_rel = nu_h - hnu_o
            nu_piv = nu_rel
            alpha_out = a
        else:
            nu_rel = np.zeros(3)
            nu_piv = APhi @ (lam * nt)
            alpha_out = None
    w_h = Phi @ w
    w_o = G.T @ w_h
    vx, vy, om = nu_piv.tolist()
    if abs(om) < PIVOT_INF_EPS * (1.0 + abs(vx) + abs(vy)):
        pivot = None
    else:
        pivot = np.array([-vy / om, vx / om])
    return ModeSolution(
        mode=Mode.from_code(sel),
        alpha=alpha_out,
        k1=k1,
        k2=float(k2),
        nu_o=nu_o,
        nu_rel=nu_rel,
        w_h=w_h,
        w_o=w_o,
        pivot=pivot,
        degenerate=degenerate,
    )


def _to_solution(r, i: int, strict: bool = False) -> ModeSolution:
    if strict and r["degenerate"][i]:
        raise DegenerateC(f"generalized eigenvalue at 1: {r['lam'][i]}")
    a = r["alpha"][i]
    p = r["pivot"][i]
    return ModeSolution(
        mode=Mode.from_code(r["mode"][i]),
        alpha=None if np.isnan(a) else float(a),
        k1=float(r["k1"][i]),
        k2=float(r["k2"][i]),
        nu_o=r["nu_o"][i],
        nu_rel=r["nu_rel"][i],
        w_h=r["w_h"][i],
        w_o=r["w_o"][i],
        pivot=None if np.isnan(p[0]) else p,
        degenerate=bool(r["degenerate"][i]),
    )
