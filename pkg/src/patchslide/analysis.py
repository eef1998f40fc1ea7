"""Geometric analysis built on the exact solver.

Motion-cone sections, the placement loci that keep a sticking boundary,
the conic of pivot points, sticking margins, stability of the sticking
boundary, maximum-rotation maps, and parameter identification from
recorded trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import se2
from .errors import DegenerateC, InsufficientPoints, NoLocus, NotOnBoundary, PatchSlideError
from .friction_oracle import sphere_directions
from .limit_surface import ObjectModel, PatchModel
from .scene import ContactScene, patch_inside
from .solver import (
    PIVOT,
    SLIP,
    STICK,
    DiagonalizedPair,
    alpha_branch,
    diagonalize_batch,
    select_mode_batch,
    solve_batch,
)


def boundary_forms(pair: DiagonalizedPair) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic forms on hand twists whose zero sets bound the modes.

    ``nu^T M0 nu`` is positive outside the sticking cone and
    ``nu^T Minf nu`` positive inside the slipping cone.
    """
    Phi, lam = pair.Phi, pair.lam
    c = lam - 1.0
    M0 = (Phi * c) @ Phi.T
    Minf = (Phi * (c / lam**2)) @ Phi.T
    return M0, Minf


# ---------------------------------------------------------------------------
# motion cones

@dataclass(frozen=True)
class MotionConeSection:
    """Modes of hand twists ``[v cos(phi), v sin(phi), omega_h]``.

    ``labels[i, j]`` is the mode code for ``angles[i]`` and ``speeds[j]``.
    Boundary points are linear velocities on the sticking and slipping cone
    boundaries; for ``omega_h = 0`` they are unit vectors along the
    boundary rays.
    """

    omega_h: float
    angles: np.ndarray
    speeds: np.ndarray
    labels: np.ndarray
    stick_boundary: np.ndarray
    slip_boundary: np.ndarray


def _ray_roots(M, u, omega):
    """Positive speeds ``s`` with ``[s u, omega]^T M [s u, omega] = 0``."""
    a = u @ M[:2, :2] @ u
    b = omega * (u @ M[:2, 2])
    c = omega * omega * M[2, 2]
    if abs(a) < 1e-300:
        return [-c / (2.0 * b)] if b != 0 and -c / (2.0 * b) > 0 else []
    disc = b * b - a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # stable form of the two roots
    q = -(b + math.copysign(sq, b))
    roots = [q / a] + ([c / q] if q != 0 else [])
    return sorted(r for r in roots if r > 0)


def _null_directions(M2) -> list[np.ndarray]:
    """Unit vectors ``u`` with ``u^T M2 u = 0`` for a symmetric 2x2 ``M2``."""
    lam, V = np.linalg.eigh(M2)
    if lam[0] > 0 or lam[1] < 0:
        return []
    # u = cos(t) v0 + sin(t) v1 with lam0 cos^2 + lam1 sin^2 = 0
    t = math.atan(math.sqrt(-lam[0] / lam[1])) if lam[1] > 0 else math.pi / 2
    out = []
    for sgn in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            out.append(sgn * (math.cos(t) * V[:, 0] + s2 * math.sin(t) * V[:, 1]))
    return out


def motion_cone_section(scene: ContactScene, omega_h: float, n_dirs: int = 360,
                        speeds=None) -> MotionConeSection:
    """Section of the three motion cones at hand angular velocity ``omega_h``."""
    if n_dirs < 90:
        raise ValueError("n_dirs must be at least 90")
    pair = scene.pair()
    M0, Minf = boundary_forms(pair)
    angles = 2.0 * math.pi * np.arange(n_dirs) / n_dirs
    U = np.column_stack([np.cos(angles), np.sin(angles)])
    if speeds is None:
        speeds = np.array([1.0]) if omega_h == 0 else _default_speeds(M0, Minf, U, omega_h)
    speeds = np.asarray(speeds, dtype=float)

    nu = np.empty((n_dirs, len(speeds), 3))
    nu[..., :2] = U[:, None, :] * speeds[None, :, None]
    nu[..., 2] = omega_h
    flat = nu.reshape(-1, 3)
    nt = flat @ pair.Phi
    mode, _, _ = select_mode_batch(np.broadcast_to(pair.lam, nt.shape).copy(), nt)
    labels = mode.reshape(n_dirs, len(speeds))

    if omega_h == 0:
        stick_b = np.array(_null_directions(M0[:2, :2])).reshape(-1, 2)
        slip_b = np.array(_null_directions(Minf[:2, :2])).reshape(-1, 2)
    else:
        stick_b = np.array([s * u for u in U for s in _ray_roots(M0, u, omega_h)]).reshape(-1, 2)
        slip_b = np.array([s * u for u in U for s in _ray_roots(Minf, u, omega_h)]).reshape(-1, 2)
    return MotionConeSection(omega_h, angles, speeds, labels, stick_b, slip_b)


def _default_speeds(M0, Minf, U, omega):
    roots = [s for M in (M0, Minf) for u in U for s in _ray_roots(M, u, omega)]
    top = 2.0 * max(roots) if roots else 1.0
    return np.linspace(top / 64, top, 64)


def mode_grid(scene: ContactScene, omega_h: float, v_max: float, n: int):
    """Mode codes on an ``n x n`` grid of linear velocities in ``[-v_max, v_max]^2``."""
    pair = scene.pair()
    v = np.linspace(-v_max, v_max, n)
    VX, VY = np.meshgrid(v, v, indexing="xy")
    nu = np.column_stack([VX.ravel(), VY.ravel(), np.full(VX.size, float(omega_h))])
    nt = nu @ pair.Phi
    mode, _, _ = select_mode_batch(np.broadcast_to(pair.lam, nt.shape).copy(), nt)
    return v, mode.reshape(n, n)


# ---------------------------------------------------------------------------
# loci of hand placements

@dataclass(frozen=True)
class Line:
    point: np.ndarray
    direction: np.ndarray
    residual: float
    """RMS perpendicular distance of the fitted roots."""


def sticking_boundary_value(scene: ContactScene, nu_h, r) -> np.ndarray:
    """``nu~^T C nu~`` for the patch at placements ``r`` (``(k, 2)``).

    The object limit surface is held at ``scene.A()``; only the placement
    moves.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    q = np.column_stack([r, np.full(len(r), scene.q_rel[2])])
    G = se2.adjoint_batch(q)
    A_hat = G @ scene.A() @ np.swapaxes(G, 1, 2)
    y = np.linalg.solve(A_hat, np.broadcast_to(np.asarray(nu_h, dtype=float), (len(r), 3))[..., None])[..., 0]
    B = scene.B()
    nu = np.asarray(nu_h, dtype=float)
    return np.einsum("ni,ij,nj->n", y, B, y) - y @ nu


def locus_direction(scene: ContactScene, v_h) -> np.ndarray:
    """Common direction of the placement loci for hand velocity ``v_h``.

    For ``omega_h = 0`` the sticking condition depends on the placement only
    through ``y z1 - x z2`` with ``z = A^-1 [R(theta_r) v_h, 0]``.
    """
    v = se2.rot(scene.q_rel[2])[:2, :2] @ np.asarray(v_h, dtype=float)
    z = np.linalg.solve(scene.A(), np.array([v[0], v[1], 0.0]))
    d = z[:2]
    return d / np.linalg.norm(d)


def _bisect_roots(f, a, b, fa, fb, iters=80):
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def _fit_line(P):
    c = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c, full_matrices=False)
    d = Vt[0]
    res = float(s[-1] / math.sqrt(len(P))) if len(P) > 1 else 0.0
    return Line(c, d, res)


def _split_parallel(P):
    """Split points into two clusters of parallel lines (best direction search)."""
    def cost(psi):
        nrm = np.array([-math.sin(psi), math.cos(psi)])
        t = np.sort(P @ nrm)
        csum = np.cumsum(t)
        csq = np.cumsum(t * t)
        n = len(t)
        best = (math.inf, 0)
        for k in range(1, n):
            left = csq[k - 1] - csum[k - 1] ** 2 / k
            right = (csq[-1] - csq[k - 1]) - (csum[-1] - csum[k - 1]) ** 2 / (n - k)
            if left + right < best[0]:
                best = (left + right, k)
        return best

    grid = np.linspace(0, math.pi, 721)[:-1]
    costs = [cost(p)[0] for p in grid]
    psi = grid[int(np.argmin(costs))]
    h = grid[1] - grid[0]
    res = minimize_scalar(lambda p: cost(p)[0], bounds=(psi - h, psi + h), method="bounded",
                          options=dict(xatol=1e-12))
    psi = float(res.x)
    nrm = np.array([-math.sin(psi), math.cos(psi)])
    t = P @ nrm
    order = np.argsort(t)
    k = cost(psi)[1]
    return P[order[:k]], P[order[k:]]


def hand_locus_lines(scene: ContactScene, v_h, search_box, n_scan: int = 41,
                     n_samples: int = 400) -> list[Line]:
    """Patch placements whose hand velocity ``[v_h, 0]`` lies on the sticking boundary.

    ``search_box = (xmin, xmax, ymin, ymax)`` in the object frame. Roots of the
    sticking condition are bracketed along scanlines in both axis directions,
    refined by bisection and fitted by at most two lines.
    """
    nu_h = np.array([float(v_h[0]), float(v_h[1]), 0.0])
    xmin, xmax, ymin, ymax = map(float, search_box)
    pts = []
    for axis in (0, 1):
        across = np.linspace(ymin, ymax, n_scan) if axis == 0 else np.linspace(xmin, xmax, n_scan)
        along = np.linspace(xmin, xmax, n_samples) if axis == 0 else np.linspace(ymin, ymax, n_samples)
        for c in across:
            def place(s, c=c):
                s = np.atleast_1d(s)
                return np.column_stack([s, np.full(len(s), c)]) if axis == 0 else \
                    np.column_stack([np.full(len(s), c), s])
            f = lambda s: sticking_boundary_value(scene, nu_h, place(s))
            vals = f(along)
            idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
            if idx.size == 0:
                continue
            roots = _bisect_roots(f, along[idx], along[idx + 1], vals[idx], vals[idx + 1])
            pts.append(place(roots))
    if not pts:
        raise NoLocus("the sticking boundary does not cross the search box")
    P = np.unique(np.round(np.vstack(pts), 15), axis=0)
    if len(P) < 2:
        raise NoLocus("too few boundary crossings to fit a line")
    size = max(xmax - xmin, ymax - ymin)
    one = _fit_line(P)
    if one.residual < 1e-6 * size or len(P) < 4:
        return [one]
    a, b = _split_parallel(P)
    return [_fit_line(a), _fit_line(b)]


# ---------------------------------------------------------------------------
# pivot locus

@dataclass(frozen=True)
class PivotLocus:
    coeffs: np.ndarray
    """``(a, b, c, d, e, f)`` of ``a x^2 + b x y + c y^2 + d x + e y + f = 0``, unit norm."""
    kind: str
    points: np.ndarray
    residual: float
    """RMS algebraic residual of the normalized fit."""

    def value(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        x, y = p[:, 0], p[:, 1]
        a, b, c, d, e, f = self.coeffs
        return a * x * x + b * x * y + c * y * y + d * x + e * y + f

    def center(self) -> np.ndarray | None:
        a, b, c, d, e, _ = self.coeffs
        M = np.array([[2 * a, b], [b, 2 * c]])
        try:
            return np.linalg.solve(M, [-d, -e])
        except np.linalg.LinAlgError:
            return None


def classify_conic(coeffs, tol: float = 1e-9) -> str:
    """``ellipse``, ``parabola``, ``hyperbola`` or ``degenerate`` (line pairs, points)."""
    a, b, c, d, e, f = coeffs
    M = np.array([[a, b / 2, d / 2], [b / 2, c, e / 2], [d / 2, e / 2, f]])
    if abs(np.linalg.det(M)) <= tol * max(np.abs(np.linalg.eigvalsh(M))) ** 3:
        return "degenerate"
    disc = b * b - 4.0 * a * c
    scale = max(b * b, abs(4.0 * a * c), 1e-300)
    if abs(disc) <= tol * scale:
        return "parabola"
    return "ellipse" if disc < 0 else "hyperbola"


def fit_conic(points) -> tuple[np.ndarray, float]:
    """Algebraic least-squares conic through ``points`` with unit-norm coefficients.

    Coordinates are centred and scaled before the fit and the coefficients
    mapped back, which keeps the design matrix well conditioned.
    """
    P = np.asarray(points, dtype=float)
    if len(P) < 5:
        raise InsufficientPoints(f"a conic needs at least 5 points, got {len(P)}")
    m = P.mean(axis=0)
    s = math.sqrt(2.0) / max(np.sqrt(((P - m) ** 2).sum(1)).mean(), 1e-300)
    x, y = ((P - m) * s).T
    D = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, sv, Vt = np.linalg.svd(D, full_matrices=False)
    a, b, c, d, e, f = Vt[-1]
    res = float(sv[-1] / math.sqrt(len(P)))
    # undo x' = s (x - mx), y' = s (y - my)
    mx, my = m
    A2 = a * s * s
    B2 = b * s * s
    C2 = c * s * s
    D2 = -2 * A2 * mx - B2 * my + d * s
    E2 = -2 * C2 * my - B2 * mx + e * s
    F2 = A2 * mx * mx + B2 * mx * my + C2 * my * my - d * s * mx - e * s * my + f
    coeffs = np.array([A2, B2, C2, D2, E2, F2])
    return coeffs / np.linalg.norm(coeffs), res


def pivot_conic(pair: DiagonalizedPair, B) -> np.ndarray:
    """Closed-form pivot-locus conic of the pair (unit-norm coefficients).

    Pivoting relative twists are ``B Phi w`` with ``w^T C w = 0``; a pivot ``p``
    corresponds to the relative twist direction ``n = [p_y, -p_x, 1]``.
    """
    K = np.linalg.inv(np.asarray(B, dtype=float) @ pair.Phi)
    Q = K.T @ np.diag(pair.c) @ K
    T = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    N = T.T @ Q @ T  # form in [x, y, 1]
    coeffs = np.array([N[0, 0], 2 * N[0, 1], N[1, 1], 2 * N[0, 2], 2 * N[1, 2], N[2, 2]])
    return coeffs / np.linalg.norm(coeffs)


def pivot_locus(scene: ContactScene, n_dirs: int = 2000, omega_scale: float | None = None) -> PivotLocus:
    """Fit the conic traced by pivot points over all hand twist directions."""
    A_hat, B, G = scene.A_hat(), scene.B(), scene.G()
    L = omega_scale if omega_scale is not None else max(scene.patch_radius(), 1e-3)
    dirs = sphere_directions(n_dirs) * np.array([1.0, 1.0, 1.0 / L])
    n = len(dirs)
    r = solve_batch(np.repeat(A_hat[None], n, 0), np.repeat(B[None], n, 0),
                    np.repeat(G[None], n, 0), dirs)
    ok = (r["mode"] == PIVOT) & np.isfinite(r["pivot"][:, 0])
    pts = r["pivot"][ok]
    coeffs, res = fit_conic(pts)
    return PivotLocus(coeffs, classify_conic(coeffs), pts, res)


# ---------------------------------------------------------------------------
# margins and stability

@dataclass(frozen=True)
class MarginReport:
    stick_twist: np.ndarray
    slip_twist: np.ndarray
    w_dist: np.ndarray
    margin: float
    tie: bool = False


def max_margin(pair: DiagonalizedPair, A_hat, G=None) -> MarginReport:
    """Hand twists deepest inside the sticking and slipping cones.

    Twists are scaled so that ``nu~`` has unit length. ``w_dist`` is the
    smallest wrench (in the object frame when ``G`` is given, else in the hand
    frame) that carries the deepest sticking wrench onto the mode boundary;
    it is only meaningful when ``C`` has both signs. ``tie`` marks equal
    extreme eigenvalues (``B`` proportional to ``A_hat``), where every
    direction has the same margin.
    """
    if pair.is_degenerate():
        raise DegenerateC(f"generalized eigenvalue at 1: {pair.lam}")
    lam = pair.lam
    i_max, i_min = int(np.argmax(lam)), int(np.argmin(lam))
    c_max, c_min = lam[i_max] - 1.0, lam[i_min] - 1.0
    A_hat = np.asarray(A_hat, dtype=float)
    phi_min, phi_max = pair.Phi[:, i_min], pair.Phi[:, i_max]
    stick = A_hat @ phi_min
    slip = A_hat @ phi_max
    margin = math.sqrt(abs(c_min) / abs(c_max))
    w = margin * phi_max
    if G is not None:
        w = np.asarray(G, dtype=float).T @ w
    tie = bool(abs(lam[i_max] - lam[i_min]) < 1e-9 * max(1.0, abs(lam[i_max])))
    return MarginReport(stick, slip, w, margin, tie)


def relative_rate(scene: ContactScene, nu_h) -> np.ndarray:
    """Direction of ``d q_rel / dt`` per unit ``alpha`` at the sticking boundary.

    Near the boundary the relative twist is ``alpha B A_hat^-1 nu_h``; the
    relative pose moves with that twist rotated into the object frame.
    """
    A_hat, B = scene.A_hat(), scene.B()
    nu_rel = B @ np.linalg.solve(A_hat, np.asarray(nu_h, dtype=float))
    return se2.rot(scene.q_rel[2]) @ nu_rel


def _alpha_at(scene: ContactScene, nu_h, q_rel) -> float:
    s = scene.with_(q_rel=q_rel)
    pair = s.pair()
    return alpha_branch(pair, pair.Phi.T @ np.asarray(nu_h, dtype=float))


def alpha_gradient(scene: ContactScene, nu_h, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the boundary ``alpha`` branch over ``q_rel``."""
    q = scene.q_rel
    g = np.empty(3)
    for i in range(3):
        dq = np.zeros(3)
        dq[i] = h
        g[i] = (_alpha_at(scene, nu_h, q + dq) - _alpha_at(scene, nu_h, q - dq)) / (2.0 * h)
    return g


def fixed_point_stability(scene: ContactScene, nu_h, h: float = 1e-5, tol: float = 1e-6) -> int:
    """``-1`` if the sticking-boundary fixed point is stable, ``+1`` if not, 0 if flat."""
    nu_h = np.asarray(nu_h, dtype=float)
    a0 = _alpha_at(scene, nu_h, scene.q_rel)
    if not abs(a0) <= tol:
        raise NotOnBoundary(f"alpha = {a0:.3g} at the nominal placement")
    val = float(alpha_gradient(scene, nu_h, h) @ relative_rate(scene, nu_h))
    return int(np.sign(val))


def stability_probe(scene: ContactScene, nu_h, eps: float = 1e-4, steps: int = 40,
                    dt: float | None = None) -> int:
    """Stability by simulation: nudge the placement into pivoting and watch ``alpha``.

    ``eps`` is the nudge in metres; orientation nudges are ``eps`` over the
    patch's distance from the object origin. Returns ``-1`` when ``alpha``
    decays (the motion returns to the sticking boundary), ``+1`` when it
    grows and 0 when no nudge reaches pivoting.
    """
    nu_h = np.asarray(nu_h, dtype=float)
    q0 = scene.q_rel
    arm = max(float(np.linalg.norm(q0[:2])), scene.patch_radius())
    step_size = np.array([eps, eps, eps / arm])
    for i in range(3):
        for sgn in (1.0, -1.0):
            dq = np.zeros(3)
            dq[i] = sgn * step_size[i]
            s = scene.with_(q_rel=q0 + dq)
            sol = s.solve(nu_h)
            if sol.mode.code != PIVOT:
                continue
            return _probe_from(s, nu_h, sol.alpha, eps, steps, dt)
    return 0


def _probe_from(scene: ContactScene, nu_h, alpha0, eps, steps, dt):
    # integrate the relative pose with the exact pivoting solution; the
    # default horizon moves the relative pose about one nudge length
    speed = np.linalg.norm(relative_rate(scene, nu_h))
    if dt is None:
        dt = eps / max(alpha0 * speed, 1e-300) / steps
    q = scene.q_rel.copy()
    alpha = alpha0
    for _ in range(steps):
        s = scene.with_(q_rel=q)
        sol = s.solve(nu_h)
        if sol.mode.code != PIVOT:
            return -1 if sol.mode.code == STICK else 1
        q = q + dt * (se2.rot(q[2]) @ sol.nu_rel)
        alpha = sol.alpha
    return -1 if alpha < alpha0 else 1


# ---------------------------------------------------------------------------
# rotation estimates

ROTATE, STUCK, INFEASIBLE, SLIPPING = 0, 1, 2, 3


@dataclass(frozen=True)
class MaxRotField:
    xs: np.ndarray
    ys: np.ndarray
    estimate: np.ndarray
    """Expected rotation magnitude (rad), shape ``(len(ys), len(xs))``; ``nan`` where undefined."""
    klass: np.ndarray
    """ROTATE, STUCK, INFEASIBLE or SLIPPING per cell."""


def rotation_to_boundary(scene: ContactScene, nu_h, max_angle: float = math.pi) -> float:
    """Object rotation until the hand twist reaches the sticking cone.

    The patch position is held fixed; the object turns in the direction of
    the initial pivoting solution, which turns the relative orientation the
    opposite way, until the mode stops being pivoting.
    """
    nu_h = np.asarray(nu_h, dtype=float)
    sol = scene.solve(nu_h)
    if sol.mode.code != PIVOT:
        return 0.0
    sgn = math.copysign(1.0, sol.nu_o[2] - nu_h[2])
    x, y, th = scene.q_rel
    A, B = scene.A(), scene.B()

    def pivoting(delta):
        delta = np.atleast_1d(delta)
        q = np.column_stack([np.full(len(delta), x), np.full(len(delta), y), th - sgn * delta])
        G = se2.adjoint_batch(q)
        Phi, lam = diagonalize_batch(G @ A @ np.swapaxes(G, 1, 2), np.broadcast_to(B, G.shape))
        nt = np.einsum("nij,i->nj", Phi, nu_h)
        c = lam - 1.0
        g0 = (c * nt * nt).sum(1)
        ginf = (c / lam**2 * nt * nt).sum(1)
        return (g0 > 0) & (ginf < 0)

    grid = np.linspace(0.0, max_angle, 721)
    piv = pivoting(grid)
    stop = np.nonzero(~piv[1:])[0]
    if stop.size == 0:
        return max_angle
    lo, hi = grid[stop[0]], grid[stop[0] + 1]
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if pivoting(mid)[0]:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_rotation_estimate(scene: ContactScene, xs, ys, v_h=(0.01, 0.0)) -> MaxRotField:
    """Estimated object rotation for each initial patch placement ``(x, y)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nu_h = np.array([float(v_h[0]), float(v_h[1]), 0.0])
    est = np.full((len(ys), len(xs)), np.nan)
    klass = np.full((len(ys), len(xs)), INFEASIBLE, dtype=int)
    radius = scene.patch_radius()
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            if not patch_inside(scene.obj, (x, y), radius):
                continue
            s = scene.with_(q_rel=[x, y, scene.q_rel[2]])
            mode = s.solve(nu_h).mode.code
            if mode == STICK:
                klass[i, j], est[i, j] = STUCK, 0.0
            elif mode == SLIP:
                klass[i, j] = SLIPPING
            else:
                klass[i, j] = ROTATE
                est[i, j] = rotation_to_boundary(s, nu_h)
    return MaxRotField(xs, ys, est, klass)


def simulated_rotation(scene: ContactScene, xs, ys, v_h=(0.01, 0.0), duration: float = 100.0,
                       dt: float = 0.05) -> MaxRotField:
    """Final object rotation from simulation for each initial placement.

    Runs stop at the first sticking step (a fixed point for straight hand
    motion). Placements whose run leaves the footprint are INFEASIBLE.
    """
    from .sim import Segment, SimConfig, run_batch

    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nu_h = np.array([float(v_h[0]), float(v_h[1]), 0.0])
    est = np.full((len(ys), len(xs)), np.nan)
    klass = np.full((len(ys), len(xs)), INFEASIBLE, dtype=int)
    radius = scene.patch_radius()
    cells, configs = [], []
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            if not patch_inside(scene.obj, (x, y), radius):
                continue
            s = scene.with_(q_rel=[x, y, scene.q_rel[2]])
            cells.append((i, j))
            configs.append(SimConfig(s, [Segment(duration, nu_h, scene.f_n)], dt=dt,
                                     record_stride=max(1, int(round(duration / dt)))))
    for (i, j), tr in zip(cells, run_batch(configs, stop_on_stick=True)):
        if tr.status == "patch_exit":
            continue
        rot = abs(float(tr.q_o[-1, 2] - tr.q_o[0, 2]))
        est[i, j] = rot
        if tr.mode[0] == STICK:
            klass[i, j] = STUCK
        elif tr.mode[0] == SLIP:
            klass[i, j] = SLIPPING
        else:
            klass[i, j] = ROTATE
    return MaxRotField(xs, ys, est, klass)


def rotation_field_error(estimate: MaxRotField, simulated: MaxRotField) -> tuple[float, int]:
    """Relative L2 difference over cells where both fields predict rotation."""
    both = (estimate.klass == ROTATE) & (simulated.klass == ROTATE)
    both &= np.isfinite(estimate.estimate) & np.isfinite(simulated.estimate)
    if not both.any():
        return math.nan, 0
    a, b = estimate.estimate[both], simulated.estimate[both]
    return float(np.linalg.norm(a - b) / np.linalg.norm(b)), int(both.sum())


# ---------------------------------------------------------------------------
# parameter identification

@dataclass(frozen=True)
class FitParams:
    """Identifiable scene parameters.

    The quasi-static motion is unchanged when both limit surfaces are scaled
    together, so the patch's force capacity (``mu_ho``) is held fixed and the
    rest is expressed relative to it.
    """

    mu_oe: float
    torque_scale: float
    """Multiplier on the patch's torque capacity."""
    cop_c: float
    cop_delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_oe, self.torque_scale, self.cop_c, self.cop_delta])


@dataclass(frozen=True)
class FitResult:
    params: FitParams
    rms: float
    initial_rms: float
    improved: bool
    n_eval: int


def apply_params(obj: ObjectModel, patch: PatchModel, p: FitParams) -> tuple[ObjectModel, PatchModel]:
    A_unit = obj.a_cop() * (obj.mu_oe / p.mu_oe) ** 2
    new_obj = replace(obj, mu_oe=p.mu_oe, cop_shift_c=p.cop_c, cop_shift_delta=p.cop_delta,
                      A_cop_unit=A_unit)
    return new_obj, _scaled_patch(patch, p.torque_scale)


def _scaled_patch(patch: PatchModel, scale: float) -> PatchModel:
    if patch.fixed_radius is not None and patch.B_unit is None:
        return replace(patch, fixed_radius=patch.fixed_radius * scale)
    if patch.B_unit is not None:
        S = np.array([1.0, 1.0, 1.0 / scale])
        return replace(patch, B_unit=patch.B_unit * S[:, None] * S[None, :])
    # Hertzian sphere: torque capacity grows with the contact radius ~ R^(1/3)
    return replace(patch, sphere_radius=patch.sphere_radius * scale**3)


def _replay(traj, obj: ObjectModel, patch: PatchModel, substeps: int) -> np.ndarray:
    """Object poses obtained by replaying the recorded hand motion and force."""
    from .sim import _Model, _rk4

    scene = ContactScene(obj, patch, se2.rel_pose(traj.q_h[0], traj.q_o[0]), traj.f_n[0])
    model = _Model(scene, False)
    q_h = traj.q_h[0].copy()
    q_o = traj.q_o[0].copy()
    out = [q_o.copy()]
    for k in range(len(traj.t) - 1):
        dt = (traj.t[k + 1] - traj.t[k]) / substeps
        nu_h = se2.twist_between(traj.q_h[k], traj.q_h[k + 1], traj.t[k + 1] - traj.t[k])
        f_n = traj.f_n[k]
        for _ in range(substeps):
            sol = model.solve(q_h, q_o, nu_h, f_n)
            q_h, q_o = _rk4(model, q_h, q_o, nu_h, f_n, dt, sol)
        # the hand is driven; re-anchor it on the record to avoid drift
        q_h = traj.q_h[k + 1].copy()
        out.append(q_o.copy())
    return np.array(out)


def pose_rms(traj, poses: np.ndarray, length: float) -> float:
    d = poses - traj.q_o
    return float(np.sqrt(np.mean(d[:, 0] ** 2 + d[:, 1] ** 2 + (length * d[:, 2]) ** 2)))


def fit_parameters(traj, obj: ObjectModel, patch: PatchModel, initial: FitParams | None = None,
                   substeps: int = 1, max_eval: int = 400, xatol: float = 1e-4,
                   fatol: float = 1e-9) -> FitResult:
    """Fit :class:`FitParams` so a replay of ``traj`` matches its object poses.

    The hand poses and normal forces of the recording drive the simulation;
    the error is the RMS object pose difference with rotation weighted by the
    object's half diagonal. Nelder-Mead searches in log-parameters.
    """
    if traj is None or len(traj.t) < 2:
        raise ValueError("trajectory needs at least two samples")
    if initial is None:
        initial = FitParams(obj.mu_oe, 1.0, obj.cop_shift_c, obj.cop_shift_delta)
    length = math.hypot(*obj.half_extents)
    x0 = np.log(np.maximum(initial.as_array(), 1e-6))
    count = [0]

    def params_of(x):
        v = np.exp(x)
        return FitParams(*v)

    def loss(x):
        count[0] += 1
        try:
            o, p = apply_params(obj, patch, params_of(x))
            return pose_rms(traj, _replay(traj, o, p, substeps), length)
        except (PatchSlideError, np.linalg.LinAlgError, ValueError, FloatingPointError):
            # an unphysical parameter set scores worse than any replay
            return 1e3

    f0 = loss(x0)
    res = minimize(loss, x0, method="Nelder-Mead",
                   options=dict(maxfev=max_eval, xatol=xatol, fatol=fatol,
                                initial_simplex=x0 + np.vstack([np.zeros(4), 0.1 * np.eye(4)])))
    best = params_of(res.x)
    rms = float(res.fun)
    improved = rms < f0
    if not improved:
        best, rms = initial, f0
    return FitResult(best, rms, f0, improved, count[0])
