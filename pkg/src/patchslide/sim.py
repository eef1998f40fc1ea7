"""Time integration of the hand-object system.

Both bodies are integrated in the world frame with fixed-step RK4. The
contact mode is selected at the start of every step and held for its four
stages; object and patch limit surfaces are rebuilt at every stage from the
current relative pose and normal force.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import se2
from .errors import ScenarioError
from .limit_surface import contact_radius, object_ls_batch, object_ls_matrix, patch_ls_matrix
from .scene import ContactScene, patch_inside
from .solver import STICK, Mode, ModeSolution, solve, solve_batch

DEFAULT_DT = 0.01
DEFAULT_STRIDE = 10
F_MIN = 0.05


@dataclass(frozen=True)
class Segment:
    """Constant hand twist (hand frame) for ``duration`` seconds.

    ``f_n`` is the normal force; ``None`` hands it to the controller.
    """

    duration: float
    nu_h: np.ndarray
    f_n: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "nu_h", np.asarray(self.nu_h, dtype=float).reshape(3))


@dataclass(frozen=True)
class ControllerConfig:
    """Normal force ``clamp(-K sat(theta_ref(t) - theta_o) + f_U, f_min, f_U)``."""

    K: float
    f_upper: float
    theta_ref: Callable[[float], float]
    sat_lo: float = 0.0
    sat_hi: float = math.pi / 4
    f_min: float = F_MIN

    def __post_init__(self):
        if not self.f_upper > 0:
            raise ValueError("f_upper must be positive")
        if not self.sat_lo < self.sat_hi:
            raise ValueError("sat_lo must be below sat_hi")
        if not 0 <= self.f_min <= self.f_upper:
            raise ValueError("need 0 <= f_min <= f_upper")

    def force(self, t: float, theta_meas: float) -> float:
        err = self.theta_ref(t) - theta_meas
        f = -self.K * min(max(err, self.sat_lo), self.sat_hi) + self.f_upper
        return min(max(f, self.f_min), self.f_upper)


@dataclass(frozen=True)
class SimConfig:
    """Scene (initial placement via ``scene.q_rel``), program and step settings.

    The object starts at ``q_o``; the hand at ``q_o`` composed with
    ``scene.q_rel``. ``scene.f_n`` is used by segments without their own
    force when no controller is attached.
    """

    scene: ContactScene
    program: Sequence[Segment]
    dt: float = DEFAULT_DT
    duration: float | None = None
    record_stride: int = DEFAULT_STRIDE
    q_o: np.ndarray = field(default_factory=lambda: np.zeros(3))
    on_patch_exit: str = "abort"
    f_min: float = F_MIN
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "program", tuple(self.program))
        object.__setattr__(self, "q_o", np.asarray(self.q_o, dtype=float).reshape(3))
        total = sum(s.duration for s in self.program)
        if self.duration is None:
            object.__setattr__(self, "duration", total)
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.duration < 0:
            raise ScenarioError("duration must be non-negative")
        if self.duration > total + 1e-9 * max(1.0, total):
            raise ScenarioError(f"program covers {total} s but duration is {self.duration} s")
        if self.record_stride < 1:
            raise ScenarioError("record_stride must be at least 1")
        if self.on_patch_exit not in ("abort", "continue"):
            raise ScenarioError("on_patch_exit must be 'abort' or 'continue'")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def segment_at(self, t: float) -> Segment:
        end = 0.0
        for seg in self.program:
            end += seg.duration
            if t < end - 1e-9 * self.dt:
                return seg
        return self.program[-1]


@dataclass
class SimState:
    t: float
    q_h: np.ndarray
    q_o: np.ndarray
    mode: Mode | None = None
    solution: ModeSolution | None = None
    events: list = field(default_factory=list)

    @property
    def q_rel(self) -> np.ndarray:
        return se2.rel_pose(self.q_h, self.q_o)


@dataclass
class Trajectory:
    t: np.ndarray
    q_o: np.ndarray
    q_h: np.ndarray
    mode: np.ndarray
    """Mode codes (see :class:`Mode`) of the step starting at each sample."""
    alpha: np.ndarray
    pivot: np.ndarray
    """Pivot in the hand frame; ``nan`` at infinity."""
    w_h: np.ndarray
    f_n: np.ndarray
    events: list
    status: str = "ok"

    def __len__(self) -> int:
        return len(self.t)

    def modes(self) -> list[Mode]:
        return [Mode.from_code(m) for m in self.mode]

    def pivot_world(self) -> np.ndarray:
        out = np.full_like(self.pivot, np.nan)
        for i, (p, q) in enumerate(zip(self.pivot, self.q_h)):
            if np.isfinite(p[0]):
                out[i] = q[:2] + se2.rot(q[2])[:2, :2] @ p
        return out


class _Model:
    """Per-stage evaluation with the scene's object and patch."""

    def __init__(self, scene: ContactScene, strict: bool):
        self.obj = scene.obj
        self.patch = scene.patch
        self.strict = strict

    def solve(self, q_h, q_o, nu_h, f_n, mode=None) -> ModeSolution:
        q_rel = se2.rel_pose(q_h, q_o)
        G = se2.adjoint(q_rel)
        A_hat = G @ object_ls_matrix(self.obj, q_rel[:2], f_n) @ G.T
        B = patch_ls_matrix(self.patch, f_n)
        return solve(A_hat, B, G, nu_h, strict=self.strict, mode=mode)

    def radius(self, f_n) -> float:
        return contact_radius(self.patch, f_n)


def _rates(q_h, q_o, nu_h, nu_o):
    ch, sh = math.cos(q_h[2]), math.sin(q_h[2])
    co, so = math.cos(q_o[2]), math.sin(q_o[2])
    dq_h = np.array([ch * nu_h[0] - sh * nu_h[1], sh * nu_h[0] + ch * nu_h[1], nu_h[2]])
    dq_o = np.array([co * nu_o[0] - so * nu_o[1], so * nu_o[0] + co * nu_o[1], nu_o[2]])
    return dq_h, dq_o


def _rk4(model: _Model, q_h, q_o, nu_h, f_n, dt, sol1: ModeSolution):
    mode = sol1.mode
    k1h, k1o = _rates(q_h, q_o, nu_h, sol1.nu_o)
    qh2, qo2 = q_h + 0.5 * dt * k1h, q_o + 0.5 * dt * k1o
    k2h, k2o = _rates(qh2, qo2, nu_h, model.solve(qh2, qo2, nu_h, f_n, mode).nu_o)
    qh3, qo3 = q_h + 0.5 * dt * k2h, q_o + 0.5 * dt * k2o
    k3h, k3o = _rates(qh3, qo3, nu_h, model.solve(qh3, qo3, nu_h, f_n, mode).nu_o)
    qh4, qo4 = q_h + dt * k3h, q_o + dt * k3o
    k4h, k4o = _rates(qh4, qo4, nu_h, model.solve(qh4, qo4, nu_h, f_n, mode).nu_o)
    q_h = q_h + dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
    q_o = q_o + dt / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
    return q_h, q_o


def step(state: SimState, nu_h, f_n: float, dt: float, scene: ContactScene,
         strict: bool = False) -> SimState:
    """Advance one RK4 step with the mode selected at ``state``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    model = _Model(scene, strict)
    nu_h = np.asarray(nu_h, dtype=float)
    sol = model.solve(state.q_h, state.q_o, nu_h, f_n)
    q_h, q_o = _rk4(model, state.q_h, state.q_o, nu_h, f_n, dt, sol)
    events = list(state.events)
    if state.mode is not None and sol.mode is not state.mode:
        events.append((state.t, "mode", f"{state.mode.value}->{sol.mode.value}"))
    new = SimState(state.t + dt, q_h, q_o, sol.mode, sol, events)
    if not patch_inside(scene.obj, new.q_rel[:2], model.radius(f_n)):
        new.events.append((new.t, "patch_exit", ""))
    return new


class _Recorder:
    def __init__(self):
        self.rows = []

    def add(self, t, q_o, q_h, sol: ModeSolution, f_n):
        p = sol.pivot if sol.pivot is not None else (math.nan, math.nan)
        self.rows.append((t, q_o, q_h, sol.mode.code,
                          math.nan if sol.alpha is None else sol.alpha, p, sol.w_h, f_n))

    def build(self, events, status) -> Trajectory:
        n = len(self.rows)
        if n == 0:
            z = np.zeros((0, 3))
            return Trajectory(np.zeros(0), z, z.copy(), np.zeros(0, dtype=int), np.zeros(0),
                              np.zeros((0, 2)), z.copy(), np.zeros(0), events, status)
        cols = list(zip(*self.rows))
        return Trajectory(
            t=np.array(cols[0]),
            q_o=np.array(cols[1]),
            q_h=np.array(cols[2]),
            mode=np.array(cols[3], dtype=int),
            alpha=np.array(cols[4]),
            pivot=np.array(cols[5], dtype=float),
            w_h=np.array(cols[6]),
            f_n=np.array(cols[7]),
            events=events,
            status=status,
        )


def _simulate(config: SimConfig, ctrl: ControllerConfig | None, stop_on_stick: bool) -> Trajectory:
    scene = config.scene
    model = _Model(scene, config.strict)
    q_o = config.q_o.copy()
    q_h = se2.compose(q_o, scene.q_rel)
    dt = config.dt
    n = config.n_steps
    rec = _Recorder()
    events: list = []
    status = "ok"
    prev_mode = None
    if n == 0:
        return rec.build(events, status)

    def force(t, seg, q_o):
        if seg.f_n is not None:
            return seg.f_n
        if ctrl is not None:
            return ctrl.force(t, q_o[2])
        return scene.f_n

    for k in range(n + 1):
        t = k * dt
        seg = config.segment_at(t)
        f_n = max(force(t, seg, q_o), config.f_min)
        sol = model.solve(q_h, q_o, seg.nu_h, f_n)
        last = k == n
        if prev_mode is not None and sol.mode is not prev_mode and not last:
            events.append((t, "mode", f"{prev_mode.value}->{sol.mode.value}"))
        prev_mode = sol.mode
        if k % config.record_stride == 0 or last:
            rec.add(t, q_o.copy(), q_h.copy(), sol, f_n)
        if last:
            break
        if stop_on_stick and sol.mode.code == STICK:
            if k % config.record_stride != 0:
                rec.add(t, q_o.copy(), q_h.copy(), sol, f_n)
            status = "stuck"
            break
        q_h, q_o = _rk4(model, q_h, q_o, seg.nu_h, f_n, dt, sol)
        r = se2.rel_pose(q_h, q_o)[:2]
        if not patch_inside(scene.obj, r, model.radius(f_n)):
            if status != "patch_exit":
                events.append(((k + 1) * dt, "patch_exit", ""))
            status = "patch_exit"
            if config.on_patch_exit == "abort":
                t1 = (k + 1) * dt
                seg1 = config.segment_at(t1)
                f1 = max(force(t1, seg1, q_o), config.f_min)
                rec.add(t1, q_o.copy(), q_h.copy(), model.solve(q_h, q_o, seg1.nu_h, f1), f1)
                break
    return rec.build(events, status)


def run(config: SimConfig, stop_on_stick: bool = False) -> Trajectory:
    """Simulate ``config``; deterministic for a fixed config.

    ``stop_on_stick`` ends the run at the first sticking step, which is a
    fixed point when the program is a single constant twist without rotation.
    """
    return _simulate(config, None, stop_on_stick)


def run_controlled(config: SimConfig, ctrl: ControllerConfig) -> Trajectory:
    """Simulate with the normal force of force-less segments set by ``ctrl``."""
    if all(s.f_n is not None for s in config.program):
        raise ScenarioError("no program segment is left to the controller")
    return _simulate(config, ctrl, False)


def _rates_batch(q, nu):
    c, s = np.cos(q[:, 2]), np.sin(q[:, 2])
    return np.column_stack([c * nu[:, 0] - s * nu[:, 1], s * nu[:, 0] + c * nu[:, 1], nu[:, 2]])


def run_batch(configs: Sequence[SimConfig], stop_on_stick: bool = False) -> list[Trajectory]:
    """:func:`run` for many configs at once, vectorized across them.

    All configs must share ``dt``, the number of steps and ``record_stride``;
    every segment needs its own normal force. Results match :func:`run`
    to rounding.
    """
    configs = list(configs)
    if not configs:
        return []
    c0 = configs[0]
    n_steps, dt, stride = c0.n_steps, c0.dt, c0.record_stride
    for c in configs:
        if c.n_steps != n_steps or c.dt != dt or c.record_stride != stride:
            raise ScenarioError("batched configs must share dt, step count and record_stride")
        if c.strict:
            raise ScenarioError("strict mode is not available in batch runs")
    N = len(configs)
    objs = [c.scene.obj for c in configs]
    A_cop = np.array([o.a_cop() for o in objs])
    weight = np.array([o.weight for o in objs])
    cc = np.array([o.cop_shift_c for o in objs])
    dd = np.array([o.cop_shift_delta for o in objs])

    def program(t):
        nu = np.empty((N, 3))
        fn = np.empty(N)
        for i, c in enumerate(configs):
            seg = c.segment_at(t)
            nu[i] = seg.nu_h
            fn[i] = max(seg.f_n if seg.f_n is not None else c.scene.f_n, c.f_min)
        return nu, fn

    def solve_rows(rows, q_h, q_o, nu, fn, B, modes=None):
        q_rel = se2.rel_pose_batch(q_h, q_o)
        G = se2.adjoint_batch(q_rel)
        A = object_ls_batch(A_cop[rows], weight[rows], cc[rows], dd[rows], q_rel[:, :2], fn)
        A_hat = G @ A @ np.swapaxes(G, 1, 2)
        return solve_batch(A_hat, B, G, nu, modes=modes)

    def B_of(rows, fn):
        return np.array([patch_ls_matrix(configs[i].scene.patch, f) for i, f in zip(rows, fn)])

    q_o = np.array([c.q_o for c in configs])
    q_h = np.array([se2.compose(c.q_o, c.scene.q_rel) for c in configs])
    recs = [_Recorder() for _ in configs]
    events = [[] for _ in configs]
    status = ["ok"] * N
    prev = np.full(N, -1)
    active = np.ones(N, dtype=bool)
    if n_steps == 0:
        return [r.build(e, s) for r, e, s in zip(recs, events, status)]

    def record(i, t, qo, qh, r, j, f):
        p = r["pivot"][j]
        sol = ModeSolution(Mode.from_code(r["mode"][j]),
                           None if np.isnan(r["alpha"][j]) else float(r["alpha"][j]),
                           float(r["k1"][j]), float(r["k2"][j]), r["nu_o"][j], r["nu_rel"][j],
                           r["w_h"][j], r["w_o"][j], None if np.isnan(p[0]) else p)
        recs[i].add(t, qo.copy(), qh.copy(), sol, f)

    for k in range(n_steps + 1):
        rows = np.nonzero(active)[0]
        if rows.size == 0:
            break
        t = k * dt
        nu_all, fn_all = program(t)
        nu, fn = nu_all[rows], fn_all[rows]
        B = B_of(rows, fn)
        qh, qo = q_h[rows], q_o[rows]
        r1 = solve_rows(rows, qh, qo, nu, fn, B)
        mode = r1["mode"]
        last = k == n_steps
        for j, i in enumerate(rows):
            if prev[i] >= 0 and mode[j] != prev[i] and not last:
                events[i].append((t, "mode", f"{Mode.from_code(prev[i]).value}->{Mode.from_code(mode[j]).value}"))
            prev[i] = mode[j]
            if k % stride == 0 or last:
                record(i, t, qo[j], qh[j], r1, j, fn[j])
        if last:
            break
        if stop_on_stick:
            stuck = mode == STICK
            for j in np.nonzero(stuck)[0]:
                i = rows[j]
                if k % stride != 0:
                    record(i, t, qo[j], qh[j], r1, j, fn[j])
                status[i] = "stuck"
                active[i] = False
            keep = ~stuck
            rows, nu, fn, B, qh, qo, mode = rows[keep], nu[keep], fn[keep], B[keep], qh[keep], qo[keep], mode[keep]
            nu_o1 = r1["nu_o"][keep]
            if rows.size == 0:
                break
        else:
            nu_o1 = r1["nu_o"]
        k1h, k1o = _rates_batch(qh, nu), _rates_batch(qo, nu_o1)
        qh2, qo2 = qh + 0.5 * dt * k1h, qo + 0.5 * dt * k1o
        k2h, k2o = _rates_batch(qh2, nu), _rates_batch(qo2, solve_rows(rows, qh2, qo2, nu, fn, B, mode)["nu_o"])
        qh3, qo3 = qh + 0.5 * dt * k2h, qo + 0.5 * dt * k2o
        k3h, k3o = _rates_batch(qh3, nu), _rates_batch(qo3, solve_rows(rows, qh3, qo3, nu, fn, B, mode)["nu_o"])
        qh4, qo4 = qh + dt * k3h, qo + dt * k3o
        k4h, k4o = _rates_batch(qh4, nu), _rates_batch(qo4, solve_rows(rows, qh4, qo4, nu, fn, B, mode)["nu_o"])
        q_h[rows] = qh + dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        q_o[rows] = qo + dt / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
        t1 = (k + 1) * dt
        q_rel = se2.rel_pose_batch(q_h[rows], q_o[rows])
        for j, i in enumerate(rows):
            radius = contact_radius(configs[i].scene.patch, fn[j])
            if patch_inside(objs[i], q_rel[j, :2], radius):
                continue
            if status[i] != "patch_exit":
                events[i].append((t1, "patch_exit", ""))
            status[i] = "patch_exit"
            if configs[i].on_patch_exit == "abort":
                nu1, fn1 = program(t1)
                r = solve_rows(np.array([i]), q_h[i:i + 1], q_o[i:i + 1], nu1[i:i + 1], fn1[i:i + 1],
                               B_of([i], fn1[i:i + 1]))
                record(i, t1, q_o[i], q_h[i], r, 0, fn1[i])
                active[i] = False
    return [r.build(e, s) for r, e, s in zip(recs, events, status)]


def rotation_mode_flip(scene: ContactScene, omega_h: float, v_mags, direction=(1.0, 0.0)) -> list[Mode]:
    """Initial contact mode for hand twists ``[v * direction, omega_h]``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    A_hat, B, G = scene.A_hat(), scene.B(), scene.G()
    out = []
    for v in v_mags:
        nu_h = np.array([v * d[0], v * d[1], omega_h])
        out.append(solve(A_hat, B, G, nu_h).mode)
    return out
