"""Scenario files (JSON) and trajectory tables (CSV)."""
from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import se2
from .errors import ScenarioError
from .limit_surface import ObjectModel, PatchModel
from .scene import ContactScene
from .sim import ControllerConfig, Segment, SimConfig, Trajectory
from .solver import Mode

CSV_HEADER = ["t", "xo", "yo", "tho", "xh", "yh", "thh", "mode", "alpha",
              "px", "py", "fxh", "fyh", "mh", "fn"]

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_MAT3 = {"type": "array", "items": _VEC3, "minItems": 3, "maxItems": 3}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["object", "patch", "initial", "program"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "object": {
            "type": "object",
            "required": ["dims_m", "mass_kg", "mu_oe"],
            "additionalProperties": False,
            "properties": {
                "dims_m": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
                "mass_kg": _POS,
                "mu_oe": _POS,
                "cop_shift": {
                    "type": "object",
                    "required": ["c", "delta"],
                    "additionalProperties": False,
                    "properties": {"c": {"type": "number", "minimum": 0},
                                   "delta": {"type": "number", "minimum": 0}},
                },
                "A_cop_override": _MAT3,
            },
        },
        "patch": {
            "type": "object",
            "required": ["type", "mu_ho"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["hertz", "fixed_disc"]},
                "mu_ho": _POS,
                "radius_m": _POS,
                "R_m": _POS,
                "E_star_pa": _POS,
                "B_override": _MAT3,
            },
            "allOf": [
                {"if": {"properties": {"type": {"const": "hertz"}}},
                 "then": {"required": ["R_m", "E_star_pa"]}},
                {"if": {"properties": {"type": {"const": "fixed_disc"}}},
                 "then": {"required": ["radius_m"]}},
            ],
        },
        "initial": {
            "type": "object",
            "required": ["q_o", "q_h"],
            "additionalProperties": False,
            "properties": {"q_o": _VEC3, "q_h": _VEC3},
        },
        "program": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["duration_s", "twist"],
                "additionalProperties": False,
                "properties": {
                    "duration_s": {"type": "number", "minimum": 0},
                    "twist": _VEC3,
                    "f_n_N": {"oneOf": [_POS, {"const": "controller"}]},
                },
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt_s": _POS,
                "duration_s": {"type": "number", "minimum": 0},
                "record_stride": {"type": "integer", "minimum": 1},
                "on_patch_exit": {"enum": ["abort", "continue"]},
                "f_min_N": {"type": "number", "minimum": 0},
            },
        },
        "controller": {
            "type": "object",
            "required": ["K_N_per_rad", "f_upper_N"],
            "additionalProperties": False,
            "properties": {
                "K_N_per_rad": {"type": "number", "minimum": 0},
                "f_upper_N": _POS,
                "sat_lo_rad": {"type": "number"},
                "sat_hi_rad": {"type": "number"},
                "reference": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number"},
                              "minItems": 2, "maxItems": 2},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Scenario:
    raw: dict
    scene: ContactScene
    q_o: np.ndarray
    program: tuple[Segment, ...]
    dt: float
    duration: float
    record_stride: int
    on_patch_exit: str
    f_min: float

    def sim_config(self, strict: bool = False, duration: float | None = None) -> SimConfig:
        return SimConfig(self.scene, self.program, dt=self.dt,
                         duration=self.duration if duration is None else duration,
                         record_stride=self.record_stride, q_o=self.q_o,
                         on_patch_exit=self.on_patch_exit, f_min=self.f_min, strict=strict)

    def controller(self, K: float | None = None, f_upper: float | None = None,
                   reference=None) -> ControllerConfig:
        c = self.raw.get("controller", {})
        K = c.get("K_N_per_rad") if K is None else K
        f_upper = c.get("f_upper_N") if f_upper is None else f_upper
        if K is None or f_upper is None:
            raise ScenarioError("controller needs K_N_per_rad and f_upper_N")
        ref = reference if reference is not None else c.get("reference", [[0.0, 0.0]])
        kw = {}
        if "sat_lo_rad" in c:
            kw["sat_lo"] = c["sat_lo_rad"]
        if "sat_hi_rad" in c:
            kw["sat_hi"] = c["sat_hi_rad"]
        return ControllerConfig(float(K), float(f_upper), piecewise_linear(ref), f_min=self.f_min, **kw)


def piecewise_linear(points):
    """Reference ``theta(t)`` interpolating ``(t, theta)`` pairs, held constant outside."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    order = np.argsort(P[:, 0], kind="stable")
    ts, vs = P[order, 0], P[order, 1]
    return lambda t: float(np.interp(t, ts, vs))


def _format_path(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def _key_line(text: str, path) -> int | None:
    """Best-effort line of the innermost named key in ``path``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_scenario(text: str) -> Scenario:
    """Validate and build a scenario; raises :class:`ScenarioError` with a location."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        msgs = []
        for e in errors:
            line = _key_line(text, e.absolute_path)
            where = f"line {line}, " if line else ""
            msgs.append(f"{where}key {_format_path(e.absolute_path)}: {e.message}")
        raise ScenarioError("; ".join(msgs))
    return build_scenario(raw)


def build_scenario(raw: dict) -> Scenario:
    o, p = raw["object"], raw["patch"]
    cs = o.get("cop_shift", {"c": 0.0, "delta": 0.0})
    obj = ObjectModel((0.5 * o["dims_m"][0], 0.5 * o["dims_m"][1]), o["mass_kg"], o["mu_oe"],
                      cs["c"], cs["delta"], o.get("A_cop_override"))
    if p["type"] == "hertz":
        patch = PatchModel(p["mu_ho"], sphere_radius=p["R_m"], effective_modulus=p["E_star_pa"],
                           B_unit=p.get("B_override"))
    else:
        patch = PatchModel(p["mu_ho"], fixed_radius=p["radius_m"], B_unit=p.get("B_override"))
    ctrl = raw.get("controller", {})
    segs = []
    for s in raw["program"]:
        f = s.get("f_n_N", "controller")
        if f == "controller" and "f_upper_N" not in ctrl:
            raise ScenarioError("a segment without f_n_N needs a controller section")
        segs.append(Segment(float(s["duration_s"]), s["twist"], None if f == "controller" else float(f)))
    f0 = next((s.f_n for s in segs if s.f_n is not None), ctrl.get("f_upper_N"))
    q_o = np.asarray(raw["initial"]["q_o"], dtype=float)
    q_h = np.asarray(raw["initial"]["q_h"], dtype=float)
    scene = ContactScene(obj, patch, se2.rel_pose(q_h, q_o), f0)
    if not scene.patch_inside():
        raise ScenarioError("initial patch placement is outside the object footprint")
    sim = raw.get("sim", {})
    total = sum(s.duration for s in segs)
    return Scenario(raw, scene, q_o, tuple(segs), float(sim.get("dt_s", 0.01)),
                    float(sim.get("duration_s", total)), int(sim.get("record_stride", 10)),
                    sim.get("on_patch_exit", "abort"), float(sim.get("f_min_N", 0.05)))


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def builtin_scenario(name: str) -> Scenario:
    """Bundled scenarios: ``box_pivot``, ``box_rotating_hand``, ``box_control``."""
    text = resources.files("patchslide").joinpath(f"data/{name}.json").read_text()
    return parse_scenario(text)


def scenario_with(raw: dict, **updates) -> dict:
    """Deep copy of ``raw`` with top-level sections updated."""
    out = json.loads(json.dumps(raw))
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# CSV

def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def trajectory_rows(traj: Trajectory):
    piv = traj.pivot_world()
    for i in range(len(traj)):
        yield [_fmt(traj.t[i]), *map(_fmt, traj.q_o[i]), *map(_fmt, traj.q_h[i]),
               Mode.from_code(int(traj.mode[i])).value, _fmt(traj.alpha[i]),
               *map(_fmt, piv[i]), *map(_fmt, traj.w_h[i]), _fmt(traj.f_n[i])]


def trajectory_csv(traj: Trajectory) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(trajectory_rows(traj))
    return buf.getvalue()


def write_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_csv(traj))


def _num(s: str) -> float:
    return math.nan if s == "" else float(s)


def parse_trajectory(text: str) -> Trajectory:
    """Read a trajectory table; the pivot is converted back to the hand frame."""
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ScenarioError(f"trajectory header must be {','.join(CSV_HEADER)}")
    body = rows[1:]
    for k, r in enumerate(body, 2):
        if len(r) != len(CSV_HEADER):
            raise ScenarioError(f"line {k}: expected {len(CSV_HEADER)} fields, got {len(r)}")
    codes = {m.value: m.code for m in Mode}
    vals, modes = [], []
    for k, r in enumerate(body, 2):
        try:
            vals.append([_num(v) for j, v in enumerate(r) if j != 7])
            modes.append(codes[r[7]])
        except (ValueError, KeyError) as e:
            raise ScenarioError(f"line {k}: bad trajectory value: {e}") from None
    num = np.array(vals, dtype=float).reshape(-1, len(CSV_HEADER) - 1)
    mode = np.array(modes, dtype=int)
    t = num[:, 0]
    if np.any(np.diff(t) <= 0):
        raise ScenarioError("trajectory times must increase")
    q_o, q_h = num[:, 1:4], num[:, 4:7]
    piv_w = num[:, 8:10]
    piv = np.full_like(piv_w, np.nan)
    for i in range(len(t)):
        if np.isfinite(piv_w[i, 0]):
            piv[i] = se2.rot(q_h[i, 2])[:2, :2].T @ (piv_w[i] - q_h[i, :2])
    return Trajectory(t, q_o, q_h, mode, num[:, 7], piv, num[:, 10:13], num[:, 13], [], "ok")


def read_trajectory(path) -> Trajectory:
    return parse_trajectory(Path(path).read_text())
