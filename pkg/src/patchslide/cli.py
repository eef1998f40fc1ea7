"""Command-line front end: scenario files in, CSV/SVG/JSON artifacts out."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, svg
from . import io as pio
from .errors import DegenerateC, PatchSlideError, ScenarioError
from .sim import run, run_controlled

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3


def sweep_threads() -> int:
    """Worker count for sweeps, capped by ``PATCHSLIDE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("PATCHSLIDE_THREADS", "1")))
    except ValueError:
        return 1


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _check_pair(scene, strict: bool) -> None:
    if strict:
        pair = scene.pair()
        if pair.is_degenerate():
            raise DegenerateC(f"generalized eigenvalue at 1: {pair.lam}")


def _straight_velocity(sc) -> np.ndarray:
    nu = sc.program[0].nu_h
    if nu[2] != 0:
        raise ScenarioError("key program/0/twist: this command needs a twist without rotation")
    if not np.any(nu[:2]):
        raise ScenarioError("key program/0/twist: linear velocity must be non-zero")
    return nu[:2]


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    sc = pio.load_scenario(args.scenario)
    traj = run(sc.sim_config(strict=args.strict, duration=args.duration))
    pio.write_trajectory(traj, args.out)
    if args.svg:
        svg.write(args.svg, svg.trajectory_svg(traj, sc.scene.obj.half_extents))
    print(f"{len(traj)} samples, status {traj.status}")
    return EXIT_OK


def cmd_cones(args) -> int:
    sc = pio.load_scenario(args.scenario)
    scene = sc.scene
    _check_pair(scene, args.strict)
    sec = analysis.motion_cone_section(scene, args.omega, args.ndirs)
    v_max = args.vmax
    if v_max is None:
        v_max = float(sec.speeds.max()) if args.omega != 0 else 0.02
    v, labels = analysis.mode_grid(scene, args.omega, v_max, args.grid)
    names = {0: "stick", 1: "pivot", 2: "slip"}
    rows = []
    for i, vy in enumerate(v):
        for j, vx in enumerate(v):
            rows.append(["grid", _fmt(vx), _fmt(vy), names[int(labels[i, j])]])
    scale = v_max if args.omega == 0 else 1.0
    for kind, pts in (("stick_boundary", sec.stick_boundary), ("slip_boundary", sec.slip_boundary)):
        for x, y in pts:
            rows.append([kind, _fmt(scale * x), _fmt(scale * y), ""])
    _write_rows(args.out, ["kind", "vx", "vy", "mode"], rows)
    if args.svg:
        svg.write(args.svg, svg.mode_map_svg(v, labels, scale * sec.stick_boundary,
                                             scale * sec.slip_boundary))
    present = sorted({names[int(m)] for m in labels.ravel()})
    print("modes: " + ", ".join(present))
    return EXIT_OK


def _simulated_field(scene, xs, ys, v_h, horizon, dt):
    threads = sweep_threads()
    if threads == 1 or len(ys) < 2:
        return analysis.simulated_rotation(scene, xs, ys, v_h, horizon, dt)
    chunks = [c for c in np.array_split(ys, threads) if len(c)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda c: analysis.simulated_rotation(scene, xs, c, v_h, horizon, dt), chunks))
    return analysis.MaxRotField(xs, ys, np.vstack([p.estimate for p in parts]),
                                np.vstack([p.klass for p in parts]))


def cmd_maxrot(args) -> int:
    sc = pio.load_scenario(args.scenario)
    scene = sc.scene
    _check_pair(scene, args.strict)
    v_h = _straight_velocity(sc)
    hx, hy = scene.obj.half_extents
    a = scene.patch_radius()
    xs = np.linspace(-(hx - a), hx - a, args.grid)
    ys = np.linspace(-(hy - a), hy - a, args.grid)
    est = analysis.max_rotation_estimate(scene, xs, ys, v_h)
    classes = {analysis.ROTATE: "rotate", analysis.STUCK: "stick",
               analysis.INFEASIBLE: "infeasible", analysis.SLIPPING: "slip"}
    header = ["x", "y", "class", "estimate_rad"]
    sim = None
    if args.simulate:
        sim = _simulated_field(scene, xs, ys, v_h, args.horizon, args.sim_dt)
        header += ["simulated_class", "simulated_rad"]
    rows = []
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            row = [_fmt(x), _fmt(y), classes[int(est.klass[i, j])], _fmt(est.estimate[i, j])]
            if sim is not None:
                row += [classes[int(sim.klass[i, j])], _fmt(sim.estimate[i, j])]
            rows.append(row)
    _write_rows(args.out, header, rows)
    if sim is not None:
        err, n = analysis.rotation_field_error(est, sim)
        print(f"relative difference {err:.4f} over {n} rotating placements")
    return EXIT_OK


def cmd_pivot_locus(args) -> int:
    sc = pio.load_scenario(args.scenario)
    scene = sc.scene
    _check_pair(scene, args.strict)
    loc = analysis.pivot_locus(scene, args.ndirs)
    _write_rows(args.out, ["x", "y"], [[_fmt(x), _fmt(y)] for x, y in loc.points])
    report = {"coefficients": [float(c) for c in loc.coeffs], "kind": loc.kind,
              "residual": loc.residual, "n_points": int(len(loc.points)),
              "form": "a x^2 + b x y + c y^2 + d x + e y + f = 0, hand frame"}
    text = json.dumps(report, indent=2) + "\n"
    if args.conic:
        Path(args.conic).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _read_reference(path):
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or [h.strip() for h in rows[0]] != ["t", "theta"]:
        raise ScenarioError(f"{path}: reference header must be t,theta")
    pts = []
    for k, r in enumerate(rows[1:], 2):
        try:
            pts.append([float(r[0]), float(r[1])])
        except (ValueError, IndexError):
            raise ScenarioError(f"{path}: line {k}: expected two numbers") from None
    if not pts:
        raise ScenarioError(f"{path}: reference has no rows")
    return pts


def cmd_control(args) -> int:
    sc = pio.load_scenario(args.scenario)
    ref = _read_reference(args.ref) if args.ref else None
    ctrl = sc.controller(args.K, args.fU, ref)
    traj = run_controlled(sc.sim_config(strict=args.strict, duration=args.duration), ctrl)
    pio.write_trajectory(traj, args.out)
    if args.svg:
        svg.write(args.svg, svg.trajectory_svg(traj, sc.scene.obj.half_extents))
    if len(traj):
        err = np.array([ctrl.theta_ref(t) for t in traj.t]) - traj.q_o[:, 2]
        print(f"final orientation error {math.degrees(err[-1]):.3f} deg, status {traj.status}")
    return EXIT_OK


def fitted_scenario(raw: dict, params: analysis.FitParams) -> dict:
    """Scenario dictionary with fitted friction, patch torque scale and shift."""
    out = json.loads(json.dumps(raw))
    out["object"]["mu_oe"] = float(params.mu_oe)
    out["object"]["cop_shift"] = {"c": float(params.cop_c), "delta": float(params.cop_delta)}
    if "A_cop_override" in out["object"]:
        ratio = (raw["object"]["mu_oe"] / params.mu_oe) ** 2
        out["object"]["A_cop_override"] = (np.asarray(raw["object"]["A_cop_override"]) * ratio).tolist()
    p = out["patch"]
    s = float(params.torque_scale)
    if "B_override" in p:
        S = np.array([1.0, 1.0, 1.0 / s])
        p["B_override"] = (np.asarray(p["B_override"]) * S[:, None] * S[None, :]).tolist()
    elif p["type"] == "fixed_disc":
        p["radius_m"] = p["radius_m"] * s
    else:
        p["R_m"] = p["R_m"] * s**3
    return out


def cmd_fit(args) -> int:
    traj = pio.read_trajectory(args.trajectory)
    sc = pio.load_scenario(args.scenario)
    if len(traj) < 2:
        raise ScenarioError(f"{args.trajectory}: trajectory needs at least two samples")
    res = analysis.fit_parameters(traj, sc.scene.obj, sc.scene.patch, max_eval=args.max_eval)
    fitted = fitted_scenario(sc.raw, res.params)
    Path(args.out).write_text(json.dumps(fitted, indent=2) + "\n")
    report = {"mu_oe": float(res.params.mu_oe), "torque_scale": float(res.params.torque_scale),
              "cop_c": float(res.params.cop_c), "cop_delta": float(res.params.cop_delta),
              "rms_m": res.rms, "initial_rms_m": res.initial_rms, "improved": res.improved,
              "evaluations": res.n_eval}
    text = json.dumps(report, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _int_at_least(lo: int):
    def parse(text: str) -> int:
        v = int(text)
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be at least {lo}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchslide", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a scenario to a trajectory CSV")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--duration", type=float, help="override the simulated duration (s)")
    s.add_argument("--strict", action="store_true", help="fail on a degenerate limit-surface pair")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("cones", help="mode map and cone boundaries at one hand angular velocity")
    s.add_argument("scenario")
    s.add_argument("--omega", type=float, default=0.0, help="hand angular velocity (rad/s)")
    s.add_argument("--grid", type=_int_at_least(2), default=101)
    s.add_argument("--vmax", type=float, help="half-width of the velocity grid (m/s)")
    s.add_argument("--ndirs", type=_int_at_least(90), default=360)
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_cones)

    s = sub.add_parser("maxrot", help="estimated rotation over initial patch placements")
    s.add_argument("scenario")
    s.add_argument("--grid", type=_int_at_least(2), default=21)
    s.add_argument("--simulate", action="store_true", help="add the simulated rotation field")
    s.add_argument("--horizon", type=float, default=150.0, help="simulated time (s)")
    s.add_argument("--sim-dt", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_maxrot)

    s = sub.add_parser("pivot-locus", help="conic traced by pivot points")
    s.add_argument("scenario")
    s.add_argument("--ndirs", type=_int_at_least(6), default=2000)
    s.add_argument("--out", required=True)
    s.add_argument("--conic", help="write the conic report JSON here")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_pivot_locus)

    s = sub.add_parser("control", help="orientation tracking by normal-force control")
    s.add_argument("scenario")
    s.add_argument("--ref", help="reference CSV with header t,theta")
    s.add_argument("--K", type=float, help="gain (N/rad)")
    s.add_argument("--fU", type=float, help="upper normal force (N)")
    s.add_argument("--duration", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_control)

    s = sub.add_parser("fit", help="identify friction parameters from a trajectory CSV")
    s.add_argument("trajectory")
    s.add_argument("scenario", help="scenario template")
    s.add_argument("--out", required=True, help="fitted scenario JSON")
    s.add_argument("--report")
    s.add_argument("--max-eval", type=int, default=400)
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateC as e:
        print(f"error: degenerate limit-surface pair: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (PatchSlideError, ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
