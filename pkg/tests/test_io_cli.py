import csv
import json
import xml.etree.ElementTree as ET
from importlib import resources

import numpy as np
import pytest

from patchslide import cli
from patchslide import io as pio
from patchslide.errors import ScenarioError
from patchslide.limit_surface import ObjectModel
from patchslide.sim import run

BUILTINS = ["box_pivot", "box_rotating_hand", "box_control"]


def _raw(name):
    return json.loads(resources.files("patchslide").joinpath(f"data/{name}.json").read_text())


def _write(tmp_path, raw, name="scn.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw, indent=2))
    return str(p)


def _rows(path):
    with open(path) as f:
        return list(csv.reader(f))


@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_scenarios_parse(name):
    sc = pio.builtin_scenario(name)
    assert sc.scene.patch_inside() and sc.dt > 0


def test_schema_error_names_key_and_line():
    text = json.dumps(_raw("box_pivot"), indent=2).replace('"mu_oe": 0.2', '"mu_oe": -0.2')
    with pytest.raises(ScenarioError) as e:
        pio.parse_scenario(text)
    msg = str(e.value)
    assert "object/mu_oe" in msg
    line = next(i for i, l in enumerate(text.splitlines(), 1) if '"mu_oe"' in l)
    assert f"line {line}" in msg


def test_json_syntax_error_has_line():
    with pytest.raises(ScenarioError, match="line 2"):
        pio.parse_scenario('{\n "object": ,\n}')


def test_patch_outside_footprint_rejected():
    raw = pio.scenario_with(_raw("box_pivot"), initial={"q_h": [0.07, 0.0, 0.0]})
    with pytest.raises(ScenarioError, match="outside"):
        pio.build_scenario(raw)


def test_controller_segment_needs_controller():
    raw = _raw("box_pivot")
    del raw["program"][0]["f_n_N"]
    with pytest.raises(ScenarioError, match="controller"):
        pio.build_scenario(raw)


def test_cli_schema_error_exit_code(tmp_path, capsys):
    raw = _raw("box_pivot")
    raw["patch"]["radius_m"] = "wide"
    code = cli.main(["simulate", _write(tmp_path, raw), "--out", str(tmp_path / "t.csv")])
    assert code == cli.EXIT_INPUT
    assert "patch/radius_m" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path):
    assert cli.main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t.csv")]) == 2


def _degenerate_raw():
    raw = _raw("box_pivot")
    f = raw["program"][0]["f_n_N"]
    raw["object"]["cop_shift"] = {"c": 0.0, "delta": 1.0}
    raw["initial"]["q_h"] = [0.0, 0.0, 0.0]
    A = np.diag([1.0, 1.0, 100.0])
    obj = ObjectModel((0.078, 0.118), raw["object"]["mass_kg"], raw["object"]["mu_oe"], 0.0, 1.0, A)
    k = f * f / (obj.weight + f) ** 2
    raw["object"]["A_cop_override"] = A.tolist()
    raw["patch"]["B_override"] = np.diag([k, 2 * k, 300 * k]).tolist()
    return raw


def test_cli_degenerate_strict_exit_code(tmp_path, capsys):
    path = _write(tmp_path, _degenerate_raw())
    assert pio.load_scenario(path).scene.pair().is_degenerate()
    out = str(tmp_path / "t.csv")
    assert cli.main(["simulate", path, "--out", out, "--strict", "--duration", "1"]) == cli.EXIT_DEGENERATE
    assert "degenerate" in capsys.readouterr().err
    assert cli.main(["simulate", path, "--out", out, "--duration", "1"]) == cli.EXIT_OK


def test_cli_zero_duration_header_only(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["simulate", _write(tmp_path, _raw("box_pivot")), "--out", str(out),
                     "--duration", "0"]) == 0
    assert _rows(out) == [pio.CSV_HEADER]


def test_cli_simulate_deterministic(tmp_path):
    path = _write(tmp_path, _raw("box_pivot"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert cli.main(["simulate", path, "--out", str(out), "--duration", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_csv_round_trip():
    sc = pio.builtin_scenario("box_pivot")
    traj = run(sc.sim_config(duration=5.0))
    back = pio.parse_trajectory(pio.trajectory_csv(traj))
    assert np.array_equal(back.t, traj.t)
    assert np.array_equal(back.q_o, traj.q_o) and np.array_equal(back.q_h, traj.q_h)
    assert np.array_equal(back.mode, traj.mode)
    assert np.array_equal(back.f_n, traj.f_n)
    assert pio.trajectory_csv(back) == pio.trajectory_csv(traj)


def test_trajectory_parse_errors():
    with pytest.raises(ScenarioError):
        pio.parse_trajectory("a,b\n1,2\n")
    bad = ",".join(pio.CSV_HEADER) + "\n" + ",".join(["x"] * len(pio.CSV_HEADER)) + "\n"
    with pytest.raises(ScenarioError, match="line 2"):
        pio.parse_trajectory(bad)


def test_cli_simulate_svg_well_formed(tmp_path):
    svg_path = tmp_path / "t.svg"
    assert cli.main(["simulate", _write(tmp_path, _raw("box_pivot")), "--out", str(tmp_path / "t.csv"),
                     "--svg", str(svg_path), "--duration", "5"]) == 0
    root = ET.parse(svg_path).getroot()
    assert root.tag.endswith("svg")


def test_cli_cones_all_stick_for_negative_c(tmp_path):
    raw = _raw("box_pivot")
    raw["patch"]["mu_ho"] = 50.0
    raw["patch"]["radius_m"] = 0.05
    raw["initial"]["q_h"] = [0.0, 0.0, 0.0]
    out, svg_path = tmp_path / "c.csv", tmp_path / "c.svg"
    code = cli.main(["cones", _write(tmp_path, raw), "--out", str(out), "--grid", "11",
                     "--omega", "0.1", "--vmax", "0.05", "--svg", str(svg_path)])
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["kind", "vx", "vy", "mode"]
    grid = [r for r in rows[1:] if r[0] == "grid"]
    assert len(grid) == 121 and {r[3] for r in grid} == {"stick"}
    ET.parse(svg_path)


def test_cli_cones_default_scene(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert cli.main(["cones", _write(tmp_path, _raw("box_pivot")), "--out", str(out),
                     "--grid", "21", "--omega", str(-np.pi / 80)]) == 0
    kinds = {r[0] for r in _rows(out)[1:]}
    assert "grid" in kinds and "stick_boundary" in kinds
    assert "modes:" in capsys.readouterr().out


def test_cli_cones_rejects_few_directions(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["cones", _write(tmp_path, _raw("box_pivot")), "--out", str(tmp_path / "c.csv"),
                  "--ndirs", "10"])
    assert e.value.code == cli.EXIT_INPUT


def test_cli_maxrot_has_zero_band(tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["maxrot", _write(tmp_path, _raw("box_pivot")), "--out", str(out),
                     "--grid", "9"]) == 0
    rows = _rows(out)
    assert rows[0] == ["x", "y", "class", "estimate_rad"]
    assert len(rows) == 82
    est = np.array([float(r[3]) for r in rows[1:] if r[3] != ""])
    assert np.any(np.abs(est) < 1e-12) and np.any(np.abs(est) > 1e-3)


def test_cli_maxrot_needs_straight_push(tmp_path):
    raw = _raw("box_pivot")
    raw["program"][0]["twist"] = [0.01, 0.0, 0.1]
    assert cli.main(["maxrot", _write(tmp_path, raw), "--out", str(tmp_path / "m.csv")]) == 2


def test_cli_pivot_locus(tmp_path, capsys):
    out, conic = tmp_path / "p.csv", tmp_path / "p.json"
    assert cli.main(["pivot-locus", _write(tmp_path, _raw("box_pivot")), "--out", str(out),
                     "--conic", str(conic), "--ndirs", "500"]) == 0
    rep = json.loads(conic.read_text())
    assert rep["kind"] == "ellipse" and len(rep["coefficients"]) == 6
    assert json.loads(capsys.readouterr().out) == rep
    assert len(_rows(out)) == rep["n_points"] + 1


def test_cli_control_with_reference(tmp_path, capsys):
    ref = tmp_path / "ref.csv"
    ref.write_text("t,theta\n0,0\n2,0.2\n")
    out = tmp_path / "c.csv"
    assert cli.main(["control", _write(tmp_path, _raw("box_control")), "--ref", str(ref),
                     "--duration", "4", "--out", str(out)]) == 0
    assert "final orientation error" in capsys.readouterr().out
    ref.write_text("time,angle\n0,0\n")
    assert cli.main(["control", _write(tmp_path, _raw("box_control")), "--ref", str(ref),
                     "--duration", "1", "--out", str(out)]) == 2


def test_cli_fit_consumes_simulate_output(tmp_path):
    raw = _raw("box_pivot")
    traj_path = tmp_path / "t.csv"
    assert cli.main(["simulate", _write(tmp_path, raw), "--out", str(traj_path), "--duration", "10"]) == 0
    fitted, report = tmp_path / "f.json", tmp_path / "r.json"
    assert cli.main(["fit", str(traj_path), _write(tmp_path, raw, "tmpl.json"), "--out", str(fitted),
                     "--report", str(report), "--max-eval", "40"]) == 0
    pio.load_scenario(fitted)
    rep = json.loads(report.read_text())
    assert rep["rms_m"] <= rep["initial_rms_m"] + 1e-15


def test_fitted_scenario_identity():
    from patchslide.analysis import FitParams
    raw = _raw("box_pivot")
    out = cli.fitted_scenario(raw, FitParams(0.2, 1.0, 0.6, 2.0))
    assert out["patch"] == raw["patch"] and out["object"] == raw["object"]


def test_sweep_threads_env(monkeypatch):
    monkeypatch.setenv("PATCHSLIDE_THREADS", "3")
    assert cli.sweep_threads() == 3
    monkeypatch.setenv("PATCHSLIDE_THREADS", "x")
    assert cli.sweep_threads() == 1
