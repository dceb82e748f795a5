import json

import numpy as np
import pytest
import yaml

from refchain.chain import COMPONENT_TYPES
from refchain.cli import main
from refchain.scenario import (
    PLANT_KEYS,
    SCENARIO_KEYS,
    ReportError,
    load_scenario,
    run_scenario,
    shipped_dir,
    shipped_scenarios,
    summarize_text,
)

SHIPPED = [
    "fsm_preemption_planar",
    "jrg_pdgc_planar",
    "jrg_pid_planar",
    "trg_ac_cpc_pid_planar_wall",
    "trg_ac_cpc_wall",
    "trg_cpc_6dof",
    "trg_cpc_6dof_125hz",
]


def shipped_yaml(name):
    return yaml.safe_load((shipped_dir() / f"{name}.yaml").read_text())


def write_scenario(tmp_path, data, name="s.yaml"):
    # trajectory and chain files are resolved relative to the scenario file
    for sub in ("trajectories", "chains"):
        (tmp_path / sub).mkdir(exist_ok=True)
        for f in (shipped_dir() / sub).glob("*.yaml"):
            (tmp_path / sub / f.name).write_text(f.read_text())
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def short(name, duration):
    data = shipped_yaml(name)
    data["duration"] = duration
    data["events"] = [e for e in data.get("events") or [] if e["time"] <= duration]
    return data


def test_list_names_the_seven_scenarios(capsys):
    assert main(["list"]) == 0
    assert capsys.readouterr().out.split() == SHIPPED
    assert shipped_scenarios() == SHIPPED


def test_validate(capsys):
    assert main(["validate", "jrg_pdgc_planar"]) == 0
    assert capsys.readouterr().out.strip() == "jrg_pdgc_planar: ok (jrg -> pdgc @ 1000 Hz, 1 events)"
    assert main(["validate", "trg_cpc_square"]) == 0  # alias of trg_cpc_6dof


def test_run_reports_results_and_writes_log(tmp_path, capsys):
    log = tmp_path / "out" / "pdgc.csv"
    path = write_scenario(tmp_path, short("jrg_pdgc_planar", 0.05))
    assert main(["run", str(path), "--log", str(log)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["cycles"] == 50
    assert report["trajectories"] == [{"label": "two_moves", "id": report["trajectories"][0]["id"], "result": "ABORTED_BY_DEACTIVATION"}]
    assert "jrg/position=plant/position" in report["errors"]
    lines = log.read_text().splitlines()
    assert len(lines) == 51 and lines[0].startswith("time,jrg/position/0")


def test_misspelled_gain_key_is_config_error(tmp_path, capsys):
    data = shipped_yaml("jrg_pdgc_planar")
    data["pipeline"][1]["params"] = {"kp": 100.0, "kdd": 20.0}
    path = write_scenario(tmp_path, data)
    assert main(["run", str(path)]) == 2
    assert "kdd" in capsys.readouterr().err
    assert main(["validate", str(path)]) == 2


def test_wiring_error_exit_code(tmp_path, capsys):
    data = shipped_yaml("trg_cpc_6dof")
    data["pipeline"][1] = {"name": "pdgc", "type": "pdgc", "params": {"kp": 1.0, "kd": 1.0}}
    path = write_scenario(tmp_path, data)
    assert main(["validate", str(path)]) == 2
    err = capsys.readouterr().err
    assert "pdgc" in err and "position/0" in err


def test_unknown_scenario_key_and_bad_yaml(tmp_path, capsys):
    data = shipped_yaml("jrg_pdgc_planar")
    data["durration"] = 1.0
    assert main(["run", str(write_scenario(tmp_path, data))]) == 2
    assert "durration" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("frequency: [1000\n")
    assert main(["run", str(bad)]) == 2


def test_fault_stop_exit_code(tmp_path, capsys):
    data = short("jrg_pdgc_planar", 0.5)
    data["pipeline"][1]["params"] = {"kp": 1e9, "kd": 1e6}
    assert main(["run", str(write_scenario(tmp_path, data))]) == 3
    assert "FaultStop at cycle" in capsys.readouterr().err


def test_io_error_exit_codes(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    path = write_scenario(tmp_path, short("jrg_pdgc_planar", 0.01))
    assert main(["run", str(path), "--log", str(blocker / "log.csv")]) == 4
    assert main(["summarize", str(tmp_path / "none.csv"), "--pairs", "a=b"]) == 4


# -- summarize ------------------------------------------------------------------------


def csv_text(columns: dict) -> str:
    names = list(columns)
    rows = zip(*[columns[n] for n in names])
    return "\n".join([",".join(names)] + [",".join(repr(float(v)) for v in r) for r in rows]) + "\n"


def test_summarize_identical_signals_are_zero():
    s = np.linspace(0, 1, 20)
    text = csv_text({"time": s, "ref/position/0": s, "plant/position/0": s})
    rep = summarize_text(text, ["ref/position=plant/position"])
    assert rep["ref/position=plant/position"]["0"] == {"max": 0.0, "rms": 0.0, "final": 0.0}


def test_summarize_constant_offset():
    s = np.linspace(0, 1, 20)
    text = csv_text({"time": s, "ref/position/0": s + 0.1, "plant/position/0": s})
    stats = summarize_text(text, ["ref/position=plant/position"])["ref/position=plant/position"]["0"]
    for key in ("max", "rms", "final"):
        assert stats[key] == pytest.approx(0.1, abs=1e-12)


def test_summarize_pose_groups_separate_position_and_orientation():
    n = 5
    half = np.sin(0.05)
    cols = {"time": np.arange(n)}
    for who, x, qz in (("ref", 0.03, half), ("ee", 0.0, 0.0)):
        cols.update({f"{who}/pose/x": np.full(n, x), f"{who}/pose/y": np.zeros(n), f"{who}/pose/z": np.zeros(n),
                     f"{who}/pose/qw": np.full(n, np.sqrt(1 - qz * qz)), f"{who}/pose/qx": np.zeros(n),
                     f"{who}/pose/qy": np.zeros(n), f"{who}/pose/qz": np.full(n, qz)})
    rep = summarize_text(csv_text(cols), ["ref/pose=ee/pose"])["ref/pose=ee/pose"]
    assert rep["position"]["max"] == pytest.approx(0.03)
    assert rep["orientation"]["max"] == pytest.approx(0.1, abs=1e-12)
    assert rep["y"]["max"] == 0.0


def test_summarize_unknown_channel(tmp_path, capsys):
    text = csv_text({"time": [0.0], "ref/position/0": [1.0], "plant/position/0": [1.0]})
    with pytest.raises(ReportError):
        summarize_text(text, ["ref/velocity=plant/position"])
    with pytest.raises(ReportError):
        summarize_text(text, ["ref/position"])
    log = tmp_path / "log.csv"
    log.write_text(text)
    assert main(["summarize", str(log), "--pairs", "nope/x=plant/position"]) == 2
    assert main(["summarize", str(log), "--pairs", "ref/position=plant/position"]) == 0
    assert '"max": 0.0' in capsys.readouterr().out


# -- configuration-only differences between scenarios -----------------------------------


def test_shipped_scenarios_only_use_allowlisted_keys():
    types = set()
    for name in SHIPPED:
        data = shipped_yaml(name)
        assert set(data) <= SCENARIO_KEYS, name
        plant = data["plant"]
        assert set(plant) <= PLANT_KEYS[plant["type"]], name
        for block in data["pipeline"]:
            assert set(block) <= {"name", "type", "params"}
            cls = COMPONENT_TYPES[block["type"]]
            assert set(block.get("params") or {}) <= set(cls.PARAMS), (name, block["name"])
            types.add(block["type"])
        for ev in data.get("events") or []:
            assert set(ev) <= {"time", "label", "publish_reference", "submit_trajectory"}
        load_scenario(name)
    # every registered component is exercised by the shipped set
    assert types == set(COMPONENT_TYPES)


def test_stress_mode_gives_the_same_result_codes():
    sc = load_scenario("fsm_preemption_planar")
    a = run_scenario(sc)
    sc = load_scenario("fsm_preemption_planar")
    b = run_scenario(sc, stress=True)
    assert a.exit_code == b.exit_code == 0
    assert [r[2] for r in a.results] == [r[2] for r in b.results]
