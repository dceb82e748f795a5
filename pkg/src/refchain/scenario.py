"""Scenario files, the simulation harness, CSV cycle logs and error summaries.

A scenario is a YAML document::

    name: jrg_pdgc_planar
    frequency: 1000          # control frequency [Hz]
    duration: 6.0            # simulated seconds
    plant:                   # planar_arm | kinematic_chain
      type: planar_arm
      lengths: [0.5, 0.4, 0.3]
      masses: [2.0, 1.5, 1.0]
      ...
    pipeline:                # generator first, then controllers
      - {name: jrg, type: joint_reference_generator, params: {...}}
      - {name: pdgc, type: pdgc, params: {kp: 100, kd: 20}}
    wall: {point: [...], normal: [...], stiffness: 1.0e4, damping: 50}   # optional
    events:
      - {time: 0.5, submit_trajectory: {file: trajectories/square.yaml}}
      - {time: 4.0, publish_reference: {positions: [0, 0, 0]}}
    summary:
      pairs: [jrg/position=plant/position]

Relative file paths resolve against the scenario file's directory.
"""
from __future__ import annotations

import csv
import io
import math
import threading
import time as _time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .chain import ComponentDescriptor, ConfigError, Pipeline, WiringError, pipeline_build
from .core import InvalidInput, Pose, Twist, Wrench, canonical
from .plant import DynamicPlant, DynamicsModel, FaultStop, KinematicPlant, KinematicsModel, WallModel, wall_wrench
from .refgen import JointReference, ReferenceGenerator, TaskReference, Trajectory
from .transport import GoalHandle, ResultCode

SCENARIO_KEYS = {"name", "description", "frequency", "duration", "plant", "pipeline", "wall", "events", "log", "summary"}
PLANT_KEYS = {
    "planar_arm": {"type", "lengths", "masses", "friction", "gravity", "gravity_enabled",
                   "initial_positions", "initial_velocities", "disturbance"},
    "kinematic_chain": {"type", "chain", "initial_positions", "rate_limit"},
}
POSE_AXES = ("x", "y", "z", "qw", "qx", "qy", "qz")
WRENCH_AXES = ("fx", "fy", "fz", "tx", "ty", "tz")
# alternative names accepted for shipped scenarios
ALIASES = {"trg_cpc_square": "trg_cpc_6dof"}


class ReportError(KeyError):
    """A requested log channel does not exist."""


def shipped_dir() -> Path:
    return Path(str(resources.files("refchain") / "scenarios"))


def shipped_scenarios() -> list:
    return sorted(p.stem for p in shipped_dir().glob("*.yaml"))


def resolve_scenario_path(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = shipped_dir() / f"{ALIASES.get(str(name_or_path), name_or_path)}.yaml"
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"no scenario file or shipped scenario named '{name_or_path}'")


# --------------------------------------------------------------------------
# parsing


def _load_yaml(path: Path):
    with open(path) as fh:
        try:
            return yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def _quat(values):
    # malformed quaternions are passed through untouched so validation can reject them
    try:
        return canonical(values)
    except (InvalidInput, ValueError):
        return np.array(values, dtype=float)


def parse_trajectory(data: dict) -> Trajectory:
    """Build a trajectory from the ``variant/dimension/waypoints`` mapping."""
    try:
        variant = data["variant"]
        rows = data["waypoints"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"trajectory missing key {exc}") from None
    if not rows:
        raise ConfigError("trajectory has no waypoints")
    waypoints = []
    if variant == "joint":
        n = int(data.get("dimension", len(rows[0]) - 1))
        for row in rows:
            if len(row) not in (1 + n, 1 + 2 * n):
                raise ConfigError(f"joint waypoint row width {len(row)} does not match dimension {n}")
            vel = row[1 + n:] or None
            waypoints.append((row[0], JointReference.make(row[1:1 + n], vel)))
    elif variant == "task":
        for row in rows:
            if len(row) not in (8, 14, 20):
                raise ConfigError(f"task waypoint row width {len(row)}; expected 8, 14 or 20")
            pose = Pose(np.array(row[1:4], dtype=float), _quat(row[4:8]))
            twist = Twist.from_vector(row[8:14]) if len(row) >= 14 else None
            wrench = Wrench.from_vector(row[14:20]) if len(row) == 20 else None
            waypoints.append((row[0], TaskReference(pose, twist, wrench)))
    else:
        raise ConfigError(f"unknown trajectory variant '{variant}'")
    return Trajectory(tuple(waypoints))


def parse_reference(data: dict):
    """Topic payload: ``positions``/``velocities`` or ``position``/``orientation``/``twist``/``wrench``."""
    if "positions" in data:
        return JointReference.make(data["positions"], data.get("velocities"))
    if "position" in data:
        pose = Pose(np.array(data["position"], dtype=float), _quat(data.get("orientation", [1, 0, 0, 0])))
        twist = Twist.from_vector(data["twist"]) if "twist" in data else None
        wrench = Wrench.from_vector(data["wrench"]) if "wrench" in data else None
        return TaskReference(pose, twist, wrench)
    raise ConfigError("reference payload needs 'positions' or 'position'")


@dataclass
class Event:
    time: float
    action: str  # "publish_reference" | "submit_trajectory"
    payload: object
    label: str = ""


@dataclass
class Scenario:
    name: str
    frequency: float
    duration: float
    plant: dict
    pipeline: list
    events: list
    wall: Optional[WallModel] = None
    log: Optional[str] = None
    pairs: list = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)
    raw: dict = field(default_factory=dict)

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def cycles(self) -> int:
        return int(round(self.duration * self.frequency))


def load_scenario(path) -> Scenario:
    path = resolve_scenario_path(path)
    data = _load_yaml(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario must be a mapping")
    return scenario_from_dict(data, path.parent)


def scenario_from_dict(data: dict, base_dir=Path(".")) -> Scenario:
    base_dir = Path(base_dir)
    unknown = set(data) - SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario key '{sorted(unknown)[0]}'")
    for key in ("frequency", "duration", "plant", "pipeline"):
        if key not in data:
            raise ConfigError(f"scenario missing '{key}'")
    frequency = float(data["frequency"])
    duration = float(data["duration"])
    if not frequency > 0:
        raise ConfigError("frequency must be > 0")
    if not duration > 0:
        raise ConfigError("duration must be > 0")
    events = []
    for i, ev in enumerate(data.get("events") or []):
        t = float(ev.get("time", 0.0))
        if t < 0 or t > duration:
            raise ConfigError(f"event {i} time {t} outside [0, {duration}]")
        actions = [k for k in ("publish_reference", "submit_trajectory") if k in ev]
        if len(actions) != 1:
            raise ConfigError(f"event {i} needs exactly one of publish_reference / submit_trajectory")
        action = actions[0]
        body = ev[action]
        if action == "submit_trajectory":
            if "file" in body:
                body = _load_yaml(base_dir / body["file"])
            payload = parse_trajectory(body)
        else:
            payload = parse_reference(body)
        events.append(Event(t, action, payload, ev.get("label", f"event{i}")))
    events.sort(key=lambda e: e.time)
    wall = None
    if data.get("wall"):
        w = data["wall"]
        try:
            wall = WallModel(w["point"], w["normal"], float(w["stiffness"]), float(w.get("damping", 0.0)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"wall: {exc}") from None
    summary = data.get("summary") or {}
    return Scenario(
        name=str(data.get("name", "scenario")),
        frequency=frequency,
        duration=duration,
        plant=dict(data["plant"]),
        pipeline=[ComponentDescriptor.from_dict(d) for d in data["pipeline"]],
        events=events,
        wall=wall,
        log=data.get("log"),
        pairs=list(summary.get("pairs") or []),
        base_dir=base_dir,
        raw=data,
    )


def build_plant(cfg: dict, base_dir=Path(".")):
    kind = cfg.get("type")
    if kind not in PLANT_KEYS:
        raise ConfigError(f"unknown plant type '{kind}'")
    unknown = set(cfg) - PLANT_KEYS[kind]
    if unknown:
        raise ConfigError(f"plant: unknown key '{sorted(unknown)[0]}'")
    try:
        if kind == "planar_arm":
            model = DynamicsModel(
                cfg["lengths"], cfg["masses"], cfg.get("friction"),
                float(cfg.get("gravity", 9.81)), bool(cfg.get("gravity_enabled", True)),
            )
            q0 = cfg.get("initial_positions", np.zeros(model.n))
            return DynamicPlant(model, q0, cfg.get("initial_velocities"), cfg.get("disturbance"))
        chain = cfg["chain"]
        model = KinematicsModel.from_dict(chain) if isinstance(chain, dict) else KinematicsModel.load(Path(base_dir) / chain)
        q0 = cfg.get("initial_positions", np.zeros(model.n))
        return KinematicPlant(model, q0, cfg.get("rate_limit"))
    except KeyError as exc:
        raise ConfigError(f"plant: missing '{exc.args[0]}'") from None
    except ValueError as exc:
        raise ConfigError(f"plant: {exc}") from None


def build(scenario: Scenario):
    """Plant plus an activated pipeline."""
    plant = build_plant(scenario.plant, scenario.base_dir)
    pipeline = pipeline_build(scenario.pipeline, plant, scenario.period)
    return plant, pipeline


# --------------------------------------------------------------------------
# logging


def log_header(pipeline: Pipeline) -> list:
    n = pipeline.plant.n
    cols = ["time"] + pipeline.channel_names()
    for q in ("position", "velocity", "effort"):
        cols += [f"plant/{q}/{i}" for i in range(n)]
    cols += [f"ee/pose/{a}" for a in POSE_AXES]
    cols += [f"ee/wrench/{a}" for a in WRENCH_AXES]
    return cols


def _row(t: float, pipeline: Pipeline, plant_state, ee: Pose) -> list:
    j = plant_state.joint
    values = np.concatenate([
        [t], pipeline.channel_values(), j.positions, j.velocities, j.efforts,
        ee.position, ee.orientation, plant_state.wrench.as_vector(),
    ])
    return [repr(float(v)) for v in values]


# --------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    exit_code: int
    message: str = ""
    cycles: int = 0
    results: list = field(default_factory=list)  # (label, trajectory id, code name)
    summary: dict = field(default_factory=dict)
    log_path: Optional[Path] = None
    handles: list = field(default_factory=list)


class _Recorder:
    """Outcome of every fired event, in firing order."""

    def __init__(self):
        self.entries = []  # (label, trajectory id or None, ResultCode or GoalHandle)
        self.lock = threading.Lock()

    def fire(self, gen: ReferenceGenerator, ev: Event):
        if ev.action == "publish_reference":
            out = gen.publish_reference(ev.payload)
            if not isinstance(out, ResultCode):
                return
            entry = (ev.label, None, out)
        else:
            out = gen.submit_trajectory(ev.payload)
            entry = (ev.label, ev.payload.id, out)
        with self.lock:
            self.entries.append(entry)

    def results(self) -> list:
        rows = []
        for label, traj_id, out in self.entries:
            if isinstance(out, GoalHandle):
                out = out.result if out.result is not None else out.status
            rows.append((label, traj_id, out.name))
        return rows

    @property
    def handles(self) -> list:
        return [out for _, _, out in self.entries if isinstance(out, GoalHandle)]


def run_scenario(scenario: Scenario, log_path=None, stress: bool = False) -> RunResult:
    """Simulate ``scenario``; never raises for config or runtime faults (see ``exit_code``)."""
    try:
        plant, pipeline = build(scenario)
    except (ConfigError, WiringError) as exc:
        return RunResult(2, str(exc))
    except OSError as exc:
        return RunResult(4, str(exc))

    if log_path is None and scenario.log:
        log_path = scenario.base_dir / scenario.log
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(log_header(pipeline))

    gen = pipeline.generator
    recorder = _Recorder()
    dt = scenario.period
    wall = scenario.wall
    pipeline.activate()

    clock = {"t": -1.0}
    injector = None
    pending = list(scenario.events)
    if stress:
        def inject():
            for ev in scenario.events:
                while clock["t"] < ev.time - 1e-9:
                    if clock["t"] == math.inf:
                        return
                    _time.sleep(0)
                recorder.fire(gen, ev)
        injector = threading.Thread(target=inject, name="timeline-injector", daemon=True)
        injector.start()

    exit_code, message, k = 0, "", 0
    if wall is not None:
        plant.set_wrench(wall_wrench(wall, plant.ee_pose(), plant.ee_twist()))
    try:
        for k in range(scenario.cycles):
            t = k * dt
            clock["t"] = t
            if not stress:
                while pending and pending[0].time <= t + 1e-9:
                    recorder.fire(gen, pending.pop(0))
            state_before = plant.state
            ee = plant.ee_pose()
            command = pipeline.step(t)
            writer.writerow(_row(t, pipeline, state_before, ee))
            plant.apply(command, dt)
            if wall is not None:
                plant.set_wrench(wall_wrench(wall, plant.ee_pose(), plant.ee_twist()))
    except FaultStop as exc:
        exit_code, message = 3, f"FaultStop at cycle {pipeline.cycle_index}: {exc}"
    finally:
        clock["t"] = math.inf
        if injector is not None:
            injector.join(timeout=5.0)
        pipeline.deactivate()

    results = recorder.results()

    text = buffer.getvalue()
    out_path = None
    if log_path is not None:
        out_path = Path(log_path)
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(text)
        except OSError as exc:
            return RunResult(4, str(exc), pipeline.cycle_index, results)

    pairs = scenario.pairs or default_pairs(pipeline)
    summary = summarize_text(text, pairs) if pairs else {}
    return RunResult(exit_code, message, pipeline.cycle_index, results, summary, out_path,
                     recorder.handles)


def run_to_text(scenario: Scenario) -> str:
    """Run deterministically and return the CSV log as text (used by golden checks)."""
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "log.csv"
        res = run_scenario(scenario, log_path=path)
        if res.exit_code != 0:
            raise RuntimeError(res.message)
        return path.read_text()


def default_pairs(pipeline: Pipeline) -> list:
    gen = pipeline.generator
    if "pose/x" in gen.output_keys:
        return [f"{gen.name}/pose=ee/pose"]
    return [f"{gen.name}/position=plant/position"]


# --------------------------------------------------------------------------
# summaries


def read_log(path) -> dict:
    """Column name -> numpy array."""
    return parse_log(Path(path).read_text())


def parse_log(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _stats(e: np.ndarray) -> dict:
    a = np.abs(e)
    return {"max": float(a.max()), "rms": float(np.sqrt(np.mean(e * e))), "final": float(a[-1])}


def _group(log: dict, prefix: str) -> dict:
    prefix = prefix.rstrip("/") + "/"
    cols = {k[len(prefix):]: v for k, v in log.items() if k.startswith(prefix)}
    if not cols:
        raise ReportError(f"no channel starting with '{prefix}' in log")
    return cols


def summarize_log(log: dict, pairs) -> dict:
    """Per pair ``ref=measured``: max/RMS/final of the error per channel.

    Pose groups also get ``position`` (error norm) and ``orientation``
    (relative rotation angle) entries.
    """
    from .core import orientation_error

    report = {}
    for pair in pairs:
        try:
            ref_name, meas_name = pair.split("=")
        except ValueError:
            raise ReportError(f"pair '{pair}' must look like ref/group=measured/group") from None
        ref, meas = _group(log, ref_name), _group(log, meas_name)
        entry = {}
        if set(POSE_AXES) <= set(ref) and set(POSE_AXES) <= set(meas):
            for a in ("x", "y", "z"):
                entry[a] = _stats(ref[a] - meas[a])
            dp = np.stack([ref[a] - meas[a] for a in ("x", "y", "z")], axis=1)
            entry["position"] = _stats(np.linalg.norm(dp, axis=1))
            qr = np.stack([ref[a] for a in ("qw", "qx", "qy", "qz")], axis=1)
            qm = np.stack([meas[a] for a in ("qw", "qx", "qy", "qz")], axis=1)
            angles = np.array([np.linalg.norm(orientation_error(a, b)) for a, b in zip(qr, qm)])
            entry["orientation"] = _stats(angles)
        else:
            missing = sorted(set(ref) - set(meas))
            if missing:
                raise ReportError(f"'{meas_name}/{missing[0]}' not in log")
            for key in ref:
                entry[key] = _stats(ref[key] - meas[key])
        report[pair] = entry
    return report


def summarize_text(text: str, pairs) -> dict:
    return summarize_log(parse_log(text), pairs)


def summarize(path, pairs) -> dict:
    return summarize_log(read_log(path), pairs)
