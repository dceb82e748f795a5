"""Reference generators: validation, the two-state FSM, interpolation, chained output.

A generator sits at the head of a pipeline. External code talks to it only
through its :class:`~refchain.transport.ReferenceInbox` (``gen.inbox``):
``publish_reference`` for latest-value setpoints and ``submit_trajectory`` for
timed waypoint sequences. Once per control cycle the generator drains the
inbox, advances its state machine and writes exactly one reference sample.

Trajectory timestamps are relative to the cycle in which the trajectory is
accepted. Between waypoints, positions are interpolated linearly (slerp for
orientations) and velocities are the segment's finite-difference slope.
"""
from __future__ import annotations

import bisect
import enum
import itertools
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional, Union

import numpy as np

from .chain import Component, Cycle, RobotView, register
from .core import Pose, Twist, Wrench, canonical, orientation_error, quat_slerp
from .transport import (
    Deactivate,
    NewTrajectory,
    ReferenceInbox,
    ResultCode,
    TopicReference,
    TrajectoryFinished,
)

# Test hook: called with no arguments every time validation code runs.
VALIDATION_PROBE = None

# Elapsed times within this distance of a waypoint timestamp snap onto it.
TIME_EPS = 1e-9

_ids = itertools.count(1)


@dataclass(frozen=True, eq=False)
class JointReference:
    positions: np.ndarray
    velocities: Optional[np.ndarray] = None

    @classmethod
    def make(cls, positions, velocities=None) -> "JointReference":
        p = np.array(positions, dtype=float).reshape(-1)
        v = np.zeros_like(p) if velocities is None else np.array(velocities, dtype=float).reshape(-1)
        return cls(p, v)

    def velocity_or_zero(self) -> np.ndarray:
        return np.zeros_like(self.positions) if self.velocities is None else self.velocities


@dataclass(frozen=True, eq=False)
class TaskReference:
    pose: Pose
    twist: Optional[Twist] = None
    wrench: Optional[Wrench] = None

    def twist_or_zero(self) -> Twist:
        return Twist() if self.twist is None else self.twist

    def wrench_or_zero(self) -> Wrench:
        return Wrench() if self.wrench is None else self.wrench


Reference = Union[JointReference, TaskReference]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Waypoints as ``(t, reference)`` pairs, ``t`` relative to acceptance [s]."""

    waypoints: tuple
    id: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple((float(t), r) for t, r in self.waypoints))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.waypoints])

    @property
    def duration(self) -> float:
        return self.waypoints[-1][0]


@dataclass(frozen=True, eq=False)
class Limits:
    position_min: np.ndarray = None
    position_max: np.ndarray = None
    velocity_max: np.ndarray = None
    workspace_min: np.ndarray = None
    workspace_max: np.ndarray = None
    speed_max: float = np.inf

    @classmethod
    def joint(cls, n, position_min=-np.inf, position_max=np.inf, velocity_max=np.inf) -> "Limits":
        lo = _vec(position_min, n, "position_min")
        hi = _vec(position_max, n, "position_max")
        vmax = _vec(velocity_max, n, "velocity_max")
        if np.any(lo > hi):
            raise ValueError("position_min must not exceed position_max")
        if np.any(vmax <= 0):
            raise ValueError("velocity_max must be > 0")
        return cls(position_min=lo, position_max=hi, velocity_max=vmax)

    @classmethod
    def task(cls, workspace_min=-np.inf, workspace_max=np.inf, speed_max=np.inf) -> "Limits":
        lo = _vec(workspace_min, 3, "workspace_min")
        hi = _vec(workspace_max, 3, "workspace_max")
        if np.any(lo > hi):
            raise ValueError("workspace_min must not exceed workspace_max")
        if not float(speed_max) > 0:
            raise ValueError("speed_max must be > 0")
        return cls(workspace_min=lo, workspace_max=hi, speed_max=float(speed_max))


def _vec(value, n, name):
    v = np.array(value, dtype=float)
    if v.ndim == 0:
        return np.full(n, float(v))
    if v.shape != (n,):
        raise ValueError(f"{name} length: expected {n}, got {v.size}")
    return v


# --------------------------------------------------------------------------
# validation (runs on the publishing thread)


def _probe():
    if VALIDATION_PROBE is not None:
        VALIDATION_PROBE()


def _all_finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def validate_reference(ref, limits: Limits, expected_dim: int) -> Optional[ResultCode]:
    """``None`` if ``ref`` is acceptable, otherwise the first failing rejection code.

    Checks run in the order dimension, non-finite, limits.
    """
    _probe()
    if isinstance(ref, JointReference):
        p = np.asarray(ref.positions, dtype=float)
        v = None if ref.velocities is None else np.asarray(ref.velocities, dtype=float)
        if p.shape != (expected_dim,) or (v is not None and v.shape != (expected_dim,)):
            return ResultCode.REJECTED_DIMENSION
        if not _all_finite(p, v if v is not None else 0.0):
            return ResultCode.REJECTED_NONFINITE
        if limits.position_min is not None and np.any(p < limits.position_min):
            return ResultCode.REJECTED_LIMITS
        if limits.position_max is not None and np.any(p > limits.position_max):
            return ResultCode.REJECTED_LIMITS
        if v is not None and limits.velocity_max is not None and np.any(np.abs(v) > limits.velocity_max):
            return ResultCode.REJECTED_LIMITS
        return None
    if isinstance(ref, TaskReference):
        if expected_dim != 7:
            return ResultCode.REJECTED_DIMENSION
        pos = np.asarray(ref.pose.position, dtype=float)
        quat = np.asarray(ref.pose.orientation, dtype=float)
        try:
            extras = [np.asarray(x.as_vector(), dtype=float) for x in (ref.twist, ref.wrench) if x is not None]
        except ValueError:
            return ResultCode.REJECTED_DIMENSION
        if pos.shape != (3,) or quat.shape != (4,) or any(e.shape != (6,) for e in extras):
            return ResultCode.REJECTED_DIMENSION
        if not _all_finite(pos, quat, *extras):
            return ResultCode.REJECTED_NONFINITE
        if abs(np.linalg.norm(quat) - 1.0) > 1e-6:
            return ResultCode.REJECTED_NONFINITE
        if limits.workspace_min is not None and np.any(pos < limits.workspace_min):
            return ResultCode.REJECTED_LIMITS
        if limits.workspace_max is not None and np.any(pos > limits.workspace_max):
            return ResultCode.REJECTED_LIMITS
        if ref.twist is not None and np.linalg.norm(ref.twist.linear) > limits.speed_max:
            return ResultCode.REJECTED_LIMITS
        return None
    return ResultCode.REJECTED_DIMENSION


def validate_trajectory(traj: Trajectory, limits: Limits, expected_dim: int) -> Optional[ResultCode]:
    """Per-waypoint checks and timestamp monotonicity, then implied segment speeds."""
    _probe()
    wps = traj.waypoints
    if not wps:
        return ResultCode.REJECTED_DIMENSION
    variant = type(wps[0][1])
    prev_t = None
    for t, ref in wps:
        if type(ref) is not variant:
            return ResultCode.REJECTED_DIMENSION
        code = validate_reference(ref, limits, expected_dim)
        if code is not None:
            return code
        if not np.isfinite(t):
            return ResultCode.REJECTED_NONFINITE
        if (prev_t is None and t < 0.0) or (prev_t is not None and t <= prev_t):
            return ResultCode.REJECTED_TIMESTAMPS
        prev_t = t
    for (t0, a), (t1, b) in zip(wps, wps[1:]):
        dt = t1 - t0
        if variant is JointReference:
            if limits.velocity_max is not None and np.any(np.abs(b.positions - a.positions) / dt > limits.velocity_max):
                return ResultCode.REJECTED_LIMITS
        elif np.linalg.norm(np.asarray(b.pose.position) - a.pose.position) / dt > limits.speed_max:
            return ResultCode.REJECTED_LIMITS
    return None


# --------------------------------------------------------------------------
# state machine


class FsmState(enum.Enum):
    ONLINE_REFERENCE = "ONLINE_REFERENCE"
    TRAJECTORY_EXECUTION = "TRAJECTORY_EXECUTION"


@dataclass(frozen=True, eq=False)
class GeneratorState:
    fsm: FsmState
    held: Reference
    active: Optional[NewTrajectory] = None

    def __post_init__(self):
        if (self.active is not None) != (self.fsm is FsmState.TRAJECTORY_EXECUTION):
            raise ValueError("an active trajectory exists iff the FSM is executing")


def final_hold(traj: Trajectory) -> Reference:
    """Terminal hold of a trajectory: its last waypoint at rest."""
    last = traj.waypoints[-1][1]
    if isinstance(last, JointReference):
        return JointReference(last.positions.copy(), np.zeros_like(last.positions))
    pose = Pose(np.asarray(last.pose.position, dtype=float), canonical(last.pose.orientation))
    return TaskReference(pose, Twist(), last.wrench_or_zero())


def fsm_transition(state: GeneratorState, event):
    """Pure transition function. Returns ``(new_state, [(trajectory_id, ResultCode), ...])``."""
    active = state.active
    online, executing = FsmState.ONLINE_REFERENCE, FsmState.TRAJECTORY_EXECUTION
    if isinstance(event, TopicReference):
        results = [] if active is None else [(active.trajectory.id, ResultCode.ABORTED_BY_ONLINE_REFERENCE)]
        return GeneratorState(online, event.reference), results
    if isinstance(event, NewTrajectory):
        results = [] if active is None else [(active.trajectory.id, ResultCode.ABORTED_BY_NEW_TRAJECTORY)]
        return GeneratorState(executing, state.held, event), results
    if isinstance(event, TrajectoryFinished):
        if active is None:
            return state, []
        return GeneratorState(online, final_hold(active.trajectory)), [(active.trajectory.id, ResultCode.SUCCEEDED)]
    if isinstance(event, Deactivate):
        results = [] if active is None else [(active.trajectory.id, ResultCode.ABORTED_BY_DEACTIVATION)]
        return GeneratorState(online, state.held), results
    raise TypeError(f"unknown event {event!r}")


# --------------------------------------------------------------------------
# interpolation


def _locate(times, elapsed):
    """Return ``(k, s)`` for the segment containing ``elapsed``, or a hold marker."""
    first, last = times[0], times[-1]
    if elapsed < first - TIME_EPS:
        return "before", 0, 0.0
    if elapsed >= last - TIME_EPS:
        return "after", len(times) - 1, 0.0
    k = bisect.bisect_right(times, elapsed + TIME_EPS) - 1
    k = min(max(k, 0), len(times) - 2)
    t0, t1 = times[k], times[k + 1]
    if abs(elapsed - t0) <= TIME_EPS:
        return "inside", k, 0.0
    return "inside", k, (elapsed - t0) / (t1 - t0)


def interpolate_joint(traj: Trajectory, elapsed: float):
    """Sample a joint trajectory. Returns ``(JointReference, finished)``."""
    wps = traj.waypoints
    where, k, s = _locate([t for t, _ in wps], elapsed)
    if where != "inside":
        p = wps[k][1].positions
        return JointReference(p.copy(), np.zeros_like(p)), where == "after"
    (t0, a), (t1, b) = wps[k], wps[k + 1]
    dp = b.positions - a.positions
    return JointReference(a.positions + s * dp, dp / (t1 - t0)), False


def interpolate_task(traj: Trajectory, elapsed: float):
    """Sample a task trajectory. Returns ``(TaskReference, finished)``."""
    wps = traj.waypoints
    where, k, s = _locate([t for t, _ in wps], elapsed)
    if where != "inside":
        ref = wps[k][1]
        pose = Pose(np.asarray(ref.pose.position, dtype=float), canonical(ref.pose.orientation))
        return TaskReference(pose, Twist(), ref.wrench_or_zero()), where == "after"
    (t0, a), (t1, b) = wps[k], wps[k + 1]
    span = t1 - t0
    dp = b.pose.position - a.pose.position
    pose = Pose(a.pose.position + s * dp, quat_slerp(a.pose.orientation, b.pose.orientation, s))
    twist = Twist(dp / span, orientation_error(b.pose.orientation, a.pose.orientation) / span)
    ha, hb = a.wrench_or_zero().as_vector(), b.wrench_or_zero().as_vector()
    return TaskReference(pose, twist, Wrench.from_vector(ha + s * (hb - ha))), False


# --------------------------------------------------------------------------
# chainable generators


class ReferenceGenerator(Component):
    kind = "reference_generator"
    expected_dim = 0

    def __init__(self, name):
        super().__init__(name)
        self.state: Optional[GeneratorState] = None
        self.inbox: Optional[ReferenceInbox] = None
        self.limits: Optional[Limits] = None
        self.last_sample: Optional[Reference] = None
        self.results: list = []  # (trajectory id, ResultCode) in resolution order
        self._handles: dict = {}

    def _make_inbox(self):
        self.inbox = ReferenceInbox(
            partial(validate_reference, limits=self.limits, expected_dim=self.expected_dim),
            partial(validate_trajectory, limits=self.limits, expected_dim=self.expected_dim),
        )

    # convenience pass-throughs for publishers
    def publish_reference(self, ref):
        return self.inbox.publish_reference(ref)

    def submit_trajectory(self, traj):
        return self.inbox.submit_trajectory(traj)

    @property
    def fsm(self) -> FsmState:
        return self.state.fsm

    def on_activate(self, robot: RobotView):
        self.state = GeneratorState(FsmState.ONLINE_REFERENCE, self.hold_from_robot(robot))
        self.last_sample = self.state.held

    def on_deactivate(self):
        self._apply(Deactivate())
        pending = self.inbox.abort_pending()
        if pending is not None:
            self.results.append((pending.id, pending.result))

    def _apply(self, event):
        if isinstance(event, NewTrajectory) and event.handle is not None:
            self._handles[event.trajectory.id] = event.handle
            event.handle.mark_executing()
        self.state, results = fsm_transition(self.state, event)
        for traj_id, code in results:
            self.results.append((traj_id, code))
            handle = self._handles.pop(traj_id, None)
            if handle is not None:
                handle.resolve(code)

    def update(self, cycle: Cycle, inputs, robot: RobotView) -> np.ndarray:
        for event in self.inbox.drain():
            if isinstance(event, NewTrajectory):
                event = replace(event, start=cycle.t, start_cycle=cycle.index)
            self._apply(event)
        state = self.state
        if state.fsm is FsmState.TRAJECTORY_EXECUTION:
            active = state.active
            elapsed = (cycle.index - active.start_cycle) * cycle.dt
            sample, finished = self.interpolate(active.trajectory, elapsed)
            handle = active.handle
            if handle is not None:
                duration = active.trajectory.duration
                handle.update_feedback(1.0 if duration <= 0 else elapsed / duration, sample)
            if finished:
                self._apply(TrajectoryFinished())
                sample = self.state.held
        else:
            sample = state.held
        self.last_sample = sample
        return self.encode(sample)

    # subclass hooks
    def hold_from_robot(self, robot: RobotView) -> Reference:
        raise NotImplementedError

    def interpolate(self, traj, elapsed):
        raise NotImplementedError

    def encode(self, sample) -> np.ndarray:
        raise NotImplementedError


@register("joint_reference_generator")
class JointReferenceGenerator(ReferenceGenerator):
    """Joint-space generator. Port: ``position/i`` then ``velocity/i``."""

    PARAMS = {"position_min": False, "position_max": False, "velocity_max": False}

    def setup(self, params, n_joints):
        self.expected_dim = n_joints
        self.limits = Limits.joint(
            n_joints,
            params.get("position_min", -np.inf),
            params.get("position_max", np.inf),
            params.get("velocity_max", np.inf),
        )
        self.output_keys = [f"position/{i}" for i in range(n_joints)] + [f"velocity/{i}" for i in range(n_joints)]
        self._make_inbox()

    def hold_from_robot(self, robot):
        return JointReference(robot.q.copy(), np.zeros(robot.n))

    def interpolate(self, traj, elapsed):
        return interpolate_joint(traj, elapsed)

    def encode(self, sample: JointReference):
        return np.concatenate([sample.positions, sample.velocity_or_zero()])


POSE_KEYS = ["pose/x", "pose/y", "pose/z", "pose/qw", "pose/qx", "pose/qy", "pose/qz"]
TWIST_KEYS = ["twist/vx", "twist/vy", "twist/vz", "twist/wx", "twist/wy", "twist/wz"]
WRENCH_KEYS = ["wrench/fx", "wrench/fy", "wrench/fz", "wrench/tx", "wrench/ty", "wrench/tz"]


@register("task_reference_generator")
class TaskReferenceGenerator(ReferenceGenerator):
    """Cartesian generator. Port: pose (7), twist (6), feedforward wrench (6)."""

    PARAMS = {"workspace_min": False, "workspace_max": False, "speed_max": False}
    expected_dim = 7

    def setup(self, params, n_joints):
        self.limits = Limits.task(
            params.get("workspace_min", -np.inf),
            params.get("workspace_max", np.inf),
            params.get("speed_max", np.inf),
        )
        self.output_keys = POSE_KEYS + TWIST_KEYS + WRENCH_KEYS
        self._make_inbox()

    def hold_from_robot(self, robot):
        pose = robot.pose
        return TaskReference(Pose(pose.position.copy(), canonical(pose.orientation)), Twist(), Wrench())

    def interpolate(self, traj, elapsed):
        return interpolate_task(traj, elapsed)

    def encode(self, sample: TaskReference):
        return np.concatenate([
            sample.pose.position,
            canonical(sample.pose.orientation),
            sample.twist_or_zero().as_vector(),
            sample.wrench_or_zero().as_vector(),
        ])


def decode_task(values) -> TaskReference:
    """Inverse of the task generator's port encoding (first 19 channels)."""
    v = np.asarray(values, dtype=float)
    return TaskReference(Pose(v[:3], v[3:7]), Twist.from_vector(v[7:13]), Wrench.from_vector(v[13:19]))


__all__ = [
    "JointReference",
    "TaskReference",
    "Trajectory",
    "Limits",
    "FsmState",
    "GeneratorState",
    "ResultCode",
    "validate_reference",
    "validate_trajectory",
    "fsm_transition",
    "interpolate_joint",
    "interpolate_task",
    "JointReferenceGenerator",
    "TaskReferenceGenerator",
]
