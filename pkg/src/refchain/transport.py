"""Handoff between non-real-time publishers and the control thread.

Publishers call :meth:`ReferenceInbox.publish_reference` and
:meth:`ReferenceInbox.submit_trajectory` from any thread. Validation runs there,
on the caller's thread. Accepted payloads are wrapped in immutable records and
published by a single attribute store, so the control thread reads either the
previous record or the new one and never a mix of the two.

Control-thread side (``drain``) is wait-free: it performs two attribute loads,
at most one one-shot claim (``list.pop`` on a one-element list, atomic under the
GIL) and never takes a lock. Writers serialize among themselves with a lock
the control thread never touches.

A pending goal can be raced by a newer submission (writer side) and by the
control thread picking it up. Both sides go through the same one-shot claim,
so exactly one of them decides its fate.
"""
from __future__ import annotations

import enum
import itertools
import threading
from dataclasses import dataclass
from typing import Any, Callable, Optional


class ResultCode(enum.Enum):
    SUCCEEDED = "SUCCEEDED"
    ABORTED_BY_NEW_TRAJECTORY = "ABORTED_BY_NEW_TRAJECTORY"
    ABORTED_BY_ONLINE_REFERENCE = "ABORTED_BY_ONLINE_REFERENCE"
    ABORTED_BY_DEACTIVATION = "ABORTED_BY_DEACTIVATION"
    REJECTED_DIMENSION = "REJECTED_DIMENSION"
    REJECTED_NONFINITE = "REJECTED_NONFINITE"
    REJECTED_LIMITS = "REJECTED_LIMITS"
    REJECTED_TIMESTAMPS = "REJECTED_TIMESTAMPS"

    @property
    def rejected(self) -> bool:
        return self.name.startswith("REJECTED")


class GoalStatus(enum.Enum):
    PENDING = "PENDING"
    EXECUTING = "EXECUTING"
    TERMINAL = "TERMINAL"


class ProtocolError(RuntimeError):
    """Illegal goal-handle transition, e.g. resolving an already finished goal."""


@dataclass(frozen=True)
class Feedback:
    fraction: float
    sample: Any


class GoalHandle:
    """Client-visible view of one submitted trajectory."""

    def __init__(self, trajectory):
        self.trajectory = trajectory
        self.id = trajectory.id
        self.status = GoalStatus.PENDING
        self.result: Optional[ResultCode] = None
        self.feedback: Optional[Feedback] = None
        self._pickup = [True]
        self._resolve = [True]
        self._done = threading.Event()

    def __repr__(self):
        return f"GoalHandle(id={self.id}, status={self.status.name}, result={self.result})"

    def _claim_pickup(self) -> bool:
        try:
            self._pickup.pop()
        except IndexError:
            return False
        return True

    def mark_executing(self):
        if self.status is not GoalStatus.PENDING:
            raise ProtocolError(f"goal {self.id} is {self.status.name}, cannot start")
        self.status = GoalStatus.EXECUTING

    def update_feedback(self, fraction: float, sample):
        if self.status is not GoalStatus.EXECUTING:
            raise ProtocolError(f"feedback on goal {self.id} while {self.status.name}")
        self.feedback = Feedback(min(1.0, max(0.0, float(fraction))), sample)

    def resolve(self, code: ResultCode):
        try:
            self._resolve.pop()
        except IndexError:
            raise ProtocolError(f"goal {self.id} already resolved as {self.result}") from None
        self.result = code
        self.status = GoalStatus.TERMINAL
        self._done.set()

    @property
    def done(self) -> bool:
        return self.status is GoalStatus.TERMINAL

    def wait(self, timeout: Optional[float] = None) -> Optional[ResultCode]:
        self._done.wait(timeout)
        return self.result


# events consumed by the generator state machine


@dataclass(frozen=True, eq=False)
class TopicReference:
    reference: Any
    arrival: int = 0


@dataclass(frozen=True, eq=False)
class NewTrajectory:
    trajectory: Any
    handle: Optional[GoalHandle] = None
    arrival: int = 0
    start: float = 0.0  # seconds, filled in when the control thread accepts it
    start_cycle: int = 0


@dataclass(frozen=True, eq=False)
class TrajectoryFinished:
    pass


@dataclass(frozen=True, eq=False)
class Deactivate:
    pass


@dataclass(frozen=True, eq=False)
class _TopicSlot:
    seq: int
    arrival: int
    reference: Any


@dataclass(frozen=True, eq=False)
class _GoalSlot:
    arrival: int
    handle: GoalHandle


class ReferenceInbox:
    """Single-slot topic mailbox plus single-slot pending-goal cell."""

    def __init__(self, validate_reference: Callable, validate_trajectory: Callable):
        self._validate_reference = validate_reference
        self._validate_trajectory = validate_trajectory
        self._write_lock = threading.Lock()
        self._arrivals = itertools.count(1)
        self._topic: Optional[_TopicSlot] = None
        self._goal: Optional[_GoalSlot] = None
        # control-thread bookkeeping
        self._seen_topic = 0
        self._seen_goal: Optional[_GoalSlot] = None

    # -- publisher side -----------------------------------------------------

    @property
    def sequence(self) -> int:
        slot = self._topic
        return 0 if slot is None else slot.seq

    def publish_reference(self, reference):
        """Validate and post a topic reference; returns True or a rejection code."""
        code = self._validate_reference(reference)
        if code is not None:
            return code
        with self._write_lock:
            prev = self._topic
            self._topic = _TopicSlot((0 if prev is None else prev.seq) + 1, next(self._arrivals), reference)
        return True

    def submit_trajectory(self, trajectory):
        """Validate and post a goal; returns a :class:`GoalHandle` or a rejection code."""
        code = self._validate_trajectory(trajectory)
        if code is not None:
            return code
        handle = GoalHandle(trajectory)
        with self._write_lock:
            old = self._goal
            self._goal = _GoalSlot(next(self._arrivals), handle)
        if old is not None and old.handle._claim_pickup():
            old.handle.resolve(ResultCode.ABORTED_BY_NEW_TRAJECTORY)
        return handle

    # -- control-thread side --------------------------------------------------

    def drain(self) -> list:
        """Events that arrived since the previous drain, in arrival order."""
        events = []
        topic = self._topic
        if topic is not None and topic.seq != self._seen_topic:
            self._seen_topic = topic.seq
            events.append(TopicReference(topic.reference, topic.arrival))
        goal = self._goal
        if goal is not None and goal is not self._seen_goal:
            self._seen_goal = goal
            if goal.handle._claim_pickup():
                events.append(NewTrajectory(goal.handle.trajectory, goal.handle, goal.arrival))
        if len(events) == 2 and events[1].arrival < events[0].arrival:
            events.reverse()
        return events

    def abort_pending(self, code: ResultCode = ResultCode.ABORTED_BY_DEACTIVATION):
        """Resolve a goal still waiting in the cell (used on deactivation).

        Returns the handle it resolved, or ``None``.
        """
        goal = self._goal
        if goal is not None and goal is not self._seen_goal:
            self._seen_goal = goal
            if goal.handle._claim_pickup():
                goal.handle.resolve(code)
                return goal.handle
        return None
