"""Publisher-versus-control-thread handoff stress used by the transport and acceptance tests."""
import random
import sys
import threading
import time
from dataclasses import dataclass
from functools import partial

import numpy as np

from refchain import refgen
from refchain.refgen import JointReference, Limits, Trajectory, validate_reference, validate_trajectory
from refchain.transport import NewTrajectory, ProtocolError, ReferenceInbox, ResultCode, TopicReference

N = 6
BUDGET = 1e-3  # one 1 kHz control period
WEIGHTS = np.arange(1.0, N)


def stamped(k: int) -> np.ndarray:
    """Payload whose last entry is a checksum of the others."""
    v = np.empty(N)
    v[0] = k
    v[1:N - 1] = np.sin(k * np.arange(1, N - 1))
    v[N - 1] = v[: N - 1] @ WEIGHTS
    return v


def intact(v) -> bool:
    return v[N - 1] == v[: N - 1] @ WEIGHTS


@dataclass
class StressReport:
    cycles: int
    published: int
    submitted: int
    received: int
    torn: int
    stale: int
    missed: int
    worst_cpu: float
    worst_wall: float
    wall_overruns: int
    control_validations: int
    publisher_validations: int
    unresolved: int
    double_resolved: int


def run_handoff_stress(cycles: int, goal_every: int = 50) -> StressReport:
    """Drive ``cycles`` control-side drains against one saturating publisher.

    The control loop runs unpaced. A cycle counts as missed when the control
    thread spends more than the 1 ms period budget of its own CPU time on it.
    Wall-clock overruns are reported separately: under the GIL they measure
    interpreter scheduling, which a lock-free drain cannot influence.
    """
    limits = Limits.joint(N)
    inbox = ReferenceInbox(
        partial(validate_reference, limits=limits, expected_dim=N),
        partial(validate_trajectory, limits=limits, expected_dim=N),
    )
    control = threading.get_ident()
    counts = {"control": 0, "publisher": 0}

    def probe():
        counts["control" if threading.get_ident() == control else "publisher"] += 1

    stop = threading.Event()
    handles = []
    errors = []  # ProtocolError from a second resolution attempt
    sent = [0]

    def publisher():
        k = 0
        while not stop.is_set():
            k += 1
            try:
                if k % goal_every == 0:
                    wp = JointReference(stamped(k), np.zeros(N))
                    handles.append(inbox.submit_trajectory(Trajectory(((0.0, wp), (1.0, wp)))))
                else:
                    inbox.publish_reference(JointReference(stamped(k), np.zeros(N)))
            except ProtocolError:
                errors.append(k)
        sent[0] = k

    old_probe, old_switch = refgen.VALIDATION_PROBE, sys.getswitchinterval()
    refgen.VALIDATION_PROBE = probe
    sys.setswitchinterval(5e-5)
    thread = threading.Thread(target=publisher, daemon=True)
    torn = stale = missed = received = overruns = 0
    worst_cpu = worst_wall = 0.0
    last_seen = 0.0
    clock, cpu = time.perf_counter, time.thread_time
    try:
        thread.start()
        while not sent[0] and not inbox.sequence:
            time.sleep(0)
        for _ in range(cycles):
            t0, c0 = clock(), cpu()
            for ev in inbox.drain():
                if isinstance(ev, TopicReference):
                    v = ev.reference.positions
                elif isinstance(ev, NewTrajectory):
                    v = ev.trajectory.waypoints[0][1].positions
                    try:
                        ev.handle.mark_executing()
                        ev.handle.resolve(ResultCode.SUCCEEDED)
                    except ProtocolError:
                        errors.append(ev.handle.id)
                else:
                    continue
                received += 1
                if not intact(v):
                    torn += 1
                if isinstance(ev, TopicReference):
                    if v[0] < last_seen:
                        stale += 1
                    last_seen = v[0]
            wall, used = clock() - t0, cpu() - c0
            worst_wall = max(worst_wall, wall)
            worst_cpu = max(worst_cpu, used)
            missed += used > BUDGET
            overruns += wall > BUDGET
    finally:
        stop.set()
        thread.join()
        refgen.VALIDATION_PROBE = old_probe
        sys.setswitchinterval(old_switch)
    inbox.abort_pending()  # the last submission may still sit in the cell
    unresolved = sum(1 for h in handles if h.result is None)
    return StressReport(
        cycles=cycles,
        published=sent[0] - len(handles),
        submitted=len(handles),
        received=received,
        torn=torn,
        stale=stale,
        missed=missed,
        worst_cpu=worst_cpu,
        worst_wall=worst_wall,
        wall_overruns=overruns,
        control_validations=counts["control"],
        publisher_validations=counts["publisher"],
        unresolved=unresolved,
        double_resolved=len(errors),
    )


def random_interleavings(schedules: int, seed: int = 20240611):
    """Random op sequences (submit, publish, reject, cycle) then deactivate.

    Returns ``(goals, violations)``: every accepted goal must end with exactly
    one code, and the generator's log must agree with the handle.
    """
    from conftest import planar_plant
    from refchain.chain import Cycle, RobotView
    from refchain.refgen import JointReferenceGenerator
    from refchain.transport import GoalHandle

    rng = random.Random(seed)
    start = JointReference.make([0.0, 0.0, 0.0])
    goals = violations = 0
    for _ in range(schedules):
        plant = planar_plant(q0=(0.0, 0.0, 0.0), gravity=False)
        gen = JointReferenceGenerator("jrg").configure({"velocity_max": 500.0}, 3)
        robot = RobotView(plant)
        gen.activate(robot)
        handles, index = [], 0
        try:
            for _ in range(rng.randint(1, 25)):
                op = rng.random()
                if op < 0.35:
                    duration = rng.choice([0.0, 0.001, 0.002, 0.005])
                    end = JointReference.make([0.1, 0.1, 0.1])
                    wps = ((0.0, end),) if duration == 0.0 else ((0.0, start), (duration, end))
                    h = gen.submit_trajectory(Trajectory(wps))
                    violations += not isinstance(h, GoalHandle)
                    handles.append(h)
                elif op < 0.5:
                    violations += gen.publish_reference(JointReference.make([0.2, 0.0, -0.2])) is not True
                elif op < 0.55:
                    bad = Trajectory(((0.0, start), (0.001, JointReference.make([5.0, 5.0, 5.0]))))
                    violations += gen.submit_trajectory(bad) is not ResultCode.REJECTED_LIMITS
                else:
                    gen.update(Cycle(index, index * 1e-3, 1e-3), None, robot)
                    index += 1
            gen.deactivate()
        except ProtocolError:
            violations += 1
            continue
        ids = [tid for tid, _ in gen.results]
        violations += len(ids) != len(set(ids))
        for h in handles:
            goals += 1
            logged = [c for tid, c in gen.results if tid == h.id]
            if h.result is None:
                violations += 1
            elif logged != [h.result] and not (h.result is ResultCode.ABORTED_BY_NEW_TRAJECTORY and not logged):
                # a goal superseded while still pending never reaches the generator
                violations += 1
    return goals, violations
