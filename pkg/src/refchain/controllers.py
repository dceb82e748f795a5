"""Chainable control laws.

Each law is available twice: as a pure function of (inputs, explicit state,
params) and as a registered :class:`~refchain.chain.Component` that reads its
reference from the upstream port and the plant's state interfaces.

==========  ==================================  ===========================
type        reads                               writes
==========  ==================================  ===========================
pdgc        position/i                          effort/i
pid         position/i, velocity/i              effort/i
admittance  pose, twist, wrench                 pose, twist
cpc         pose, twist                         position/i, velocity/i
==========  ==================================  ===========================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import Component, ConfigError, Cycle, RobotView, register
from .core import Pose, Twist, Wrench, dls_pinv, exp_map, gain_vector, pose_error, quat_multiply
from .refgen import POSE_KEYS, TWIST_KEYS, WRENCH_KEYS


def _joint_keys(quantity, n):
    return [f"{quantity}/{i}" for i in range(n)]


# --------------------------------------------------------------------------
# PD with gravity compensation


@dataclass(frozen=True, eq=False)
class PdgcParams:
    kp: np.ndarray
    kd: np.ndarray


def pdgc_update(q_d, q, qdot, params: PdgcParams, gravity) -> np.ndarray:
    return params.kp * (q_d - q) - params.kd * qdot + gravity


@register("pdgc")
class PdgcController(Component):
    PARAMS = {"kp": True, "kd": True}

    def setup(self, params, n):
        self.gains = PdgcParams(
            gain_vector(params["kp"], n, "kp", positive=True),
            gain_vector(params["kd"], n, "kd", positive=True),
        )
        self.input_keys = _joint_keys("position", n)
        self.output_keys = _joint_keys("effort", n)

    def update(self, cycle: Cycle, inputs, robot: RobotView):
        return pdgc_update(inputs, robot.q, robot.qdot, self.gains, robot.gravity)


# --------------------------------------------------------------------------
# PID


@dataclass(frozen=True, eq=False)
class PidParams:
    kp: np.ndarray
    kd: np.ndarray
    ki: np.ndarray
    i_clamp: np.ndarray


@dataclass(frozen=True, eq=False)
class PidState:
    integral: np.ndarray


def pid_update(q_d, qdot_d, q, qdot, state: PidState, params: PidParams, dt: float):
    """Rectangle-rule integral with elementwise anti-windup clamp."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = q_d - q
    integral = np.clip(state.integral + e * dt, -params.i_clamp, params.i_clamp)
    tau = params.kp * e + params.kd * (qdot_d - qdot) + params.ki * integral
    return tau, PidState(integral)


@register("pid")
class PidController(Component):
    PARAMS = {"kp": True, "kd": False, "ki": False, "i_clamp": False}

    def setup(self, params, n):
        # no clamp unless configured
        clamp = np.full(n, np.inf)
        if "i_clamp" in params:
            clamp = gain_vector(params["i_clamp"], n, "i_clamp", positive=True)
        self.gains = PidParams(
            gain_vector(params["kp"], n, "kp", positive=True),
            gain_vector(params.get("kd", 0.0), n, "kd"),
            gain_vector(params.get("ki", 0.0), n, "ki"),
            clamp,
        )
        self.n = n
        self.input_keys = _joint_keys("position", n) + _joint_keys("velocity", n)
        self.output_keys = _joint_keys("effort", n)

    def on_activate(self, robot):
        self.state = PidState(np.zeros(self.n))

    def update(self, cycle, inputs, robot):
        n = self.n
        tau, self.state = pid_update(inputs[:n], inputs[n:], robot.q, robot.qdot, self.state, self.gains, cycle.dt)
        return tau


# --------------------------------------------------------------------------
# admittance


@dataclass(frozen=True, eq=False)
class AdmittanceParams:
    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray


@dataclass(frozen=True, eq=False)
class AdmittanceState:
    error: np.ndarray  # x_d - x_c: 3 position [m] + 3 rotation vector [rad]
    rate: np.ndarray

    @classmethod
    def zero(cls):
        return cls(np.zeros(6), np.zeros(6))


def admittance_update(x_d: Pose, v_d: Twist, h_d: Wrench, h_e: Wrench,
                      state: AdmittanceState, params: AdmittanceParams, dt: float):
    """Advance the virtual mass-spring-damper on the task error (semi-implicit Euler).

    Returns the commanded pose ``x_d - error``, the commanded twist
    ``v_d - rate`` and the new state.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    forcing = h_d.as_vector() - h_e.as_vector()
    acc = (forcing - params.damping * state.rate - params.stiffness * state.error) / params.mass
    rate = state.rate + acc * dt
    error = state.error + rate * dt
    rot = error[3:]
    if np.any(rot):
        orientation = quat_multiply(exp_map(-rot), x_d.orientation)
    else:
        orientation = x_d.orientation
    x_c = Pose(x_d.position - error[:3], orientation)
    v_c = Twist(v_d.linear - rate[:3], v_d.angular - rate[3:])
    return x_c, v_c, AdmittanceState(error, rate)


@register("admittance")
class AdmittanceController(Component):
    PARAMS = {"mass": True, "damping": True, "stiffness": True}

    def setup(self, params, n):
        try:
            mass = gain_vector(params["mass"], 6, "mass", positive=True)
        except ValueError as exc:
            if "> 0" in str(exc):
                raise ConfigError(f"{self.name}: mass must be > 0") from None
            raise
        self.gains = AdmittanceParams(
            mass,
            gain_vector(params["damping"], 6, "damping"),
            gain_vector(params["stiffness"], 6, "stiffness"),
        )
        self.input_keys = POSE_KEYS + TWIST_KEYS + WRENCH_KEYS
        self.output_keys = POSE_KEYS + TWIST_KEYS

    def on_activate(self, robot):
        self.state = AdmittanceState.zero()

    def update(self, cycle, inputs, robot):
        x_d = Pose(inputs[0:3], inputs[3:7])
        v_d = Twist(inputs[7:10], inputs[10:13])
        h_d = Wrench(inputs[13:16], inputs[16:19])
        h_e = Wrench(robot.wrench[:3], robot.wrench[3:])
        x_c, v_c, self.state = admittance_update(x_d, v_d, h_d, h_e, self.state, self.gains, cycle.dt)
        return np.concatenate([x_c.position, x_c.orientation, v_c.linear, v_c.angular])


# --------------------------------------------------------------------------
# Cartesian pose control


@dataclass(frozen=True, eq=False)
class CpcParams:
    kp: np.ndarray
    dls_lambda: float = 0.0


def cpc_update(x_d: Pose, v_d: Twist, q_command, J, x: Pose, params: CpcParams, dt: float):
    """Joint velocity from the DLS inverse, integrated onto the previous command.

    ``q_command`` is the controller's own integrator state (seeded from the
    measured joints at activation), not the measured position.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = params.kp * pose_error(x_d, x) + v_d.as_vector()
    qdot_c = dls_pinv(J, params.dls_lambda) @ u
    return qdot_c, q_command + qdot_c * dt


@register("cpc")
class CartesianPoseController(Component):
    PARAMS = {"kp": True, "dls_lambda": False}

    def setup(self, params, n):
        lam = float(params.get("dls_lambda", 0.0))
        if not (lam >= 0 and np.isfinite(lam)):
            raise ConfigError(f"{self.name}: dls_lambda must be >= 0")
        self.gains = CpcParams(gain_vector(params["kp"], 6, "kp", positive=True), lam)
        self.n = n
        self.input_keys = POSE_KEYS + TWIST_KEYS
        self.output_keys = _joint_keys("position", n) + _joint_keys("velocity", n)

    def on_activate(self, robot):
        self.q_command = robot.q.copy()

    def update(self, cycle, inputs, robot):
        x_d = Pose(inputs[0:3], inputs[3:7])
        v_d = Twist(inputs[7:10], inputs[10:13])
        qdot_c, self.q_command = cpc_update(x_d, v_d, self.q_command, robot.jacobian, robot.pose,
                                            self.gains, cycle.dt)
        return np.concatenate([self.q_command, qdot_c])
