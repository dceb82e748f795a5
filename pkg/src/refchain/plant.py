"""Simulated robots standing in for real hardware.

Two plants are provided:

* :class:`DynamicPlant` integrates the rigid-body dynamics of a planar N-link
  arm with point masses at the link tips (effort commanded).
* :class:`KinematicPlant` executes joint position commands directly on an
  arbitrary revolute serial chain (position commanded), optionally rate limited.

A :class:`WallModel` turns end-effector penetration into a measured wrench.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .core import (
    IDENTITY_QUAT,
    InvalidInput,
    JointState,
    Pose,
    Twist,
    Wrench,
    canonical,
)


class FaultStop(RuntimeError):
    """Non-finite command reached a plant or a port; the control loop must halt."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = cycle


# --------------------------------------------------------------------------
# kinematics


@dataclass(frozen=True, eq=False)
class Joint:
    origin: np.ndarray  # translation from the previous joint frame
    axis: np.ndarray  # rotation axis in the local frame, unit norm


@dataclass(frozen=True, eq=False)
class KinematicsModel:
    """Revolute serial chain: ``T = base · Π (Trans(origin_i) · Rot(axis_i, q_i)) · tool``."""

    joints: tuple
    tool_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tool_orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "chain"

    @property
    def n(self) -> int:
        return len(self.joints)

    @classmethod
    def from_dict(cls, data: dict, name: str = "chain") -> "KinematicsModel":
        joints = []
        for j in data["joints"]:
            axis = np.array(j["axis"], dtype=float)
            norm = np.linalg.norm(axis)
            if norm == 0.0:
                raise ValueError("joint axis must be non-zero")
            joints.append(Joint(np.array(j.get("origin", [0, 0, 0]), dtype=float), axis / norm))
        if not joints:
            raise ValueError("chain needs at least one joint")
        tool = data.get("tool", {}) or {}
        return cls(
            joints=tuple(joints),
            tool_offset=np.array(tool.get("offset", [0, 0, 0]), dtype=float),
            tool_orientation=canonical(tool.get("orientation", [1, 0, 0, 0])),
            base_position=np.array(data.get("base", [0, 0, 0]), dtype=float),
            name=data.get("name", name),
        )

    @classmethod
    def load(cls, path) -> "KinematicsModel":
        path = Path(path)
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data, name=path.stem)


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw)


def _qrot(q, v):
    # rotate v by unit quaternion q without building a matrix
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (vx + w * tx + y * tz - z * ty,
            vy + w * ty + z * tx - x * tz,
            vz + w * tz + x * ty - y * tx)


def _chain_frames(model: KinematicsModel, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise InvalidInput(f"expected {model.n} joint values, got shape {q.shape}")
    quat = (1.0, 0.0, 0.0, 0.0)
    px, py, pz = (float(c) for c in model.base_position)
    origins = np.empty((model.n, 3))
    axes = np.empty((model.n, 3))
    for i, joint in enumerate(model.joints):
        ox, oy, oz = _qrot(quat, joint.origin)
        px, py, pz = px + ox, py + oy, pz + oz
        origins[i] = (px, py, pz)
        axes[i] = _qrot(quat, joint.axis)
        h = 0.5 * float(q[i])
        sh = math.sin(h)
        ax, ay, az = joint.axis
        quat = _qmul(quat, (math.cos(h), sh * ax, sh * ay, sh * az))
    tx, ty, tz = _qrot(quat, model.tool_offset)
    p_tool = np.array([px + tx, py + ty, pz + tz])
    q_tool = canonical(_qmul(quat, model.tool_orientation))
    return origins, axes, p_tool, q_tool


def forward_kinematics(model: KinematicsModel, q) -> Pose:
    _, _, p, quat = _chain_frames(model, q)
    return Pose(p, quat)


def jacobian(model: KinematicsModel, q) -> np.ndarray:
    """Geometric Jacobian (6×N): rows are linear then angular velocity, base frame."""
    origins, axes, p, _ = _chain_frames(model, q)
    J = np.empty((6, model.n))
    J[:3] = np.cross(axes, p - origins).T
    J[3:] = axes.T
    return J


def fk_and_jacobian(model: KinematicsModel, q):
    origins, axes, p, quat = _chain_frames(model, q)
    J = np.empty((6, model.n))
    J[:3] = np.cross(axes, p - origins).T
    J[3:] = axes.T
    return Pose(p, quat), J


# --------------------------------------------------------------------------
# planar N-link dynamics


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    """Planar arm in the x-y plane, point masses at link tips, gravity along -y."""

    lengths: np.ndarray
    masses: np.ndarray
    friction: np.ndarray = None
    gravity: float = 9.81
    gravity_enabled: bool = True

    def __post_init__(self):
        lengths = np.array(self.lengths, dtype=float).reshape(-1)
        masses = np.array(self.masses, dtype=float).reshape(-1)
        n = lengths.size
        friction = np.zeros(n) if self.friction is None else np.array(self.friction, dtype=float).reshape(-1)
        if n < 1 or masses.size != n or friction.size != n:
            raise ValueError("lengths, masses and friction must have the same length N >= 1")
        if np.any(lengths <= 0) or np.any(masses <= 0):
            raise ValueError("link lengths and masses must be > 0")
        if np.any(friction < 0):
            raise ValueError("friction coefficients must be >= 0")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "friction", friction)
        # constant helpers
        idx = np.arange(n)
        tail = np.cumsum(masses[::-1])[::-1]  # mass carried beyond each link
        object.__setattr__(self, "_upper", np.triu(np.ones((n, n))))
        object.__setattr__(self, "_tail", tail)
        object.__setattr__(self, "_tail_max", tail[np.maximum.outer(idx, idx)])
        object.__setattr__(self, "_ll", np.outer(lengths, lengths))
        object.__setattr__(self, "_lists", (lengths.tolist(), masses.tolist(), tail.tolist(), friction.tolist()))

    @property
    def n(self) -> int:
        return self.lengths.size

    def kinematics(self) -> KinematicsModel:
        z = np.array([0.0, 0.0, 1.0])
        origins = [np.zeros(3)] + [np.array([l, 0.0, 0.0]) for l in self.lengths[:-1]]
        return KinematicsModel(
            joints=tuple(Joint(o, z) for o in origins),
            tool_offset=np.array([self.lengths[-1], 0.0, 0.0]),
            name="planar",
        )


def _check_dim(model, *vectors):
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.shape != (model.n,):
            raise InvalidInput(f"expected {model.n} joint values, got shape {v.shape}")
        out.append(v)
    return out


def inertia(model: DynamicsModel, q) -> np.ndarray:
    (q,) = _check_dim(model, q)
    phi = np.cumsum(q)
    W = model._ll * np.cos(phi[:, None] - phi[None, :]) * model._tail_max
    U = model._upper
    return U @ W @ U.T


def inertia_derivatives(model: DynamicsModel, q) -> np.ndarray:
    """``dB[r] = ∂B/∂q_r`` as an (N, N, N) array."""
    (q,) = _check_dim(model, q)
    phi = np.cumsum(q)
    S = -model._ll * np.sin(phi[:, None] - phi[None, :]) * model._tail_max
    U = model._upper
    D = S[None, :, :] * (U[:, :, None] - U[:, None, :])
    return np.einsum("ja,rab,kb->rjk", U, D, U)


def coriolis(model: DynamicsModel, q, qdot) -> np.ndarray:
    """Coriolis/centrifugal matrix from the Christoffel symbols of B."""
    q, qdot = _check_dim(model, q, qdot)
    dB = inertia_derivatives(model, q)
    # dB[i, k, j] = ∂B_kj / ∂q_i
    t1 = np.einsum("i,ikj->kj", qdot, dB)
    t2 = np.einsum("i,jki->kj", qdot, dB)
    t3 = np.einsum("i,kij->kj", qdot, dB)
    return 0.5 * (t1 + t2 - t3)


def coriolis_vector(model: DynamicsModel, q, qdot) -> np.ndarray:
    """``C(q, q̇) q̇`` via the point-mass centripetal accelerations (O(N))."""
    q, qdot = _check_dim(model, q, qdot)
    phi = np.cumsum(q)
    omega = np.cumsum(qdot)
    c, s = np.cos(phi), np.sin(phi)
    lw2 = model.lengths * omega ** 2
    # acceleration of each tip mass with q̈ = 0
    acc = -np.cumsum(np.stack([lw2 * c, lw2 * s]), axis=1)
    force = np.cumsum((model.masses * acc)[:, ::-1], axis=1)[:, ::-1]
    proj = model.lengths * (-s * force[0] + c * force[1])
    return np.cumsum(proj[::-1])[::-1]


def gravity_vec(model: DynamicsModel, q) -> np.ndarray:
    (q,) = _check_dim(model, q)
    if not model.gravity_enabled:
        return np.zeros(model.n)
    phi = np.cumsum(q)
    return model.gravity * (model._upper @ (model._tail * model.lengths * np.cos(phi)))


def potential_energy(model: DynamicsModel, q) -> float:
    (q,) = _check_dim(model, q)
    if not model.gravity_enabled:
        return 0.0
    y = np.cumsum(model.lengths * np.sin(np.cumsum(q)))
    return float(model.gravity * np.dot(model.masses, y))


def friction(model: DynamicsModel, qdot) -> np.ndarray:
    (qdot,) = _check_dim(model, qdot)
    return model.friction * qdot


def forward_dynamics(model: DynamicsModel, q, qdot, tau) -> np.ndarray:
    q, qdot, tau = _check_dim(model, q, qdot, tau)
    return np.array(_accel(model, q.tolist(), qdot.tolist(), tau.tolist()))


def _accel(model: DynamicsModel, q, qdot, tau) -> list:
    """Fused q̈ on plain floats (the integrator's inner loop; inputs already checked).

    Builds C q̇ and g from the tip-mass accelerations, assembles B by suffix
    sums and solves by Cholesky. For small N this is several times faster
    than the equivalent chain of tiny numpy calls.
    """
    l, m, tail, fr = model._lists
    g = model.gravity if model.gravity_enabled else 0.0
    n = len(l)
    c, s, w = [0.0] * n, [0.0] * n, [0.0] * n
    phi = om = 0.0
    for i in range(n):
        phi += q[i]
        om += qdot[i]
        c[i], s[i], w[i] = math.cos(phi), math.sin(phi), om
    # forces carried by each link when q̈ = 0
    ax = ay = 0.0
    fx, fy = [0.0] * n, [0.0] * n
    for i in range(n):
        k = l[i] * w[i] * w[i]
        ax -= k * c[i]
        ay -= k * s[i]
        fx[i], fy[i] = m[i] * ax, m[i] * ay
    for i in range(n - 2, -1, -1):
        fx[i] += fx[i + 1]
        fy[i] += fy[i + 1]
    rhs = [0.0] * n
    acc = 0.0
    for i in range(n - 1, -1, -1):
        acc += l[i] * (c[i] * (fy[i] + g * tail[i]) - s[i] * fx[i])
        rhs[i] = tau[i] - acc - fr[i] * qdot[i]
    # B = U W U^T as suffix sums over both indices
    B = [[l[a] * l[b] * (c[a] * c[b] + s[a] * s[b]) * tail[max(a, b)] for b in range(n)] for a in range(n)]
    for row in B:
        for b in range(n - 2, -1, -1):
            row[b] += row[b + 1]
    for a in range(n - 2, -1, -1):
        row, nxt = B[a], B[a + 1]
        for b in range(n):
            row[b] += nxt[b]
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            t = B[i][j] - sum(L[i][k] * L[j][k] for k in range(j))
            L[i][j] = math.sqrt(t) if i == j else t / L[j][j]
    y = [0.0] * n
    for i in range(n):
        y[i] = (rhs[i] - sum(L[i][k] * y[k] for k in range(i))) / L[i][i]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - sum(L[k][i] * x[k] for k in range(i + 1, n))) / L[i][i]
    return x


def inverse_dynamics(model: DynamicsModel, q, qdot, qddot) -> np.ndarray:
    q, qdot, qddot = _check_dim(model, q, qdot, qddot)
    return (inertia(model, q) @ qddot + coriolis(model, q, qdot) @ qdot
            + friction(model, qdot) + gravity_vec(model, q))


def mechanical_energy(model: DynamicsModel, q, qdot) -> float:
    q, qdot = _check_dim(model, q, qdot)
    return float(0.5 * qdot @ inertia(model, q) @ qdot + potential_energy(model, q))


# --------------------------------------------------------------------------
# plant stepping


@dataclass(frozen=True, eq=False)
class PlantState:
    joint: JointState
    time: float = 0.0
    wrench: Wrench = field(default_factory=Wrench)


def _require_finite_command(cmd):
    cmd = np.asarray(cmd, dtype=float)
    if not np.all(np.isfinite(cmd)):
        raise FaultStop("non-finite plant command")
    return cmd


def dynamic_plant_step(model: DynamicsModel, state: PlantState, tau, dt: float) -> PlantState:
    """One RK4 step with the torque held constant over ``dt``."""
    if not dt > 0:
        raise InvalidInput("dt must be positive")
    (tau,) = _check_dim(model, _require_finite_command(tau))
    q0, v0, tl = state.joint.positions.tolist(), state.joint.velocities.tolist(), tau.tolist()
    n, h = len(q0), 0.5 * dt

    def axpy(x, a, y):
        return [xi + a * yi for xi, yi in zip(x, y)]

    # overflow in a diverging state surfaces as FaultStop below
    try:
        k1q, k1v = v0, _accel(model, q0, v0, tl)
        q, v = axpy(q0, h, k1q), axpy(v0, h, k1v)
        k2q, k2v = v, _accel(model, q, v, tl)
        q, v = axpy(q0, h, k2q), axpy(v0, h, k2v)
        k3q, k3v = v, _accel(model, q, v, tl)
        q, v = axpy(q0, dt, k3q), axpy(v0, dt, k3v)
        k4q, k4v = v, _accel(model, q, v, tl)
    except (OverflowError, ValueError, ZeroDivisionError):
        raise FaultStop("plant state diverged") from None
    d6 = dt / 6.0
    q = np.array([q0[i] + d6 * (k1q[i] + 2 * k2q[i] + 2 * k3q[i] + k4q[i]) for i in range(n)])
    v = np.array([v0[i] + d6 * (k1v[i] + 2 * k2v[i] + 2 * k3v[i] + k4v[i]) for i in range(n)])
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise FaultStop("plant state diverged")
    return replace(state, joint=JointState(q, v, tau), time=state.time + dt)


def kinematic_plant_step(state: PlantState, q_cmd, dt: float, rate_limit=None) -> PlantState:
    """Move to ``q_cmd``, saturating each joint at ``rate_limit * dt`` if given."""
    if not dt > 0:
        raise InvalidInput("dt must be positive")
    q_cmd = _require_finite_command(q_cmd)
    q0 = state.joint.positions
    dq = q_cmd - q0
    if rate_limit is not None:
        step = np.asarray(rate_limit, dtype=float) * dt
        dq = np.clip(dq, -step, step)
    q = q0 + dq if rate_limit is not None else q_cmd.copy()
    return replace(
        state,
        joint=JointState(q, dq / dt, np.zeros_like(q)),
        time=state.time + dt,
    )


# --------------------------------------------------------------------------
# environment


@dataclass(frozen=True, eq=False)
class WallModel:
    """Penalty wall. ``normal`` points from the wall into free space."""

    point: np.ndarray
    normal: np.ndarray
    stiffness: float
    damping: float = 0.0

    def __post_init__(self):
        n = np.array(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("wall normal must be non-zero")
        if self.stiffness < 0 or self.damping < 0:
            raise ValueError("wall stiffness and damping must be >= 0")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "point", np.array(self.point, dtype=float))


def wall_wrench(model: WallModel, ee_pose: Pose, ee_twist: Twist) -> Wrench:
    n = model.normal
    depth = max(0.0, float(np.dot(model.point - ee_pose.position, n)))
    if depth <= 0.0:
        return Wrench()
    approach = max(0.0, -float(np.dot(ee_twist.linear, n)))
    return Wrench((model.stiffness * depth + model.damping * approach) * n, np.zeros(3))


# --------------------------------------------------------------------------
# plants bound to the control loop


class _PlantBase:
    command_mode = ""
    kinematics: KinematicsModel

    def __init__(self, q0, qdot0=None):
        q0 = np.array(q0, dtype=float).reshape(-1)
        qdot0 = np.zeros_like(q0) if qdot0 is None else np.array(qdot0, dtype=float)
        if q0.size != self.kinematics.n:
            raise ValueError(f"initial positions need {self.kinematics.n} entries")
        self.state = PlantState(JointState(q0, qdot0, np.zeros_like(q0)))

    @property
    def n(self) -> int:
        return self.kinematics.n

    @property
    def command_layout(self):
        return [f"{self.command_mode}/{i}" for i in range(self.n)]

    def gravity(self) -> np.ndarray:
        return np.zeros(self.n)

    def ee_pose(self) -> Pose:
        return forward_kinematics(self.kinematics, self.state.joint.positions)

    def ee_twist(self) -> Twist:
        J = jacobian(self.kinematics, self.state.joint.positions)
        return Twist.from_vector(J @ self.state.joint.velocities)

    def set_wrench(self, wrench: Wrench):
        self.state = replace(self.state, wrench=wrench)


class DynamicPlant(_PlantBase):
    """Effort-commanded planar arm. ``disturbance`` is an extra joint torque."""

    command_mode = "effort"

    def __init__(self, model: DynamicsModel, q0, qdot0=None, disturbance=None):
        self.model = model
        self.kinematics = model.kinematics()
        super().__init__(q0, qdot0)
        self.disturbance = np.zeros(self.n) if disturbance is None else np.array(disturbance, dtype=float)

    def gravity(self) -> np.ndarray:
        return gravity_vec(self.model, self.state.joint.positions)

    def apply(self, command, dt: float):
        command = _require_finite_command(command)
        new = dynamic_plant_step(self.model, self.state, command + self.disturbance, dt)
        # report the commanded torque, not the disturbed one
        self.state = replace(new, joint=replace(new.joint, efforts=command.copy()),
                             wrench=self.state.wrench)
        return self.state


class KinematicPlant(_PlantBase):
    """Position-commanded serial chain, optionally rate limited."""

    command_mode = "position"

    def __init__(self, model: KinematicsModel, q0, rate_limit=None):
        self.kinematics = model
        super().__init__(q0)
        self.rate_limit = None if rate_limit is None else np.array(rate_limit, dtype=float)

    def apply(self, command, dt: float):
        new = kinematic_plant_step(self.state, command, dt, self.rate_limit)
        self.state = replace(new, wrench=self.state.wrench)
        return self.state
