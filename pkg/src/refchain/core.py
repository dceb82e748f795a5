"""Shared math and value types: joint state, poses, quaternion algebra, DLS pseudoinverse.

Quaternions are stored as numpy arrays in ``(w, x, y, z)`` order and are kept
in canonical sign (``w >= 0``) by every function that produces one. All task
space error and twist vectors are expressed in the base frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

_UNIT_TOL = 1e-6


class InvalidInput(ValueError):
    """Raised when a math primitive receives non-finite or out-of-domain input."""


class SingularMatrix(ArithmeticError):
    """Raised when an undamped pseudoinverse hits a rank-deficient Jacobian."""


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInput("non-finite input")


def canonical(q):
    """Return ``q`` normalized with ``w >= 0``."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidInput("quaternion must be finite and non-zero")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


@dataclass(frozen=True, eq=False)
class JointState:
    positions: np.ndarray
    velocities: np.ndarray
    efforts: np.ndarray

    def __post_init__(self):
        for name in ("positions", "velocities", "efforts"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        n = self.positions.size
        if n < 1 or self.velocities.size != n or self.efforts.size != n:
            raise InvalidInput("joint state vectors must share a length N >= 1")
        _finite(self.positions, self.velocities, self.efforts)

    @classmethod
    def at_rest(cls, positions):
        q = np.array(positions, dtype=float).reshape(-1)
        return cls(q, np.zeros_like(q), np.zeros_like(q))

    @property
    def n(self) -> int:
        return self.positions.size


@dataclass(frozen=True, eq=False)
class Pose:
    """End-effector pose. ``orientation`` is a unit quaternion (w, x, y, z).

    The constructor stores the arrays as given; use :meth:`make` to normalize
    untrusted data.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    @classmethod
    def make(cls, position, orientation=None) -> "Pose":
        p = np.array(position, dtype=float).reshape(3)
        q = IDENTITY_QUAT.copy() if orientation is None else canonical(orientation)
        _finite(p)
        return cls(p, q)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), canonical(v[3:7]))


@dataclass(frozen=True, eq=False)
class Twist:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), v[3:6].copy())


@dataclass(frozen=True, eq=False)
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_vector(cls, v) -> "Wrench":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), v[3:6].copy())


def gain_vector(values, n: int, name: str, positive: bool = False) -> np.ndarray:
    """Diagonal gain from a scalar or length-``n`` sequence.

    Raises ``ValueError`` mentioning ``name`` on bad length or sign; callers
    translate it into their own configuration error.
    """
    v = np.array(values, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.ndim != 1 or v.size != n:
        raise ValueError(f"{name} length: expected {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    if positive and np.any(v <= 0.0):
        raise ValueError(f"{name} must be > 0")
    if np.any(v < 0.0):
        raise ValueError(f"{name} must be >= 0")
    return v


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _hamilton(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a ⊗ b``, renormalized and sign-canonical."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _finite(a, b)
    return canonical(_hamilton(a, b))


def exp_map(rotvec) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    r = np.asarray(rotvec, dtype=float)
    _finite(r)
    angle = np.linalg.norm(r)
    half = 0.5 * angle
    # sin(half)/angle, with its Taylor limit near zero
    k = np.sin(half) / angle if angle > 1e-12 else 0.5 - angle * angle / 48.0
    return canonical(np.concatenate([[np.cos(half)], k * r]))


def log_map(q) -> np.ndarray:
    """Rotation vector of the unit quaternion ``q`` with angle in ``[0, pi]``."""
    q = canonical(q)
    v = q[1:]
    n = np.linalg.norm(v)
    angle = 2.0 * np.arctan2(n, q[0])
    if n < 1e-12:
        return 2.0 * v / q[0]
    return v * (angle / n)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return exp_map(axis / np.linalg.norm(axis) * angle)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = canonical(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_slerp(a, b, s: float) -> np.ndarray:
    """Shortest-arc spherical interpolation from ``a`` (s=0) to ``b`` (s=1)."""
    if not np.isfinite(s) or s < 0.0 or s > 1.0:
        raise InvalidInput(f"slerp parameter must lie in [0, 1], got {s}")
    a = canonical(a)
    b = canonical(b)
    if np.dot(a, b) < 0.0:
        b = -b
    # angle between the 4-vectors; the atan2 form stays accurate near zero
    theta = 2.0 * np.arctan2(np.linalg.norm(a - b), np.linalg.norm(a + b))
    if theta < 1e-15:
        return a
    st = np.sin(theta)
    out = (np.sin((1.0 - s) * theta) / st) * a + (np.sin(s * theta) / st) * b
    return canonical(out)


def orientation_error(desired, actual) -> np.ndarray:
    """Base-frame rotation vector of ``desired ⊗ conj(actual)``."""
    d = np.asarray(desired, dtype=float)
    a = np.asarray(actual, dtype=float)
    _finite(d, a)
    if np.array_equal(d, a) or np.array_equal(d, -a):
        return np.zeros(3)  # exact, rather than rounding noise of q ⊗ q*
    return log_map(_hamilton(d, quat_conjugate(a)))


def pose_error(desired: Pose, actual: Pose) -> np.ndarray:
    """6-vector ``(position difference, orientation error)``."""
    return np.concatenate([
        desired.position - actual.position,
        orientation_error(desired.orientation, actual.orientation),
    ])


def dls_pinv(J, lam: float) -> np.ndarray:
    """Damped least-squares pseudoinverse ``Jᵀ (J Jᵀ + λ² I)⁻¹``."""
    J = np.asarray(J, dtype=float)
    _finite(J)
    if lam < 0.0 or not np.isfinite(lam):
        raise InvalidInput("damping must be a finite non-negative scalar")
    m = J.shape[0]
    A = J @ J.T + (lam * lam) * np.eye(m)
    if lam == 0.0 and np.linalg.cond(A) > 1e12:
        raise SingularMatrix("J Jᵀ is singular; use a positive damping factor")
    try:
        # A is symmetric, so Jᵀ A⁻¹ = (A⁻¹ J)ᵀ
        return np.linalg.solve(A, J).T
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def integrate_pose(x: Pose, v: Twist, dt: float) -> Pose:
    """Advance ``x`` by the base-frame twist ``v`` held for ``dt`` seconds."""
    if not dt > 0.0:
        raise InvalidInput("dt must be positive")
    position = x.position + v.linear * dt
    orientation = quat_multiply(exp_map(v.angular * dt), x.orientation)
    return Pose(position, orientation)
