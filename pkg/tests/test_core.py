import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from refchain.core import (
    IDENTITY_QUAT,
    InvalidInput,
    JointState,
    Pose,
    SingularMatrix,
    Twist,
    dls_pinv,
    exp_map,
    gain_vector,
    integrate_pose,
    log_map,
    orientation_error,
    pose_error,
    quat_conjugate,
    quat_multiply,
    quat_slerp,
    quat_to_matrix,
)

from conftest import rot, rotvecs, unit_quaternions


def as_scipy(q):
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w])


def same_rotation(a, b, tol=1e-9):
    return min(np.abs(a - b).max(), np.abs(a + b).max()) < tol


# -- value types --------------------------------------------------------------


def test_joint_state_rejects_ragged_and_nonfinite():
    with pytest.raises(ValueError):
        JointState(np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        JointState(np.array([0.0, np.nan]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        JointState(np.zeros(0), np.zeros(0), np.zeros(0))
    assert JointState.at_rest([1.0, 2.0]).n == 2


def test_pose_make_canonicalizes_sign():
    p = Pose.make([0, 0, 0], [-1.0, 0, 0, 0])
    assert np.array_equal(p.orientation, IDENTITY_QUAT)
    v = Pose.make([1, 2, 3], rot([0, 0, 1], 30)).as_vector()
    assert np.allclose(Pose.from_vector(v).as_vector(), v)


def test_gain_vector_scalar_list_and_errors():
    assert np.array_equal(gain_vector(2.0, 3, "kp"), [2.0, 2.0, 2.0])
    with pytest.raises(ValueError, match="kp length"):
        gain_vector([1, 2], 3, "kp")
    with pytest.raises(ValueError, match="> 0"):
        gain_vector([1, 0, 1], 3, "kp", positive=True)
    with pytest.raises(ValueError, match=">= 0"):
        gain_vector(-1, 3, "kd")


# -- quaternion algebra ---------------------------------------------------------


def test_multiply_identity_and_inverse():
    assert np.allclose(quat_multiply(IDENTITY_QUAT, IDENTITY_QUAT), IDENTITY_QUAT)
    q = rot([0, 0, 1], 90)
    assert np.allclose(quat_multiply(q, quat_conjugate(q)), IDENTITY_QUAT, atol=1e-15)


def test_multiply_matches_rotation_matrix_product():
    q = rot([0, 0, 1], 90)
    prod = quat_multiply(q, q)
    assert np.allclose(quat_to_matrix(prod), quat_to_matrix(q) @ quat_to_matrix(q), atol=1e-12)
    assert same_rotation(prod, rot([0, 0, 1], 180))


def test_multiply_rejects_nonfinite():
    with pytest.raises(InvalidInput):
        quat_multiply([np.nan, 0, 0, 0], IDENTITY_QUAT)


@given(unit_quaternions(), unit_quaternions())
def test_multiply_matches_scipy_and_is_canonical(a, b):
    prod = quat_multiply(a, b)
    ref = (as_scipy(a) * as_scipy(b)).as_matrix()
    assert np.allclose(quat_to_matrix(prod), ref, atol=1e-9)
    assert abs(np.linalg.norm(prod) - 1.0) <= 1e-9
    assert prod[0] >= 0.0


@given(rotvecs(np.pi - 1e-6))
def test_exp_log_round_trip(w):
    assert np.allclose(log_map(exp_map(w)), w, atol=1e-9)


def test_exp_map_small_angles_stay_unit():
    for w in (np.zeros(3), np.array([1e-12, 0, 0]), np.array([1e-5, -2e-5, 3e-6])):
        q = exp_map(w)
        assert abs(np.linalg.norm(q) - 1) < 1e-15
        assert np.allclose(log_map(q), w, atol=1e-15)


# -- slerp ---------------------------------------------------------------------


def test_slerp_examples():
    q = rot([1, 2, 3], 40)
    assert np.allclose(quat_slerp(q, q, 0.5), q)
    assert same_rotation(quat_slerp(IDENTITY_QUAT, rot([0, 0, 1], 90), 0.5), rot([0, 0, 1], 45))
    assert same_rotation(quat_slerp(IDENTITY_QUAT, rot([1, 0, 0], 170), 0.25), rot([1, 0, 0], 42.5))


def test_slerp_rejects_s_outside_unit_interval():
    for s in (-0.1, 1.1, np.nan):
        with pytest.raises(InvalidInput):
            quat_slerp(IDENTITY_QUAT, rot([0, 0, 1], 10), s)


def test_slerp_takes_the_short_arc_for_antipodal_inputs():
    b = -rot([0, 0, 1], 60)  # same rotation, w < 0
    assert same_rotation(quat_slerp(IDENTITY_QUAT, b, 0.5), rot([0, 0, 1], 30))


@given(unit_quaternions(), unit_quaternions(), st.floats(0, 1))
def test_slerp_endpoints_norm_and_geodesic(a, b, s):
    assert same_rotation(quat_slerp(a, b, 0.0), a)
    assert same_rotation(quat_slerp(a, b, 1.0), b)
    q = quat_slerp(a, b, s)
    assert abs(np.linalg.norm(q) - 1.0) <= 1e-9
    # angle from a grows linearly with s along the shortest arc
    total = np.linalg.norm(orientation_error(b, a))
    assert abs(np.linalg.norm(orientation_error(q, a)) - s * total) < 1e-8


# -- orientation and pose error --------------------------------------------------


def test_orientation_error_examples():
    assert np.allclose(orientation_error(rot([0, 1, 0], 20), rot([0, 1, 0], 20)), 0)
    assert np.allclose(orientation_error(rot([0, 0, 1], 30), IDENTITY_QUAT), [0, 0, np.pi / 6])
    axis = np.ones(3) / np.sqrt(3)
    assert np.allclose(orientation_error(rot(axis, 120), IDENTITY_QUAT), 2 * np.pi / 3 * axis, atol=1e-12)


@given(unit_quaternions(), unit_quaternions())
def test_orientation_error_matches_scipy_and_is_bounded(d, a):
    e = orientation_error(d, a)
    ref = (as_scipy(d) * as_scipy(a).inv()).as_rotvec()
    assert np.linalg.norm(e) <= np.pi + 1e-12
    assert np.allclose(quat_to_matrix(exp_map(e)), Rotation.from_rotvec(ref).as_matrix(), atol=1e-9)


@given(unit_quaternions(), unit_quaternions())
def test_orientation_error_antisymmetric_inside_pi(a, b):
    e = orientation_error(a, b)
    if np.linalg.norm(e) < np.pi - 1e-6:
        assert np.allclose(e, -orientation_error(b, a), atol=1e-9)


def test_pose_error_examples():
    x = Pose.make([0.1, 0.2, 0.3], rot([1, 0, 0], 10))
    assert np.array_equal(pose_error(x, x), np.zeros(6))
    shifted = Pose.make([0.2, 0.2, 0.3], x.orientation)
    assert np.allclose(pose_error(shifted, x), [0.1, 0, 0, 0, 0, 0])
    at = Pose.make([0, 0, 0])
    assert np.allclose(pose_error(Pose.make([0, 0, 0], rot([0, 0, 1], 90)), at), [0, 0, 0, 0, 0, np.pi / 2])


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), unit_quaternions())
def test_pose_error_with_itself_is_zero(p, q):
    x = Pose.make(p, q)
    assert np.all(pose_error(x, x) == 0)


# -- DLS pseudoinverse ------------------------------------------------------------


def test_dls_examples():
    assert np.allclose(dls_pinv(np.eye(6), 0.0), np.eye(6))
    assert np.allclose(dls_pinv(np.eye(6), 1.0), 0.5 * np.eye(6))


def test_dls_moore_penrose_on_wide_matrix(rng):
    J = rng.normal(size=(6, 7))
    P = dls_pinv(J, 0.0)
    assert np.abs(P @ J @ P - P).max() < 1e-9
    assert np.allclose(P, np.linalg.pinv(J), atol=1e-9)


def test_dls_singular_without_damping_raises():
    J = np.zeros((6, 3))
    J[:3] = np.eye(3)
    with pytest.raises(SingularMatrix):
        dls_pinv(J, 0.0)
    assert np.all(np.isfinite(dls_pinv(J, 0.01)))


@settings(max_examples=60)
@given(st.integers(3, 8), st.floats(1e-3, 1.0), st.integers(0, 2**31 - 1))
def test_dls_spectral_map(n, lam, seed):
    J = np.random.default_rng(seed).normal(size=(6, n))
    U, sv, Vt = np.linalg.svd(J, full_matrices=False)
    expected = Vt.T @ np.diag(sv / (sv**2 + lam**2)) @ U.T
    assert np.abs(dls_pinv(J, lam) - expected).max() < 1e-8


# -- pose integration ---------------------------------------------------------------


def test_integrate_pose_examples():
    x = Pose.make([1, 2, 3], rot([0, 1, 0], 15))
    same = integrate_pose(x, Twist(), 0.1)
    assert np.allclose(same.position, x.position) and np.allclose(same.orientation, x.orientation)
    turned = integrate_pose(Pose.make([0, 0, 0]), Twist(np.zeros(3), np.array([0, 0, np.pi])), 0.5)
    assert same_rotation(turned.orientation, rot([0, 0, 1], 90))
    moved = integrate_pose(Pose.make([0, 0, 0]), Twist(np.array([1.0, 2.0, 3.0]), np.zeros(3)), 0.001)
    assert np.allclose(moved.position, [0.001, 0.002, 0.003], atol=1e-15)
    with pytest.raises((InvalidInput, ValueError)):
        integrate_pose(x, Twist(), 0.0)


def test_integrate_pose_is_a_world_frame_increment():
    q = rot([1, 0, 0], 90)
    out = integrate_pose(Pose.make([0, 0, 0], q), Twist(np.zeros(3), np.array([0, 0, 1.0])), 0.3)
    assert same_rotation(out.orientation, quat_multiply(rot([0, 0, 1], np.rad2deg(0.3)), q))


@given(
    st.sampled_from(["translation", "rotation"]),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    unit_quaternions(),
    st.integers(1, 50),
    st.floats(1e-4, 1e-2),
)
def test_integrate_pose_steps_compose(kind, vec, q0, k, dt):
    v = np.array(vec)
    twist = Twist(v, np.zeros(3)) if kind == "translation" else Twist(np.zeros(3), v)
    x = start = Pose.make([0.1, -0.2, 0.3], q0)
    for _ in range(k):
        x = integrate_pose(x, twist, dt)
    once = integrate_pose(start, twist, k * dt)
    assert np.allclose(x.position, once.position, atol=1e-9)
    assert same_rotation(x.orientation, once.orientation, 1e-9)
    assert abs(np.linalg.norm(x.orientation) - 1.0) <= 1e-9
