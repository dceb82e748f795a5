import numpy as np
import pytest
from hypothesis import strategies as st

from refchain.core import canonical, quat_from_axis_angle


def unit_quaternions():
    return (
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4)
        .filter(lambda v: np.linalg.norm(v) > 1e-3)
        .map(lambda v: canonical(np.array(v) / np.linalg.norm(v)))
    )


def rotvecs(max_angle=np.pi):
    axis = (
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3)
        .filter(lambda v: np.linalg.norm(v) > 1e-3)
        .map(lambda v: np.array(v) / np.linalg.norm(v))
    )
    return st.tuples(axis, st.floats(0, max_angle)).map(lambda a: a[0] * a[1])


def rot(axis, deg):
    return quat_from_axis_angle(np.asarray(axis, dtype=float), np.deg2rad(deg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- shared plants ---------------------------------------------------------------

PLANAR_LENGTHS = [0.5, 0.4, 0.3]
PLANAR_MASSES = [2.0, 1.5, 1.0]
SIXDOF_START = [0.0, 0.3, 0.6, 0.0, -0.9, 0.0]


def planar_plant(q0=(0.3, 0.5, -0.4), gravity=True, **kw):
    from refchain.plant import DynamicPlant, DynamicsModel

    model = DynamicsModel(PLANAR_LENGTHS, PLANAR_MASSES, gravity_enabled=gravity)
    return DynamicPlant(model, list(q0), **kw)


def sixdof_model():
    from refchain.plant import KinematicsModel
    from refchain.scenario import shipped_dir

    return KinematicsModel.load(shipped_dir() / "chains" / "anthropomorphic_6dof.yaml")


def sixdof_plant(q0=SIXDOF_START):
    from refchain.plant import KinematicPlant

    return KinematicPlant(sixdof_model(), list(q0))


def descriptors(*blocks):
    from refchain.chain import ComponentDescriptor

    return [ComponentDescriptor(name, kind, params) for name, kind, params in blocks]


JRG = ("jrg", "joint_reference_generator", {})
TRG = ("trg", "task_reference_generator", {})


# one "PASS/FAIL criterion N" line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
