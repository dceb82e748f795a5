"""Robot-agnostic control pipelines: reference generators chained into controllers."""
from . import controllers, refgen  # noqa: F401  (registers component types)
from .chain import (
    COMPONENT_TYPES,
    ComponentDescriptor,
    ConfigError,
    CycleOrderError,
    LifecycleError,
    LifecycleState,
    Pipeline,
    ReferencePort,
    WiringError,
    component_configure,
    pipeline_build,
)
from .core import InvalidInput, JointState, Pose, SingularMatrix, Twist, Wrench
from .plant import DynamicPlant, DynamicsModel, FaultStop, KinematicPlant, KinematicsModel, WallModel
from .refgen import (
    FsmState,
    JointReference,
    JointReferenceGenerator,
    Limits,
    TaskReference,
    TaskReferenceGenerator,
    Trajectory,
)
from .transport import GoalHandle, GoalStatus, ProtocolError, ResultCode

__version__ = "0.1.0"
