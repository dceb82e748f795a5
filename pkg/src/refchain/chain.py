"""Chaining substrate: named reference ports, component lifecycle and the pipeline loop.

Every component publishes an output port whose channels are named
``<component>/<quantity>/<index-or-axis>`` (``jrg/position/2``,
``trg/pose/qz``). A downstream component declares the ``<quantity>/<index>``
keys it consumes; wiring matches those keys against the upstream component's
channels after stripping its name prefix, so any generator that emits
``position/i`` and ``velocity/i`` can feed any controller that reads them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .core import InvalidInput, Pose, SingularMatrix
from .plant import FaultStop, fk_and_jacobian


class ConfigError(ValueError):
    """Bad or missing component parameter; the message names the parameter."""


class WiringError(ValueError):
    """Port layouts of two adjacent pipeline stages do not match."""


class CycleOrderError(RuntimeError):
    """``Pipeline.step`` called with a time that is not the next cycle time."""


class LifecycleError(RuntimeError):
    pass


class LifecycleState(enum.Enum):
    UNCONFIGURED = "UNCONFIGURED"
    CONFIGURED = "CONFIGURED"
    ACTIVE = "ACTIVE"


@dataclass
class ReferencePort:
    channels: list
    values: np.ndarray = None
    generation: int = 0

    def __post_init__(self):
        if len(set(self.channels)) != len(self.channels):
            raise WiringError(f"duplicate channel names in port {self.channels}")
        if self.values is None:
            self.values = np.zeros(len(self.channels))

    def write(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.channels),):
            raise FaultStop(f"port write of shape {values.shape}, expected {len(self.channels)} channels")
        if not np.all(np.isfinite(values)):
            bad = [c for c, v in zip(self.channels, values) if not np.isfinite(v)]
            raise FaultStop(f"non-finite value on {', '.join(bad)}")
        self.values = values.copy()
        self.generation += 1

    def as_dict(self) -> dict:
        return dict(zip(self.channels, self.values.tolist()))


@dataclass(frozen=True)
class Cycle:
    index: int
    t: float
    dt: float


class RobotView:
    """Read-only snapshot of the plant's state interfaces for one cycle."""

    def __init__(self, plant):
        self._plant = plant
        st = plant.state
        self.q = st.joint.positions
        self.qdot = st.joint.velocities
        self.effort = st.joint.efforts
        self.wrench = st.wrench.as_vector()
        self.time = st.time

    @property
    def n(self) -> int:
        return self.q.size

    @cached_property
    def _fk(self):
        return fk_and_jacobian(self._plant.kinematics, self.q)

    @property
    def pose(self) -> Pose:
        return self._fk[0]

    @property
    def jacobian(self) -> np.ndarray:
        return self._fk[1]

    @cached_property
    def gravity(self) -> np.ndarray:
        return self._plant.gravity()


class Component:
    """Base for reference generators and controllers.

    Subclasses set ``PARAMS`` (key -> required flag), fill ``input_keys`` and
    ``output_keys`` in :meth:`setup`, and implement :meth:`update`.
    """

    kind = "controller"
    PARAMS: dict = {}

    def __init__(self, name: str):
        self.name = name
        self.lifecycle = LifecycleState.UNCONFIGURED
        self.input_keys: list = []
        self.output_keys: list = []
        self.params: dict = {}

    @property
    def output_channels(self) -> list:
        return [f"{self.name}/{k}" for k in self.output_keys]

    def configure(self, params: dict, n_joints: int):
        if self.lifecycle is not LifecycleState.UNCONFIGURED:
            raise LifecycleError(f"{self.name}: configure from {self.lifecycle.name}")
        params = dict(params or {})
        for key in params:
            if key not in self.PARAMS:
                raise ConfigError(f"{self.name}: unknown parameter '{key}'")
        for key, required in self.PARAMS.items():
            if required and key not in params:
                raise ConfigError(f"{self.name}: missing parameter '{key}'")
        self.params = params
        try:
            self.setup(params, n_joints)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.name}: {exc}") from exc
        self.lifecycle = LifecycleState.CONFIGURED
        return self

    def activate(self, robot: RobotView):
        if self.lifecycle is not LifecycleState.CONFIGURED:
            raise LifecycleError(f"{self.name}: activate from {self.lifecycle.name}")
        self.on_activate(robot)
        self.lifecycle = LifecycleState.ACTIVE

    def deactivate(self):
        if self.lifecycle is not LifecycleState.ACTIVE:
            raise LifecycleError(f"{self.name}: deactivate from {self.lifecycle.name}")
        self.on_deactivate()
        self.lifecycle = LifecycleState.CONFIGURED

    # hooks
    def setup(self, params: dict, n_joints: int):
        raise NotImplementedError

    def on_activate(self, robot: RobotView):
        pass

    def on_deactivate(self):
        pass

    def update(self, cycle: Cycle, inputs: Optional[np.ndarray], robot: RobotView) -> np.ndarray:
        raise NotImplementedError


COMPONENT_TYPES: dict = {}


def register(type_name: str):
    def deco(cls):
        COMPONENT_TYPES[type_name] = cls
        cls.type_name = type_name
        return cls
    return deco


@dataclass
class ComponentDescriptor:
    name: str
    type: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ComponentDescriptor":
        try:
            return cls(str(data["name"]), str(data["type"]), dict(data.get("params") or {}))
        except KeyError as exc:
            raise ConfigError(f"component descriptor missing '{exc.args[0]}'") from None


def component_configure(descriptor: ComponentDescriptor, n_joints: int) -> Component:
    cls = COMPONENT_TYPES.get(descriptor.type)
    if cls is None:
        raise ConfigError(f"{descriptor.name}: unknown component type '{descriptor.type}'")
    return cls(descriptor.name).configure(descriptor.params, n_joints)


def _gather(upstream: Component, downstream_keys: list, downstream_name: str) -> np.ndarray:
    index = {k: i for i, k in enumerate(upstream.output_keys)}
    missing = [k for k in downstream_keys if k not in index]
    if missing:
        raise WiringError(
            f"{upstream.name} -> {downstream_name}: channel '{missing[0]}' required by "
            f"{downstream_name} is not provided by {upstream.name}"
        )
    return np.array([index[k] for k in downstream_keys], dtype=int)


class Pipeline:
    """Reference generator followed by one or more controllers, bound to a plant."""

    def __init__(self, components: list, plant, period: float):
        if not period > 0:
            raise ConfigError("period must be > 0")
        if not components:
            raise ConfigError("pipeline needs at least one component")
        gens = [c for c in components if c.kind == "reference_generator"]
        if components[0].kind != "reference_generator" or len(gens) != 1:
            raise WiringError("a pipeline needs exactly one reference generator, placed first")
        if len(components) < 2:
            raise WiringError("a pipeline needs at least one controller after the generator")
        self.components = list(components)
        self.plant = plant
        self.period = float(period)
        self.cycle_index = 0
        self.faulted: Optional[FaultStop] = None
        self.ports = [ReferencePort(c.output_channels) for c in self.components]
        self._gathers = [None]
        for up, down in zip(self.components, self.components[1:]):
            self._gathers.append(_gather(up, down.input_keys, down.name))
        self._command_index = _gather(self.components[-1], plant.command_layout, "plant")

    @property
    def generator(self):
        return self.components[0]

    @property
    def frequency(self) -> float:
        return 1.0 / self.period

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def activate(self):
        robot = RobotView(self.plant)
        for c in self.components:
            c.activate(robot)

    def deactivate(self):
        for c in self.components:
            if c.lifecycle is LifecycleState.ACTIVE:
                c.deactivate()

    def step(self, t: Optional[float] = None) -> np.ndarray:
        """Run one control cycle and return the plant command vector."""
        if self.faulted is not None:
            raise self.faulted
        expected = self.cycle_index * self.period
        if t is not None and abs(t - expected) > 1e-9 * max(1.0, abs(expected)):
            raise CycleOrderError(f"step at t={t} but cycle {self.cycle_index} is at t={expected}")
        for c in self.components:
            if c.lifecycle is not LifecycleState.ACTIVE:
                raise LifecycleError(f"{c.name} is not active")
        cycle = Cycle(self.cycle_index, expected, self.period)
        robot = RobotView(self.plant)
        upstream = None
        try:
            for comp, port, gather in zip(self.components, self.ports, self._gathers):
                inputs = None if gather is None else upstream.values[gather]
                port.write(comp.update(cycle, inputs, robot))
                upstream = port
            command = self.ports[-1].values[self._command_index]
        except FaultStop as exc:
            self._fault(exc)
        except (SingularMatrix, InvalidInput, np.linalg.LinAlgError) as exc:
            self._fault(FaultStop(str(exc)))
        self.cycle_index += 1
        return command.copy()

    def _fault(self, exc: FaultStop):
        exc.cycle = self.cycle_index
        self.faulted = FaultStop(f"fault at cycle {self.cycle_index}: {exc}", self.cycle_index)
        raise self.faulted from exc

    def channel_names(self) -> list:
        return [ch for port in self.ports for ch in port.channels]

    def channel_values(self) -> np.ndarray:
        return np.concatenate([port.values for port in self.ports])


def pipeline_build(descriptors: list, plant, period: float) -> Pipeline:
    """Configure each descriptor against ``plant`` and wire them in order."""
    if not descriptors:
        raise ConfigError("no components given")
    names = [d.name for d in descriptors]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate component names in {names}")
    components = [component_configure(d, plant.n) for d in descriptors]
    return Pipeline(components, plant, period)
