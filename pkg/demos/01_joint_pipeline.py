# coding: utf-8

# # A joint-space pipeline by hand
#
# A reference generator followed by a PD controller with gravity compensation,
# driving the simulated 3-link planar arm. No scenario file: everything is
# built from Python.

import numpy as np

from refchain import DynamicPlant, DynamicsModel, JointReference, Trajectory
from refchain.chain import ComponentDescriptor, pipeline_build

# The plant: three links of 0.5, 0.4 and 0.3 m with tip masses, gravity on.

model = DynamicsModel([0.5, 0.4, 0.3], [2.0, 1.5, 1.0])
plant = DynamicPlant(model, [0.3, 0.5, -0.4])

# Components are described by name, registered type and parameters. The
# generator's port carries position/i and velocity/i, the controller reads
# position/i and writes effort/i, which is what the dynamic plant accepts.

pipeline = pipeline_build(
    [
        ComponentDescriptor("jrg", "joint_reference_generator", {"velocity_max": 2.0}),
        ComponentDescriptor("pdgc", "pdgc", {"kp": 100.0, "kd": 20.0}),
    ],
    plant,
    period=1e-3,
)
pipeline.activate()
print(pipeline.channel_names())

# Right after activation the generator holds the measured joints.

tau = pipeline.step()
print("hold:", pipeline.ports[0].values[:3], "torque:", tau)
plant.apply(tau, pipeline.period)

# Submit a two-segment trajectory. Times are relative to the cycle that picks
# it up; validation happens here, on the caller's side.

traj = Trajectory((
    (0.0, JointReference.make([0.3, 0.5, -0.4])),
    (1.0, JointReference.make([0.6, 0.9, -0.9])),
    (2.0, JointReference.make([0.2, 1.2, 0.4])),
))
handle = pipeline.generator.submit_trajectory(traj)
print(handle)

errors = []
for k in range(3000):
    tau = pipeline.step()
    errors.append(np.abs(pipeline.ports[0].values[:3] - plant.state.joint.positions).max())
    plant.apply(tau, pipeline.period)
    if k % 500 == 0 and not handle.done:
        print(f"t={k * 1e-3:.1f}s  progress {handle.feedback.fraction:.2f}")

print("result:", handle.result)
print(f"max tracking error {max(errors):.4f} rad, final {errors[-1]:.2e} rad")
