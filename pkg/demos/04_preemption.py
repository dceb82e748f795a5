# coding: utf-8

# # Generator state machine
#
# A trajectory runs until something newer arrives. A new trajectory or a topic
# reference preempts it, a rejected submission leaves it alone.

from refchain.chain import ComponentDescriptor, pipeline_build
from refchain.plant import DynamicPlant, DynamicsModel
from refchain.refgen import JointReference, Trajectory


def move(*rows):
    return Trajectory(tuple((t, JointReference.make(q)) for t, q in rows))


plant = DynamicPlant(DynamicsModel([0.5, 0.4, 0.3], [2.0, 1.5, 1.0]), [0.0, 0.5, 0.5])
pipeline = pipeline_build(
    [
        ComponentDescriptor("jrg", "joint_reference_generator", {"velocity_max": 2.0}),
        ComponentDescriptor("pdgc", "pdgc", {"kp": 100.0, "kd": 20.0}),
    ],
    plant,
    1e-3,
)
pipeline.activate()
gen = pipeline.generator


def run(cycles):
    for _ in range(cycles):
        plant.apply(pipeline.step(), pipeline.period)


first = gen.submit_trajectory(move((0, [0.0, 0.5, 0.5]), (2, [0.6, 0.5, 0.5])))
run(500)
print(gen.fsm, first.status)

# a newer trajectory replaces the running one
second = gen.submit_trajectory(move((0, [0.15, 0.5, 0.5]), (2, [0.15, 1.0, 0.5])))
run(500)
print("first:", first.result)

# too fast for velocity_max: rejected on the caller's side, nothing changes
print("too fast:", gen.submit_trajectory(move((0, [0.15, 0.75, 0.5]), (0.1, [1.15, 0.75, 0.5]))))
print(gen.fsm, second.status)

# a topic reference wins over the running trajectory
gen.publish_reference(JointReference.make([0.2, 0.8, 0.2]))
run(1)
print("second:", second.result, gen.fsm, pipeline.ports[0].values[:3])

pipeline.deactivate()
print(gen.results)
