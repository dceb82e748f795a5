# coding: utf-8

# # Pressing into a wall through an admittance
#
# The generator commands a pose 5 mm behind a virtual wall. The admittance
# controller turns the measured contact force into an offset, so the arm ends
# up where the admittance spring and the wall spring balance.

from refchain.scenario import load_scenario, read_log, run_scenario

scenario = load_scenario("trg_ac_cpc_wall")
result = run_scenario(scenario, log_path="wall.csv")
print(result.results)
log = read_log("wall.csv")

# Two springs in series. With admittance stiffness K, wall stiffness k_w and a
# command d beyond the wall plane:
#   penetration = d K / (K + k_w),   admittance offset = d k_w / (K + k_w)

K = 500.0
k_w = scenario.wall.stiffness
wall_x = scenario.wall.point[0]
d = log["trg/pose/x"][-1] - wall_x

print(f"penetration  {1e3 * (log['ee/pose/x'][-1] - wall_x):.4f} mm  (analytic {1e3 * d * K / (K + k_w):.4f})")
print(f"offset       {1e3 * (log['trg/pose/x'][-1] - log['ac/pose/x'][-1]):.4f} mm  (analytic {1e3 * d * k_w / (K + k_w):.4f})")
print(f"contact force {log['ee/wrench/fx'][-1]:.3f} N")

# The slide along y happens while pressing. The wall is frictionless, so the
# tangential tracking error stays tiny while the normal error is large.

print("max |y error|:", abs(log["trg/pose/y"] - log["ee/pose/y"]).max())
print("final x error:", log["trg/pose/x"][-1] - log["ee/pose/x"][-1])
