"""
When the big-M reformulation goes wrong
=======================================

The standard alternative to the convex reformulation replaces each
prosumer by its KKT conditions and linearizes the complementarity
constraints with binaries and a constant M. The constant has to dominate
every flexibility and multiplier; too small a value cuts off the optimum.
"""

from flexmarket import MarketInstance, solve
from flexmarket.bench_harness import compare_solutions
from flexmarket.mpec_mip import build_big_m_mip, choose_big_m, export_lp, solve_mip_bb

inst = MarketInstance.from_arrays(a=[1, 1], b=[2, 2], m=[6, 6], p=10, f=30)
convex = solve(inst)
print("convex optimum", convex.objective)

# the heuristic M is ten times the largest quantity in the instance
for big_m in (choose_big_m(inst), 10.0, 5.0, 4.0, 3.0, 2.0):
    sol = solve_mip_bb(build_big_m_mip(inst, big_m))
    verdict = compare_solutions(convex, sol, inst).value
    print(f"M={big_m:6.1f}  status={sol.status:10s}  objective={sol.objective:7.2f}  {verdict}")

# The model can be handed to an external MIQP solver as an LP file.
print()
print(export_lp(build_big_m_mip(inst, 3.0, name="too_small")))
