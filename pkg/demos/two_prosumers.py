"""
Two prosumers and one aggregator
================================

The aggregator has to cover an imbalance of 30 kWh. Buying it from the TSO
costs 10 EUR/kWh; the two identical prosumers can offer up to 6 kWh each at
a quadratic discomfort. We price them individually.
"""

import numpy as np

from flexmarket import MarketInstance, best_response, solve
from flexmarket.oracle import brute_force_optimum, grid_search_bilevel

inst = MarketInstance.from_arrays(a=[1, 1], b=[2, 2], m=[6, 6], p=10, f=30)

# the convex reformulation gives the optimum directly
alloc = solve(inst)
print("prices      ", alloc.x)
print("flexibility ", alloc.y)
print("cost        ", alloc.objective)

# each prosumer, facing its price, picks exactly the planned flexibility
for pro, x in zip(inst.prosumers, alloc.x):
    print(f"  at x={x}: prosumer supplies {best_response(x, pro)} kWh")

# Paying more is not better: saturating both prosumers at x = a*m + b = 8
# buys 12 kWh for 96 EUR and leaves 18 kWh at the TSO price.
x_sat = inst.a * inst.m + inst.b
print("saturating prices cost", float(x_sat @ inst.m + inst.p * (inst.f - inst.m.sum())))

# Two independent checks: every piece combination of the response map,
# and a 401 x 401 grid over the price plane.
print("enumeration ", brute_force_optimum(inst).objective)
print("price grid  ", grid_search_bilevel(inst, 401).objective)

# The cost surface as a function of a common price, for a feel of its shape.
for x in np.linspace(0, 10, 11):
    y = np.array([best_response(x, pro) for pro in inst.prosumers])
    print(f"x={x:4.1f}  y={y.sum():4.1f}  cost={x * y.sum() + inst.p * (inst.f - y.sum()):6.1f}")
