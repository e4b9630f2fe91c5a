"""
A small Monte Carlo sweep
=========================

Random portfolios of heat pumps and micro-CHPs, half and half, in
down-regulation. The convex solver runs on every size; the branch-and-bound
and the exhaustive search only where they are affordable.
"""

import sys

from flexmarket.bench_harness import ScenarioConfig, generate_scenarios, run_benchmark

cfg = ScenarioConfig(n=[2, 6, 10, 1000, 30000], trials=20, seed=0, mip_max_n=10, oracle_max_n=6)

# generation adjustments keep every instance solvable; they are worth a look
adjust = {}
for sc in generate_scenarios(ScenarioConfig(n=10, trials=200, seed=0)):
    for key, count in sc.adjustments.items():
        adjust[key] = adjust.get(key, 0) + (count > 0)
print("trials with adjustments (n=10, 200 trials):", adjust)

report = run_benchmark(cfg, ("mip", "oracle"))
sys.stdout.write(report.aggregate_csv())
