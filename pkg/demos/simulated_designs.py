"""Compare estimators on two of the simulated designs.

Uses 5 replications and 300 trees to stay under a few minutes; the
benchmark tables use 100 replications and 1000 trees.
"""

from orderedforest import simulation as sim
from orderedforest.estimators import make_estimators
from orderedforest.forest import ForestParams

for c in sim.enumerate_dgps()[:4]:
    print(c.dgp_id, c.name, c.flags())

designs = [sim.calibrate_thresholds(sim.get_dgp(k)) for k in ("simple3", "complex3")]
for d in designs:
    print(d.name, "thresholds:", [round(t, 3) for t in d.thresholds])

estimators = make_estimators(["ologit", "ordered", "ordered_honest", "multinomial"],
                             ForestParams(n_trees=300))
results = sim.run_experiment(designs, estimators, R=5, n_train=200, n_test=5000, seed=0,
                             progress=lambda c, r: print(f"  {c.name} replication {r + 1}"))

print("\nARPS (mean over replications, sd in brackets)")
for d in designs:
    for name in estimators:
        row = results.get(d.name, name, "rps")
        print(f"{d.name:10s} {name:16s} {row.mean:.4f} ({row.sd:.4f})")
