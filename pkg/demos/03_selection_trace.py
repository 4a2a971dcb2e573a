"""Walk through one run of the selection rule.

Run:  python demos/03_selection_trace.py
"""
import json
import math

from structadapt import (BandwidthGrid, IndexVector, SelectionConfig, TargetFunction, function_library,
                         make_kernel, select, simulate, sphere_grid)

kernel = make_kernel(1)
truth = IndexVector.from_degrees(30.0)
field = simulate(TargetFunction(function_library("cosine", (4.0, 1.0)), truth), 0.02, 256, seed=3)

levels = BandwidthGrid((1.0, 0.5, 0.25, 0.125, 0.0625), 0.0625)
cfg = SelectionConfig(1.75, 2.0, sphere_grid(64), levels)
tr = select(field, kernel, (0.0, 0.0), cfg)

# P collects (index, h) pairs whose pairwise comparisons all stay under the
# thresholds at every level up to h.  h_tilde is the largest such h.
print("accepted pairs per level:")
for h in levels.levels:
    idx = [i for i, hh in tr.p_set if hh == h]
    print(f"  h={h:<7} {len(idx):3d} indices")
print("h_tilde:", tr.h_tilde)
angles = sorted(round(math.degrees(cfg.sphere.angles[i]), 1) for i in tr.theta_hat_set)
print("indices accepted at h_tilde (deg):", angles)
print(f"theta_hat: {math.degrees(tr.theta_hat.angle):.1f} deg (truth 30 / 210), fell back: {tr.fell_back}")
print(f"h_hat: {tr.h_hat}, estimate {tr.estimate:+.4f} (truth {1.0:+.4f})")

# The JSON form elides the R table above a size limit.
d = tr.to_dict(max_r_values=100)
d["p_set"] = f"{len(d['p_set'])} pairs"
print(json.dumps(d))
