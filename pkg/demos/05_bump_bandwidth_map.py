"""Per-point selected bandwidths for a bump: wide windows where the link is flat.

Prints a coarse map of median h_hat over [-1/2, 1/2]^2.  The bump sits on
the line x^T theta* = 0 running through the centre.

Run:  python demos/05_bump_bandwidth_map.py
"""
import math
import warnings

import numpy as np

from structadapt import IndexVector, SelectionConfig, TargetFunction, function_library, make_kernel, sphere_grid
from structadapt.estimator import bandwidth_grid
from structadapt.risk import run_selector

warnings.simplefilter("ignore")
kernel = make_kernel(1)
n, eps, reps, size = 256, 0.02, 12, 8
target = TargetFunction(function_library("bump", (0.0, 0.08, 1.5)), IndexVector.from_degrees(30.0))
cfg = SelectionConfig(2.0, 2.0, sphere_grid(64), bandwidth_grid(eps, 2.0 / n, 4.0))
grid = -0.5 + (np.arange(size) + 0.5) / size

print("median h_hat as -log2 (0 = full window), rows run from x2 = +1/2 down")
for x2 in grid[::-1]:
    row = []
    for x1 in grid:
        h = np.median(run_selector(target, kernel, cfg, (x1, x2), eps, n, list(range(reps))).h_hat)
        row.append(f"{-math.log2(h) + 0.0:3.0f}")
    print(" ".join(row))
