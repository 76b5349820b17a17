"""Self-intersections of the flow-out of a generating curve that winds twice.

Run: python demos/selfint_tour.py
"""

import numpy as np

from charflow.frame import builtin_heisenberg
from charflow.intersect import h1_self_intersections
from charflow.presets import PRESETS
from charflow.singular import h1_singular_points

H = builtin_heisenberg()
curve = PRESETS["example-selfint"].curve(H)

# singular points: the discriminant of the xi3 quadratic has a double root
for p in h1_singular_points(curve):
    print(f"singular point at s = {p.s:.6f}, t = {p.t:.6f}, q = {np.round(p.q, 9)}")

# pairs of rulings that meet, grouped into loci
locus = h1_self_intersections(curve, t_range=(0, 4))
for loc in locus.loci:
    ends = loc.sample(2)
    print(f"{loc.kind}: {len(loc.pairs)} pairs, from {np.round(ends[0], 6)} to {np.round(ends[-1], 6)}")
