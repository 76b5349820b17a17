"""A Whitney umbrella at a generic singular point.

Run: python demos/umbrella_tour.py
"""

import numpy as np

from charflow.frame import builtin_heisenberg
from charflow.intersect import umbrella_intersection_germ
from charflow.presets import PRESETS
from charflow.singular import CharPoint, classify, umbrella_frame_test

H = builtin_heisenberg()
curve = PRESETS["umbrella"].curve(H)
anchor = CharPoint(0.0, 0.0, np.zeros(3))

det, frame = umbrella_frame_test(H, curve, 0.0)
print("kind:", classify(H, curve, 0.0, anchor).label, " frame determinant:", round(det, 9))

# the self-intersection germ leaves the singular point along the z-axis
germ = umbrella_intersection_germ(curve, anchor)
print("germ loci:", germ.kinds())
print("max |x|, |y| on the germ:", float(np.max(np.abs(germ.points[:, :2]))))
