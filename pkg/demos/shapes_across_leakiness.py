"""Visited sets of the leaky sandpile for several leak factors.

Stabilizes 10^40 chips at the origin for d between 1.01 and 100, renders each
final configuration as a PPM and compares the boundary with the scaled limit
curve.  Small d gives a near-disc, large d a near-diamond.

    python3 demos/shapes_across_leakiness.py [outdir]
"""
import math
import sys
from pathlib import Path

import numpy as np

from leaky_asm import io, shape
from leaky_asm.sandpile import ToppleRule, point_source, radial_profile, stabilize

N = 1e40
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_shapes")
out.mkdir(parents=True, exist_ok=True)

print(f"{'d':>7} {'visited':>8} {'axis':>5} {'diag':>5} {'axis/diag':>9} {'predicted':>9}")
for d in (1.01, 1.1, 1.5, 2.0, 10.0, 100.0):
    res = stabilize(point_source(N, 1), ToppleRule.uniform(d))
    prof = radial_profile(res.visited, slopes=[0, 1])
    lc = shape.limit_curve(d, 3)
    predicted = lc.radii[0] / lc.radii[-1]
    print(f"{d:7.2f} {res.visited_count:8d} {prof.euclidean[0]:5.0f} {prof.euclidean[1]:5.1f} "
          f"{prof.euclidean[0] / prof.euclidean[1]:9.3f} {predicted:9.3f}")
    io.render_ppm(res, out / f"pile_d{d:g}.ppm")

# the ratio climbs from 1 (disc) toward sqrt 2 (diamond) as d grows
print("ratio for the unit circle: 1, for the L1 ball:", round(math.sqrt(2), 3))
print("images written to", out.resolve())
