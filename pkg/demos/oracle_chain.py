"""Three routes to the same death probability.

The killed random walk dies at site (r, a r) with probability P_d.  This
script computes it by stepping the walk (dynamic programming), by contour
quadrature, and by the saddle-point formula, then prints how the last
approximation improves with distance.

    python3 demos/oracle_chain.py
"""
import math
from fractions import Fraction

from leaky_asm import krw, shape
from leaky_asm.sandpile import ToppleRule

d = 2.0
fld = krw.death_prob_dp(ToppleRule.uniform(d), tail_eps=1e-100)
print(f"DP horizon K = {fld.K}, dropped mass <= {fld.tail_bound:.1e}")

print("\n r    a     log P (DP)        log P (contour)    rel. diff")
for r, a in ((0, Fraction(0)), (10, Fraction(1, 2)), (24, Fraction(1, 4)), (40, Fraction(1))):
    dp = fld.log_at(r, int(a * r))
    ct = krw.death_prob_contour(r, a, d)
    print(f"{r:3d}  {str(a):>4}  {dp:17.12f}  {ct:17.12f}  {abs(math.expm1(ct - dp)):.1e}")

print("\nsaddle-point error against the contour value, a = 1/2")
for r in (20, 40, 80, 160, 320, 640):
    ct = krw.death_prob_contour(r, Fraction(1, 2), d)
    sa = shape.pd_asymptotic(r, 0.5, d)
    print(f"  r = {r:4d}: {abs(math.expm1(sa - ct)):.2e}")
# the error halves as r doubles: the next term in the expansion is O(1/r)
