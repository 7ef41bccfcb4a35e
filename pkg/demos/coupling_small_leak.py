"""A leaky pile with tiny leak fires exactly like an integer sandpile.

The integer model fires at 5 chips and keeps 1 chip per firing.  With leak
t = 1/(8 m), where m is the largest firing count, the leaky model replays the
same firings and its heights round up to the integer heights.

    python3 demos/coupling_small_leak.py [n]
"""
import sys

import numpy as np

from leaky_asm.sandpile import coupled_run

n = int(sys.argv[1]) if len(sys.argv) > 1 else 300
cr = coupled_run(n)
print(f"n = {n}: max firings per site m = {cr.m_n}, leak t = {cr.t}")
print(f"{cr.firings} firings in {cr.batches} batches; checks: {cr.checks}")

R = (cr.modified.shape[0] - 1) // 2
row = range(R, min(R + 6, 2 * R + 1))
print("\nalong the positive x-axis")
print(" x   integer B   leaky L")
for i in row:
    L = cr.leaky[i, R]
    print(f"{i - R:2d}   {cr.modified[i, R]:9d}   {str(L):>20}  ~ {float(L):.6f}")
assert np.array_equal(np.vectorize(lambda v: -(-v.numerator // v.denominator))(cr.leaky),
                      cr.modified)
print("\nceil(L) == B everywhere")
