import random
from fractions import Fraction

import numpy as np
import pytest

from leaky_asm.sandpile import RATIONAL, HeightField


def random_field(rng: random.Random, radius: int = 3, max_mass: int = 500) -> HeightField:
    """Sparse random nonnegative integer field with total mass at most ``max_mass``."""
    f = HeightField.zeros(radius, RATIONAL)
    budget = rng.randint(1, max_mass)
    sites = [(x, y) for x in range(-radius, radius + 1) for y in range(-radius, radius + 1)]
    while budget > 0:
        x, y = rng.choice(sites)
        k = rng.randint(1, budget)
        f[x, y] = f[x, y] + k
        budget -= k
    return f


def naive_stabilize(heights: dict, rule):
    """One firing at a time with exact Fractions; the independent abelian oracle."""
    h = {k: Fraction(v) for k, v in heights.items()}
    r = rule.exact()
    thr = r.threshold
    send = {(0, 1): r.c_up, (1, 0): r.c_right, (0, -1): r.c_down, (-1, 0): r.c_left}
    topples: dict = {}
    while True:
        ready = sorted(s for s, v in h.items() if v >= thr)
        if not ready:
            return h, topples
        s = ready[0]
        h[s] -= thr
        topples[s] = topples.get(s, 0) + 1
        for (dx, dy), c in send.items():
            nb = (s[0] + dx, s[1] + dy)
            h[nb] = h.get(nb, Fraction(0)) + c


@pytest.fixture
def rng():
    return random.Random(12345)


def dense_to_dict(cells: np.ndarray) -> dict:
    R = (cells.shape[0] - 1) // 2
    return {(int(i) - R, int(j) - R): cells[i, j] for i, j in zip(*np.nonzero(cells != 0))}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
