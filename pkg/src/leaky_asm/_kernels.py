"""Compiled toppling kernels for float-mode stabilization.

Both kernels run Gauss-Seidel sweeps with alternating direction and batched
firing: an unstable site fires ``floor(h / threshold)`` times at once.  Any
legal firing order gives the same final state, so the sweep order is free.

Kernels return a status code and the number of sweeps performed.  Status
``EDGE`` means a site on the outermost ring had to fire; the state is left
consistent (that site has not fired) so the caller can grow the grid and
resume.
"""
import math

import numpy as np
from numba import njit

DONE = 0
EDGE = 1

# 2**53: above this many thresholds the remainder is below float resolution.
_EXACT_LIMIT = 9007199254740992.0


@njit(cache=True, boundscheck=False)
def _fire(h, cnt, i, j, thr, inv, big):
    v = h[i, j]
    if v < big:
        k = math.floor(v * inv)
        r = v - k * thr
        if r < 0.0:
            k -= 1.0
            r += thr
        elif r >= thr:
            k += 1.0
            r -= thr
        if k < 1.0:
            # float slack window just below the threshold
            k = 1.0
            r = max(v - thr, 0.0)
    else:
        k = v * inv
        r = 0.0
    h[i, j] = r
    cnt[i, j] += k
    return k


@njit(cache=True)
def _orbit_size(i, j):
    if i == 0 and j == 0:
        return 1
    if j == 0 or j == i:
        return 4
    return 8


@njit(cache=True)
def octant_tables(radius):
    """Neighbor targets and multiplicities for the octant ``0 <= j <= i``.

    When every image of octant cell ``x`` fires ``k`` times, the representative
    ``y`` of neighbor ``y'`` of ``x`` gains ``k * w * |orb(x)| / |orb(y)|`` for
    each such neighbor.
    """
    n = radius + 1
    ti = np.zeros((n, n, 4), np.int64)
    tj = np.zeros((n, n, 4), np.int64)
    mult = np.zeros((n, n, 4))
    di = (1, -1, 0, 0)
    dj = (0, 0, 1, -1)
    for i in range(n):
        for j in range(i + 1):
            for q in range(4):
                a = abs(i + di[q])
                b = abs(j + dj[q])
                if b > a:
                    a, b = b, a
                if a > radius:
                    a = radius
                    b = min(b, radius)
                ti[i, j, q] = a
                tj[i, j, q] = b
                mult[i, j, q] = _orbit_size(i, j) / _orbit_size(a, b)
    return ti, tj, mult


@njit(cache=True, boundscheck=False)
def stabilize_octant(h, cnt, ti, tj, mult, thr, w, slack):
    """Stabilize a dihedrally symmetric configuration stored on one octant.

    ``h[i, j]`` for ``0 <= j <= i <= R`` holds the height of every image of
    site ``(i, j)``; all four weights equal ``w``.
    """
    R = h.shape[0] - 1
    big = thr * _EXACT_LIMIT
    inv = 1.0 / thr
    test = thr * (1.0 - slack)
    hi = R
    sweeps = 0
    fwd = True
    while True:
        sweeps += 1
        fired = False
        newhi = -1
        top = min(hi + 1, R)
        for ii in range(top + 1):
            i = ii if fwd else top - ii
            for jj in range(i + 1):
                j = jj if fwd else i - jj
                if h[i, j] >= test:
                    if i == R:
                        return EDGE, sweeps
                    k = _fire(h, cnt, i, j, thr, inv, big)
                    s = k * w
                    if j >= 2 and j <= i - 2:
                        h[i + 1, j] += s
                        h[i - 1, j] += s
                        h[i, j + 1] += s
                        h[i, j - 1] += s
                    else:
                        for q in range(4):
                            h[ti[i, j, q], tj[i, j, q]] += s * mult[i, j, q]
                    fired = True
                    if i > newhi:
                        newhi = i
        fwd = not fwd
        if not fired:
            return DONE, sweeps
        hi = newhi


@njit(cache=True, boundscheck=False)
def stabilize_grid(h, cnt, c_up, c_right, c_down, c_left, thr, slack):
    """Stabilize on a full square grid, ``h[x + R, y + R]``, general weights."""
    n = h.shape[0]
    big = thr * _EXACT_LIMIT
    inv = 1.0 / thr
    test = thr * (1.0 - slack)
    x0, x1, y0, y1 = 0, n - 1, 0, n - 1
    sweeps = 0
    fwd = True
    while True:
        sweeps += 1
        nx0, nx1, ny0, ny1 = n, -1, n, -1
        for ii in range(x1 - x0 + 1):
            i = x0 + ii if fwd else x1 - ii
            for jj in range(y1 - y0 + 1):
                j = y0 + jj if fwd else y1 - jj
                if h[i, j] >= test:
                    if i == 0 or j == 0 or i == n - 1 or j == n - 1:
                        return EDGE, sweeps
                    k = _fire(h, cnt, i, j, thr, inv, big)
                    h[i + 1, j] += k * c_right
                    h[i - 1, j] += k * c_left
                    h[i, j + 1] += k * c_up
                    h[i, j - 1] += k * c_down
                    nx0 = min(nx0, i)
                    nx1 = max(nx1, i)
                    ny0 = min(ny0, j)
                    ny1 = max(ny1, j)
        fwd = not fwd
        if nx1 < 0:
            return DONE, sweeps
        x0, x1 = max(nx0 - 1, 0), min(nx1 + 1, n - 1)
        y0, y1 = max(ny0 - 1, 0), min(ny1 + 1, n - 1)
