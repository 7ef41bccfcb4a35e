"""Leaky sandpile configurations and their stabilization.

Grids are square and origin-centred: ``cells[x + R, y + R]`` is the height at
lattice site ``(x, y)`` for a grid of radius ``R``.  The first array axis is
the horizontal (east-west) coordinate, so "up" means increasing ``y``.

Two scalar modes are supported.  ``"float"`` stores float64 heights and runs
the compiled sweep kernels.  ``"rational"`` stores :class:`fractions.Fraction`
heights and stabilizes with exact integer arithmetic; it is the mode to use
whenever results are compared bit-for-bit.
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

FLOAT = "float"
RATIONAL = "rational"
SCALAR_MODES = (FLOAT, RATIONAL)

FLOAT_MAX_CHIPS = 1e300
FLOAT_SLACK = 1e-12


class GridOverflowError(RuntimeError):
    """Toppling activity reached the edge of a fixed-size grid."""


class CouplingError(AssertionError):
    """A coupling invariant between the leaky and modified models failed."""


def to_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, float or decimal string."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


def parse_chips(n, scalar_mode: str = FLOAT):
    """Parse a chip count, accepting mantissa-exponent text such as ``"1e100"``.

    Rational mode keeps the value exact; float mode rejects counts that are
    too large to stabilize without overflow.
    """
    if scalar_mode == RATIONAL:
        value = to_fraction(n)
        if value < 0:
            raise ValueError("chip count must be nonnegative")
        return value
    if scalar_mode != FLOAT:
        raise ValueError(f"unknown scalar mode {scalar_mode!r}")
    try:
        value = float(n) if not isinstance(n, Fraction) else float(n)
    except OverflowError:
        value = math.inf
    if not math.isfinite(value) or value > FLOAT_MAX_CHIPS:
        raise OverflowError(
            f"chip count {n} is not safely representable in float mode "
            f"(limit {FLOAT_MAX_CHIPS:g}); use scalar_mode='rational'"
        )
    if value < 0:
        raise ValueError("chip count must be nonnegative")
    return value


@dataclass(frozen=True)
class ToppleRule:
    """Chip weights sent north, east, south and west, and the leak factor ``d``.

    A site fires when its height reaches ``threshold = c * d``; it then loses
    ``c * d`` chips, sends ``c_dir`` to each neighbor and leaks ``c * (d - 1)``.
    """

    c_up: Real = 1
    c_right: Real = 1
    c_down: Real = 1
    c_left: Real = 1
    d: Real = 2

    def __post_init__(self):
        for name in ("c_up", "c_right", "c_down", "c_left", "d"):
            if isinstance(getattr(self, name), str):
                object.__setattr__(self, name, to_fraction(getattr(self, name)))
        ws = self.weights
        if any(w < 0 for w in ws):
            raise ValueError("chip weights must be nonnegative")
        if sum(ws) <= 0:
            raise ValueError("at least one chip weight must be positive")
        if not all(math.isfinite(float(w)) for w in ws + (self.d,)):
            raise ValueError("rule parameters must be finite")
        if self.d < 1:
            raise ValueError("leak factor d must be >= 1")

    @classmethod
    def uniform(cls, d, weight=1) -> "ToppleRule":
        return cls(weight, weight, weight, weight, d)

    @property
    def weights(self) -> tuple:
        """``(c_up, c_right, c_down, c_left)``."""
        return (self.c_up, self.c_right, self.c_down, self.c_left)

    @property
    def c(self):
        return self.c_up + self.c_right + self.c_down + self.c_left

    @property
    def threshold(self):
        return self.c * self.d

    @property
    def leak_per_topple(self):
        return self.c * (self.d - 1)

    @property
    def is_uniform(self) -> bool:
        return self.c_up == self.c_right == self.c_down == self.c_left

    def exact(self) -> "ToppleRule":
        """The same rule with every parameter as an exact Fraction."""
        return ToppleRule(*(to_fraction(w) for w in self.weights), d=to_fraction(self.d))

    def as_float(self) -> "ToppleRule":
        return ToppleRule(*(float(w) for w in self.weights), d=float(self.d))

    def to_dict(self) -> dict:
        return {
            "c_up": _jsonable(self.c_up),
            "c_right": _jsonable(self.c_right),
            "c_down": _jsonable(self.c_down),
            "c_left": _jsonable(self.c_left),
            "d": _jsonable(self.d),
        }


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else v.numerator
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class HeightField:
    """Square grid of site heights centred at the origin."""

    cells: np.ndarray
    scalar_mode: str = FLOAT

    def __post_init__(self):
        if self.scalar_mode not in SCALAR_MODES:
            raise ValueError(f"unknown scalar mode {self.scalar_mode!r}")
        n, m = self.cells.shape
        if n != m or n % 2 != 1:
            raise ValueError("cells must be a square array of odd side")

    @classmethod
    def zeros(cls, radius: int, scalar_mode: str = FLOAT) -> "HeightField":
        side = 2 * radius + 1
        if scalar_mode == RATIONAL:
            cells = np.full((side, side), Fraction(0), dtype=object)
        else:
            cells = np.zeros((side, side))
        return cls(cells, scalar_mode)

    @property
    def radius(self) -> int:
        return (self.cells.shape[0] - 1) // 2

    def __getitem__(self, site):
        x, y = site
        R = self.radius
        if max(abs(x), abs(y)) > R:
            return Fraction(0) if self.scalar_mode == RATIONAL else 0.0
        return self.cells[x + R, y + R]

    def __setitem__(self, site, value):
        x, y = site
        R = self.radius
        self.cells[x + R, y + R] = value

    def total_mass(self):
        if self.scalar_mode == RATIONAL:
            return sum(self.cells.ravel(), Fraction(0))
        return float(math.fsum(self.cells.ravel()))

    def padded(self, radius: int) -> "HeightField":
        """Copy embedded in a grid of at least ``radius``."""
        return HeightField(_pad(self.cells, radius), self.scalar_mode)

    def coords(self):
        """Lattice coordinate arrays ``(X, Y)`` matching ``cells``."""
        R = self.radius
        r = np.arange(-R, R + 1)
        return np.meshgrid(r, r, indexing="ij")


def _pad(a: np.ndarray, radius: int) -> np.ndarray:
    R = (a.shape[0] - 1) // 2
    if radius <= R:
        return a.copy()
    side = 2 * radius + 1
    fill = Fraction(0) if a.dtype == object else 0
    out = np.full((side, side), fill, dtype=a.dtype)
    off = radius - R
    out[off:off + a.shape[0], off:off + a.shape[0]] = a
    return out


@dataclass
class Odometer:
    """Per-site topple counts; ``u`` is the total mass emitted per site."""

    topples: np.ndarray
    mass_per_topple: object

    @property
    def radius(self) -> int:
        return (self.topples.shape[0] - 1) // 2

    @property
    def u(self) -> np.ndarray:
        return self.topples * self.mass_per_topple

    def total_topples(self):
        if self.topples.dtype == object:
            return sum(self.topples.ravel(), 0)
        return float(math.fsum(self.topples.ravel()))


@dataclass
class StabilizationResult:
    final: HeightField
    odometer: Odometer
    rule: ToppleRule | None
    initial_mass: object
    leaked_mass: object
    max_topples: object
    boundary_touched: bool = False
    sweeps: int = 0
    threshold: object = None

    @property
    def visited(self) -> np.ndarray:
        """Boolean grid of sites that toppled at least once."""
        return self.odometer.topples > 0

    @property
    def radius(self) -> int:
        return self.final.radius

    def visited_sites(self) -> set:
        R = self.radius
        xs, ys = np.nonzero(self.visited)
        return {(int(x) - R, int(y) - R) for x, y in zip(xs, ys)}

    @property
    def visited_count(self) -> int:
        return int(np.count_nonzero(self.visited))

    def summary(self) -> dict:
        """JSON-ready run summary."""
        rule = self.rule
        return {
            "n": _jsonable(self.initial_mass) if self.final.scalar_mode == RATIONAL
            else float(self.initial_mass),
            "d": _jsonable(rule.d) if rule is not None else None,
            "weights": [_jsonable(w) for w in rule.weights] if rule is not None else None,
            "m_n": _jsonable(self.max_topples),
            "leaked": _jsonable(self.leaked_mass),
            "visited_count": self.visited_count,
            "radius": self.radius,
        }


def point_source(n, radius: int, scalar_mode: str = FLOAT) -> HeightField:
    """``n`` chips at the origin of an otherwise empty grid."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    value = parse_chips(n, scalar_mode)
    f = HeightField.zeros(radius, scalar_mode)
    f[0, 0] = value
    return f


def initial_radius(n, d) -> int:
    """Starting grid radius for ``n`` chips: the outer-radius estimate plus 16."""
    n = float(n) if not isinstance(n, int) else n
    d = float(d)
    if d <= 1 or n <= 1:
        return 16
    zp = 2 * d - 1 + math.sqrt((2 * d - 1) ** 2 - 1)
    return int(math.ceil(math.log(n) / math.log(zp))) + 16


def _grown(radius: int) -> int:
    return int(math.ceil(1.25 * radius)) + 1


def _check_field(field: HeightField):
    cells = field.cells
    if field.scalar_mode == FLOAT:
        if not np.all(np.isfinite(cells)):
            raise ValueError("heights must be finite")
        if np.any(cells < 0):
            raise ValueError("heights must be nonnegative")
    else:
        if any(v < 0 for v in cells.ravel()):
            raise ValueError("heights must be nonnegative")


def _is_dihedral(a: np.ndarray) -> bool:
    return (
        np.array_equal(a, a[::-1, :])
        and np.array_equal(a, a[:, ::-1])
        and np.array_equal(a, a.T)
    )


def stabilize(
    field: HeightField,
    rule: ToppleRule,
    *,
    grow: bool = True,
    order: str = "fifo",
    seed: int | None = None,
    batch: bool = True,
) -> StabilizationResult:
    """Topple every site at or above ``rule.threshold`` until none remain.

    Parameters
    ----------
    field : HeightField
        Nonnegative starting configuration; not modified.
    rule : ToppleRule
        Must have ``d > 1``.
    grow : bool
        If activity reaches the grid edge, grow the grid by 25% and continue;
        otherwise raise :class:`GridOverflowError`.
    order : {"fifo", "random"}
        Firing order in rational mode.  Float mode always uses compiled sweeps.
    seed : int, optional
        Seed for ``order="random"``.
    batch : bool
        Rational mode only: fire a site ``floor(h / threshold)`` times at once
        (``True``) or one topple at a time.
    """
    if rule.d <= 1:
        raise ValueError("stabilize needs d > 1; use stabilize_modified_asm for d = 1")
    _check_field(field)
    if field.scalar_mode == RATIONAL:
        return _stabilize_rational(field, rule.exact(), grow, order, seed, batch)
    return _stabilize_float(field, rule.as_float(), grow)


def _stabilize_float(field: HeightField, rule: ToppleRule, grow: bool) -> StabilizationResult:
    thr = rule.threshold
    mass0 = field.total_mass()
    cells = field.cells.astype(float)
    if grow:
        cells = _pad(cells, max(field.radius, initial_radius(mass0, rule.d)))
    touched = False
    sweeps = 0
    if rule.is_uniform and _is_dihedral(cells):
        R = (cells.shape[0] - 1) // 2
        h = np.zeros((R + 1, R + 1))
        idx_i, idx_j = np.tril_indices(R + 1)
        h[idx_i, idx_j] = cells[R + idx_i, R + idx_j]
        cnt = np.zeros_like(h)
        while True:
            ti, tj, mult = _kernels.octant_tables(R)
            status, s = _kernels.stabilize_octant(
                h, cnt, ti, tj, mult, thr, float(rule.c_up), FLOAT_SLACK)
            sweeps += s
            if status == _kernels.DONE:
                break
            touched = True
            if not grow:
                raise GridOverflowError(f"activity reached the edge of a radius-{R} grid")
            R2 = _grown(R)
            h = _pad_octant(h, R2)
            cnt = _pad_octant(cnt, R2)
            R = R2
        heights = _unfold_octant(h)
        topples = _unfold_octant(cnt)
    else:
        h = cells.copy()
        cnt = np.zeros_like(h)
        while True:
            status, s = _kernels.stabilize_grid(
                h, cnt, *(float(w) for w in rule.weights), thr, FLOAT_SLACK)
            sweeps += s
            if status == _kernels.DONE:
                break
            touched = True
            if not grow:
                R = (h.shape[0] - 1) // 2
                raise GridOverflowError(f"activity reached the edge of a radius-{R} grid")
            R2 = _grown((h.shape[0] - 1) // 2)
            h = _pad(h, R2)
            cnt = _pad(cnt, R2)
        heights, topples = h, cnt
    total = float(math.fsum(topples.ravel()))
    return StabilizationResult(
        final=HeightField(heights, FLOAT),
        odometer=Odometer(topples, thr),
        rule=rule,
        initial_mass=mass0,
        leaked_mass=total * rule.leak_per_topple,
        max_topples=float(topples.max()) if topples.size else 0.0,
        boundary_touched=touched,
        sweeps=sweeps,
        threshold=thr,
    )


def _pad_octant(h: np.ndarray, radius: int) -> np.ndarray:
    out = np.zeros((radius + 1, radius + 1))
    out[: h.shape[0], : h.shape[1]] = h
    return out


def _unfold_octant(h: np.ndarray) -> np.ndarray:
    """Expand octant storage ``h[i, j]`` (``j <= i``) to the full grid."""
    R = h.shape[0] - 1
    lower = np.tril(h)
    quad = lower + np.tril(h, -1).T
    full = np.zeros((2 * R + 1, 2 * R + 1))
    full[R:, R:] = quad
    full[:R + 1, R:] = quad[::-1, :]
    full[R:, :R + 1] = quad[:, ::-1]
    full[:R + 1, :R + 1] = quad[::-1, ::-1]
    return full


class _ExactPile:
    """Dict-backed integer sandpile; heights are scaled by a common denominator.

    Used by the rational-mode engine, the modified ASM and the coupled run.
    """

    def __init__(self, heights: dict, send: Sequence[int], loss: int, fire_at: int,
                 limit: int | None):
        self.h = heights
        self.topples: dict = {}
        self.send = tuple(send)  # (up, right, down, left)
        self.loss = loss
        self.fire_at = fire_at
        self.limit = limit
        self.touched = False

    def max_fires(self, v: int) -> int:
        # largest k with v - (k - 1) * loss >= fire_at
        if v < self.fire_at:
            return 0
        return (v - self.fire_at) // self.loss + 1

    def fire(self, site, k: int):
        x, y = site
        h = self.h
        h[site] = h.get(site, 0) - k * self.loss
        self.topples[site] = self.topples.get(site, 0) + k
        up, right, down, left = self.send
        for nb, w in (((x, y + 1), up), ((x + 1, y), right), ((x, y - 1), down), ((x - 1, y), left)):
            if w:
                if self.limit is not None and max(abs(nb[0]), abs(nb[1])) > self.limit:
                    self.touched = True
                    raise GridOverflowError(
                        f"activity reached the edge of a radius-{self.limit} grid")
                h[nb] = h.get(nb, 0) + k * w

    def neighbors(self, site):
        x, y = site
        return ((x, y + 1), (x + 1, y), (x, y - 1), (x - 1, y))

    def run(self, order: str = "fifo", rng: random.Random | None = None, batch: bool = True,
            log: list | None = None):
        if order == "fifo":
            self._run_fifo(batch, log)
        elif order == "random":
            self._run_random(rng or random.Random(), batch, log)
        else:
            raise ValueError(f"unknown order {order!r}")

    def _run_fifo(self, batch, log):
        queue = deque(sorted(s for s, v in self.h.items() if v >= self.fire_at))
        queued = set(queue)
        h = self.h
        while queue:
            site = queue.popleft()
            queued.discard(site)
            k = self.max_fires(h.get(site, 0))
            if k == 0:
                continue
            if not batch:
                k = 1
            self.fire(site, k)
            if log is not None:
                log.append((site, k))
            for nb in self.neighbors(site) + (site,):
                if nb not in queued and h.get(nb, 0) >= self.fire_at:
                    queue.append(nb)
                    queued.add(nb)

    def _run_random(self, rng, batch, log):
        h = self.h
        active = sorted(s for s, v in h.items() if v >= self.fire_at)
        while active:
            site = active[rng.randrange(len(active))]
            kmax = self.max_fires(h[site])
            k = rng.randint(1, kmax) if batch else 1
            self.fire(site, k)
            if log is not None:
                log.append((site, k))
            touched = self.neighbors(site) + (site,)
            active = sorted(
                set(s for s in active if h.get(s, 0) >= self.fire_at)
                | {s for s in touched if h.get(s, 0) >= self.fire_at}
            )


def _common_denominator(values: Iterable[Fraction]) -> int:
    den = 1
    for v in values:
        den = den * v.denominator // math.gcd(den, v.denominator)
    return den


def _sparse(field: HeightField, scale: int) -> dict:
    R = field.radius
    out = {}
    xs, ys = np.nonzero(field.cells != 0)
    for i, j in zip(xs, ys):
        v = field.cells[i, j] * scale
        assert v.denominator == 1
        out[(int(i) - R, int(j) - R)] = int(v)
    return out


def _dense(values: dict, radius: int, scale, fill) -> np.ndarray:
    side = 2 * radius + 1
    out = np.full((side, side), fill, dtype=object)
    for (x, y), v in values.items():
        out[x + radius, y + radius] = v if scale is None else Fraction(v, scale)
    return out


def _extent(*dicts) -> int:
    r = 0
    for dct in dicts:
        for (x, y), v in dct.items():
            if v:
                r = max(r, abs(x), abs(y))
    return r


def _stabilize_rational(field, rule, grow, order, seed, batch) -> StabilizationResult:
    cells = field.cells
    vals = [to_fraction(v) for v in cells.ravel() if v != 0]
    D = _common_denominator(vals + list(rule.weights) + [rule.threshold])
    send = [int(w * D) for w in rule.weights]
    thr = int(rule.threshold * D)
    scaled = HeightField(np.vectorize(to_fraction, otypes=[object])(cells), RATIONAL)
    pile = _ExactPile(_sparse(scaled, D), send, thr, thr, None if grow else field.radius)
    rng = random.Random(seed)
    pile.run(order, rng, batch)
    total = sum(pile.topples.values(), 0)
    radius = max(field.radius, _extent(pile.h, pile.topples))
    touched = radius > field.radius
    heights = _dense(pile.h, radius, D, Fraction(0))
    topples = _dense(pile.topples, radius, None, 0)
    return StabilizationResult(
        final=HeightField(heights, RATIONAL),
        odometer=Odometer(topples, rule.threshold),
        rule=rule,
        initial_mass=scaled.total_mass(),
        leaked_mass=total * rule.leak_per_topple,
        max_topples=max(pile.topples.values(), default=0),
        boundary_touched=touched,
        threshold=rule.threshold,
    )


def apply_T(u: np.ndarray, rule: ToppleRule) -> np.ndarray:
    """Mass received minus mass emitted: ``sum_y c(y->x)/(c d) u(y) - u(x)``.

    Sites outside the grid count as ``u = 0``.  Object arrays (Fractions or
    ints) are evaluated exactly with the rule's exact parameters.
    """
    u = np.asarray(u)
    if u.dtype == object:
        r = rule.exact()
        zero = Fraction(0)
    else:
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")
        r = rule.as_float()
        zero = 0.0
    p = np.full((u.shape[0] + 2, u.shape[1] + 2), zero, dtype=u.dtype)
    p[1:-1, 1:-1] = u
    received = (
        r.c_right * p[:-2, 1:-1]
        + r.c_left * p[2:, 1:-1]
        + r.c_up * p[1:-1, :-2]
        + r.c_down * p[1:-1, 2:]
    )
    return received / r.threshold - u


def odometer_residual(result: StabilizationResult, n) -> np.ndarray:
    """``T u - (f - n delta_0)`` for a point-source run; zero when consistent."""
    u = result.odometer.u
    f = result.final.cells
    src = np.zeros_like(f) if f.dtype != object else np.full(f.shape, Fraction(0), dtype=object)
    R = result.radius
    src[R, R] = to_fraction(n) if f.dtype == object else float(n)
    return apply_T(u, result.rule) - (f - src)


def stabilize_modified_asm(n: int, radius: int | None = None, *, record: list | None = None
                           ) -> StabilizationResult:
    """Integer ASM variant: fire at 5 or more chips, send 1 chip to each neighbor.

    Every firing site keeps at least one chip, so visited sites end in
    ``[1, 5)``.  ``radius=None`` lets the grid grow; a fixed radius raises
    :class:`GridOverflowError` when exceeded.  ``record`` collects the firing
    sequence as ``((x, y), k)`` batches.
    """
    if int(n) != n or n < 0:
        raise ValueError("n must be a nonnegative integer")
    n = int(n)
    pile = _ExactPile({(0, 0): n} if n else {}, (1, 1, 1, 1), 4, 5, radius)
    pile.run("fifo", log=record)
    R = max(radius or 0, _extent(pile.h, pile.topples))
    heights = _dense(pile.h, R, None, 0)
    topples = _dense(pile.topples, R, None, 0)
    return StabilizationResult(
        final=HeightField(heights, RATIONAL),
        odometer=Odometer(topples, 4),
        rule=None,
        initial_mass=n,
        leaked_mass=0,
        max_topples=max(pile.topples.values(), default=0),
        threshold=5,
    )


@dataclass
class CouplingReport:
    """Outcome of replaying the modified-ASM firing sequence in the leaky model."""

    n: int
    m_n: int
    t: Fraction
    modified: np.ndarray  # final integer heights B
    leaky: np.ndarray  # final Fraction heights L
    visited: np.ndarray
    firings: int
    batches: int
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def coupled_run(n: int, t: Fraction | None = None) -> CouplingReport:
    """Couple the modified ASM with the leaky model at ``d = 1 + t``.

    The modified ASM is run first to get ``m_n``; ``t`` defaults to
    ``1 / (8 m_n)``.  The identical firing sequence is then replayed in the
    leaky model with exact arithmetic, asserting legality of every firing
    and ``B - 1 < L <= B`` at the fired site after every batch.  Raises
    :class:`CouplingError` on any violation.
    """
    log: list = []
    base = stabilize_modified_asm(n, record=log)
    m = int(base.max_topples)
    R = base.radius
    if m == 0:
        B = base.final.cells
        return CouplingReport(int(n), 0, Fraction(0), B, np.array(B, dtype=object) * Fraction(1),
                              base.visited, 0, 0,
                              {"ceil_match": True, "visited_equal": True, "same_firings": True,
                               "sandwich": True, "both_stable": True})
    t = Fraction(1, 8 * m) if t is None else to_fraction(t)
    if not 0 < t < Fraction(1, 4 * m):
        raise ValueError("coupling needs 0 < t < 1/(4 m_n)")
    # leaky heights scaled by D so that the threshold 4(1+t) and the unit
    # chip transfer are both integers
    D = t.denominator
    thr_L = int(4 * (1 + t) * D)
    L = {(0, 0): int(n) * D}
    Bh = {(0, 0): int(n)}
    fired: dict = {}
    for site, k in log:
        b = Bh.get(site, 0)
        lv = L.get(site, 0)
        if b - 4 * (k - 1) < 5:
            raise CouplingError(f"modified ASM firing at {site} is not legal")
        if lv < k * thr_L:
            raise CouplingError(f"leaky firing at {site} x{k} is not legal (L={Fraction(lv, D)})")
        Bh[site] = b - 4 * k
        L[site] = lv - k * thr_L
        fired[site] = fired.get(site, 0) + k
        x, y = site
        for nb in ((x, y + 1), (x + 1, y), (x, y - 1), (x - 1, y)):
            Bh[nb] = Bh.get(nb, 0) + k
            L[nb] = L.get(nb, 0) + k * D
        b, lv = Bh[site], L[site]
        if not (D * (b - 1) < lv < D * b):
            raise CouplingError(f"B - 1 < L < B violated at {site} after firing")
    Bgrid = _dense(Bh, R, None, 0)
    Lgrid = _dense(L, R, D, Fraction(0))
    if not np.array_equal(Bgrid, base.final.cells):
        raise CouplingError("replayed modified ASM differs from the reference run")
    ceil_L = np.vectorize(lambda v: math.ceil(v), otypes=[object])(Lgrid)
    unstable_L = any(v >= thr_L for v in L.values())
    unstable_B = any(v >= 5 for v in Bh.values())
    sandwich = all(D * (Bh.get(s, 0) - 1) < v <= D * Bh.get(s, 0) for s, v in L.items())
    strict = all(L[s] < D * Bh[s] for s in fired)
    checks = {
        "ceil_match": bool(np.array_equal(ceil_L, Bgrid)),
        "visited_equal": True,  # identical firing sequence by construction
        "same_firings": sum(fired.values()) == int(base.odometer.total_topples()),
        "sandwich": sandwich and strict,
        "both_stable": not unstable_L and not unstable_B,
    }
    report = CouplingReport(int(n), m, t, Bgrid, Lgrid, base.visited,
                            sum(fired.values()), len(log), checks)
    if not report.passed:
        failed = [k for k, v in checks.items() if not v]
        raise CouplingError(f"coupling checks failed: {failed}")
    return report


@dataclass
class RadialProfile:
    """Outermost visited lattice point along each direction."""

    angles: np.ndarray
    lattice: np.ndarray  # steps along the dominant axis (L-infinity norm)
    euclidean: np.ndarray
    points: np.ndarray  # (k, 2) integer lattice points


def _as_grid(visited) -> np.ndarray:
    if isinstance(visited, np.ndarray):
        return visited.astype(bool)
    sites = list(visited)
    if not sites:
        raise ValueError("visited set is empty")
    R = max(max(abs(x), abs(y)) for x, y in sites)
    g = np.zeros((2 * R + 1, 2 * R + 1), bool)
    for x, y in sites:
        g[x + R, y + R] = True
    return g


def radial_profile(visited, slopes=None, *, angles=None) -> RadialProfile:
    """Largest step ``r`` with the lattice point nearest ``r * direction`` visited.

    Directions are slopes ``a`` (the ray through ``(r, a r)``) or angles in
    radians.  ``visited`` is a boolean grid or a set of ``(x, y)`` sites.
    """
    g = _as_grid(visited)
    if not g.any():
        raise ValueError("visited set is empty")
    if (slopes is None) == (angles is None):
        raise ValueError("give exactly one of slopes or angles")
    theta = np.arctan(np.asarray(slopes, float)) if angles is None else np.asarray(angles, float)
    theta = np.atleast_1d(theta)
    R = (g.shape[0] - 1) // 2
    steps = np.arange(R + 1)
    lat = np.zeros(theta.size, int)
    pts = np.zeros((theta.size, 2), int)
    for k, th in enumerate(theta):
        cx, sy = math.cos(th), math.sin(th)
        m = max(abs(cx), abs(sy))
        px = np.floor(steps * (cx / m) + 0.5).astype(int)
        py = np.floor(steps * (sy / m) + 0.5).astype(int)
        ok = (np.abs(px) <= R) & (np.abs(py) <= R)
        hit = np.zeros(steps.size, bool)
        hit[ok] = g[px[ok] + R, py[ok] + R]
        idx = np.nonzero(hit)[0]
        r = int(idx[-1]) if idx.size else 0
        lat[k] = r
        pts[k] = (px[r], py[r])
    return RadialProfile(theta, lat, np.hypot(pts[:, 0], pts[:, 1]), pts)
