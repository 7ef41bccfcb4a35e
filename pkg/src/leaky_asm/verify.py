"""Cross-module verification experiments.

Each ``check_*`` function runs one experiment and returns a
:class:`VerificationReport`: a list of named measurements with their bounds,
the oracles used, and an aggregate pass flag.
"""
from __future__ import annotations

import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import convolve

from . import krw, shape
from .sandpile import (RATIONAL, CouplingError, ToppleRule, apply_T, coupled_run,
                       point_source, radial_profile, stabilize, stabilize_modified_asm)


@dataclass
class ExperimentConfig:
    """Parameters of one verification experiment."""

    experiment: str
    n: list = field(default_factory=list)
    d: list = field(default_factory=list)
    weights: tuple = (1, 1, 1, 1)
    radius: int | None = None
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        if any(v <= 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be positive")
        if self.experiment in ("sandwich", "shape", "leak", "coupling") and not self.n:
            raise ValueError(f"experiment {self.experiment!r} needs a nonempty n sweep")


@dataclass
class Check:
    name: str
    measured: object
    bound: object
    passed: bool
    note: str = ""


@dataclass
class VerificationReport:
    name: str
    checks: list = field(default_factory=list)
    oracles: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    inconclusive: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, measured, bound, passed, note="") -> Check:
        c = Check(name, _plain(measured), _plain(bound), bool(passed), note)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "oracles": self.oracles,
            "inconclusive": self.inconclusive,
            "checks": [asdict(c) for c in self.checks],
            "tables": {k: _plain(v) for k, v in self.tables.items()},
        }

    def summary_lines(self) -> list:
        return [f"{'PASS' if c.passed else 'FAIL'} {self.name}:{c.name} "
                f"measured={c.measured} bound={c.bound}" for c in self.checks]


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


def _boundary_adjacent(visited: np.ndarray) -> np.ndarray:
    p = np.pad(visited, 1)
    nb = p[2:, 1:-1] | p[:-2, 1:-1] | p[1:-1, 2:] | p[1:-1, :-2]
    nb_un = ~(p[2:, 1:-1] & p[:-2, 1:-1] & p[1:-1, 2:] & p[1:-1, :-2])
    return (visited & nb_un) | (~visited & nb)


def check_sandwich(n, d, rule: ToppleRule | None = None, *, tail_eps: float = 1e-30,
                   margin: int = 4) -> VerificationReport:
    """Compare the visited set with the death-probability sandwich.

    Sites with ``P_d < c(d-1)/n`` must be unvisited and sites with
    ``P_d >= cd/n`` must be visited.  The DP value ``P^K`` can undershoot the
    true ``P_d`` by at most ``tail_bound``; a site whose classification could
    flip within that slack (plus float rounding) counts as inconclusive.
    """
    rule = ToppleRule.uniform(d) if rule is None else rule
    rule = rule.as_float()
    n = float(n)
    rep = VerificationReport(f"sandwich(n={n:g}, d={rule.d:g}, w={list(rule.weights)})",
                             oracles=["death_prob_dp", "stabilize"])
    res = stabilize(point_source(n, 1), rule)
    vis = res.visited
    R = res.radius
    xs, ys = np.nonzero(vis)
    ext = int(max(np.abs(xs - R).max(), np.abs(ys - R).max())) if xs.size else 0
    K = krw.horizon(rule.d, tail_eps)
    Rd = max(K, ext + margin)
    fld = krw.death_prob_dp(rule, Rd, tail_eps)
    # compare on the common square of radius ext + margin
    Rc = ext + margin
    lp = fld.log_p[Rd - Rc:Rd + Rc + 1, Rd - Rc:Rd + Rc + 1]
    v = np.zeros_like(lp, dtype=bool)
    lo = max(R - Rc, 0)
    sub = vis[lo:R + Rc + 1, lo:R + Rc + 1]
    off = Rc - (R - lo)
    v[off:off + sub.shape[0], off:off + sub.shape[1]] = sub
    low = math.log(rule.c * (rule.d - 1) / n)
    high = math.log(rule.threshold / n)
    rel = 1e-12
    p = np.exp(lp)
    upper = p * (1 + rel) + fld.tail_bound
    lower = p * (1 - rel)
    must_out = upper < math.exp(low)
    must_in = lower >= math.exp(high)
    incon_out = (lp < low) & ~must_out
    incon_in = (lp >= high) & ~must_in
    viol_out = int(np.count_nonzero(must_out & v))
    viol_in = int(np.count_nonzero(must_in & ~v))
    inconclusive = int(np.count_nonzero(incon_out | incon_in))
    adj = int(np.count_nonzero(_boundary_adjacent(v)))
    rep.inconclusive = inconclusive
    rep.add("unvisited_below_outer", viol_out, 0, viol_out == 0)
    rep.add("visited_above_inner", viol_in, 0, viol_in == 0)
    frac = inconclusive / max(adj, 1)
    rep.add("inconclusive_fraction", frac, 0.05, frac < 0.05,
            f"{inconclusive} of {adj} boundary-adjacent sites")
    rep.tables = {"visited_count": res.visited_count, "K": fld.K, "tail_bound": fld.tail_bound,
                  "in_gap": int(np.count_nonzero((lp >= low) & (lp < high)))}
    return rep


def check_operator_identities(rule: ToppleRule, radius: int | None = None, *,
                              tail_eps: float = 1e-30, exact: bool = True,
                              seed: int = 0, support: int = 5) -> VerificationReport:
    """Check ``T P_d = -((d-1)/d) delta_0``, the inverse kernel and the constant eigenvector.

    With ``exact=True`` the DP and ``T`` are evaluated in exact arithmetic, so
    the off-origin residual is compared with ``4 (1/d)^K`` without rounding.
    """
    rep = VerificationReport(f"operators(d={float(rule.d):g}, w={[float(w) for w in rule.weights]})",
                             oracles=["death_prob_dp", "apply_T"])
    fld = krw.death_prob_dp(rule, radius, tail_eps, exact=exact)
    K = fld.K
    R = fld.radius
    dd = rule.exact().d if exact else float(rule.d)
    if exact:
        P = np.full((2 * R + 3, 2 * R + 3), Fraction(0), dtype=object)
        P[1:-1, 1:-1] = fld.exact_values()
        TP = apply_T(P, rule)
        origin = TP[R + 1, R + 1]
        TP[R + 1, R + 1] = Fraction(0)
        off = max(abs(v) for v in TP.ravel())
        bound = 4 * (1 / dd) ** K
        target = -(dd - 1) / dd
        rep.add("offorigin_max", float(off), float(bound), off <= bound)
        err = abs(origin - target)
        rep.add("origin_error", float(err), 1e-10, err <= Fraction(1, 10 ** 10))
    else:
        P = np.pad(fld.prob(), 1)
        TP = apply_T(P, rule.as_float())
        origin = TP[R + 1, R + 1]
        TP[R + 1, R + 1] = 0.0
        off = float(np.abs(TP).max())
        bound = 4 * fld.tail_bound + 1e-15
        rep.add("offorigin_max", off, bound, off <= bound, "float mode adds rounding slack")
        err = abs(origin + (dd - 1) / dd)
        rep.add("origin_error", err, 1e-10, err <= 1e-10)
    # inverse kernel round trip on a random field
    fr = rule.as_float()
    rng = np.random.default_rng(seed)
    g = np.zeros((2 * support + 1,) * 2)
    g[:] = rng.standard_normal(g.shape)
    gp = np.pad(g, 1)
    f = apply_T(gp, fr)
    pf = fld.prob() if not exact else np.vectorize(float)(fld.exact_values())
    back = -(float(dd) / (float(dd) - 1)) * convolve(pf, f, mode="full", method="direct")
    c = (back.shape[0] - 1) // 2
    h = (gp.shape[0] - 1) // 2
    rec = back[c - h:c + h + 1, c - h:c + h + 1]
    rt = float(np.abs(rec - gp).max())
    rep.add("inverse_roundtrip", rt, 1e-8, rt < 1e-8)
    # constant field is an eigenvector in the interior
    ones = np.ones((21, 21))
    T1 = apply_T(ones, fr)[1:-1, 1:-1]
    ev = float(np.abs(T1 + (float(dd) - 1) / float(dd)).max())
    rep.add("constant_eigenvalue", ev, 1e-14, ev < 1e-14)
    rep.tables = {"K": K, "radius": R, "tail_bound": fld.tail_bound}
    return rep


def boundary_deviation(n: float, d: float, slopes=None, scale="logn-halfloglogn"):
    """Simulated boundary vs scaled limit curve along lattice slopes.

    Returns ``(slopes, boundary, predicted)`` where ``boundary`` is the
    horizontal extent of the visited set along each slope and ``predicted``
    is ``L * x(a)`` for the unit limit curve with ``L`` from ``scale``.
    """
    a = np.linspace(0, 1, 64) if slopes is None else np.asarray(slopes, float)
    res = stabilize(point_source(n, 1), ToppleRule.uniform(d))
    prof = radial_profile(res.visited, slopes=a)
    L = shape.scale_length(n, scale)
    x = np.array([-1 / shape.saddle(ai, d).S_cr for ai in a])
    return a, prof.lattice.astype(float), L * x


def check_shape_convergence(n_sweep, d: float, *, bound: float = 3.0,
                            scale: str = "logn-halfloglogn") -> VerificationReport:
    """Deviation between the visited boundary and the scaled limit curve over an n sweep.

    For ``d >= 1.5`` every deviation must be at most ``bound`` lattice units.
    Closer to ``d = 1`` the constant offset grows like ``1/sqrt(d - 1)``, so
    the bound is taken relative to the plateau set by the first ``n``.  In
    both cases the largest deviation in the second half of the sweep may
    not exceed the first half's by more than one lattice unit.
    """
    rep = VerificationReport(f"shape(d={float(d):g})", oracles=["stabilize", "saddle"])
    rows = []
    for n in n_sweep:
        a, b, p = boundary_deviation(n, d, scale=scale)
        dev = b - p
        rows.append({"n": float(n), "max_abs": float(np.abs(dev).max()),
                     "mean": float(dev.mean()), "min": float(dev.min()), "max": float(dev.max())})
    devs = [r["max_abs"] for r in rows]
    half = max(1, len(devs) // 2)
    first, second = max(devs[:half]), max(devs[half:] or devs[:half])
    if d >= 1.5:
        rep.add("max_deviation", max(devs), bound, max(devs) <= bound)
    else:
        lim = devs[0] + bound
        rep.add("max_deviation", max(devs), lim, max(devs) <= lim, "plateau-relative bound")
    rep.add("no_growth", second - first, 1.0, second <= first + 1.0,
            "second-half max minus first-half max")
    rep.tables = {"deviations": rows}
    return rep


def boundary_radii(res, n_dirs: int = 512, window: float | None = None) -> np.ndarray:
    """Outer envelope of the visited set: largest Euclidean norm per direction.

    For each of ``n_dirs`` equally spaced angles, the largest norm among
    visited sites whose angle is within ``window`` radians.  The default
    window spans 1.5 lattice spacings at the typical boundary radius, so
    every direction sees at least one boundary site and the envelope is not
    dominated by which lattice points a single ray happens to hit.
    """
    X, Y = res.final.coords()
    v = res.visited
    if not v.any():
        raise ValueError("visited set is empty")
    ang = np.arctan2(Y[v], X[v])
    rr = np.hypot(X[v], Y[v])
    if window is None:
        window = 1.5 / max(float(np.median(rr[rr >= 0.8 * rr.max()])), 1.0)
    th = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
    out = np.empty(n_dirs)
    for k, t in enumerate(th):
        diff = np.abs((ang - t + np.pi) % (2 * np.pi) - np.pi)
        sel = rr[diff <= window]
        out[k] = sel.max() if sel.size else 0.0
    return out


def check_leak_to_zero(n: float, t_sweep, *, max_radius: float = 400.0,
                       aniso_bound: float = 0.05, ratio_tol: float = 0.1,
                       circle_t: float | None = None) -> VerificationReport:
    """Small-leak regime: circularity of the visited set and the inner/outer ratio.

    For each ``t`` the leaky sandpile with ``d = 1 + t`` is simulated when the
    predicted radius ``log(n)/(2 sqrt t)`` is at most ``max_radius``; the
    boundary is scaled by ``log(n)/sqrt(t)`` and its anisotropy (max/min
    radius) reported.  The ratio ``r_i/r_o`` is measured from the level sets
    of ``P_d`` along the axis and the diagonal and compared with
    ``1 + log t / log n``.  ``circle_t`` (default ``1/log n``) is the value
    whose anisotropy must be below ``1 + aniso_bound``.
    """
    n = float(n)
    L = math.log(n)
    circle_t = 1 / L if circle_t is None else circle_t
    rep = VerificationReport(f"leak(n={n:g})", oracles=["stabilize", "death_prob_contour"])
    rows = []
    for t in t_sweep:
        t = float(t)
        row = {"t": t}
        band = shape.leak_to_zero_band(n, t, [0.0, 1.0])
        if not band.valid:
            row["skipped"] = "n t <= 1"
            rep.inconclusive += 1
            rows.append(row)
            continue
        row["predicted_ratio"] = band.ratio
        if band.outer_euclidean <= max_radius:
            res = stabilize(point_source(n, 1), ToppleRule.uniform(1 + t))
            rad = boundary_radii(res) * math.sqrt(t) / L
            row["anisotropy"] = float(rad.max() / rad.min())
            row["scaled_outer_max"] = float(rad.max())
            row["scaled_outer_min"] = float(rad.min())
        ratios = []
        for a in (0, 1):
            ri, ro = shape.exact_radii(n, 1 + t, a)
            ratios.append(ri / ro)
        row["measured_ratio_axis"], row["measured_ratio_diag"] = ratios
        rows.append(row)
        err = max(abs(r - band.ratio) for r in ratios)
        rep.add(f"ratio(t={t:.4g})", err, ratio_tol, err < ratio_tol,
                f"measured {ratios[0]:.4f}/{ratios[1]:.4f} vs {band.ratio:.4f}")
        if math.isclose(t, circle_t, rel_tol=1e-9) and "anisotropy" in row:
            an = row["anisotropy"] - 1
            rep.add(f"anisotropy(t={t:.4g})", an, aniso_bound, an < aniso_bound)
    rep.tables = {"rows": rows}
    return rep


def check_coupling(n_list, *, halvings: int = 2) -> VerificationReport:
    """Coupling of the modified ASM with the leaky model at ``t = 1/(8 m_n)``.

    Also stabilizes the leaky model independently at ``t, t/2, t/4, ...`` and
    checks ``ceil(L) = B`` and equal visited sets for each.
    """
    rep = VerificationReport("coupling", oracles=["coupled_run", "stabilize_modified_asm",
                                                  "stabilize(rational)"])
    rows = []
    for n in n_list:
        n = int(n)
        try:
            cr = coupled_run(n)
            ok = cr.passed
            note = ""
        except CouplingError as exc:
            ok, note, cr = False, str(exc), None
        rep.add(f"coupled(n={n})", ok, True, ok, note)
        if cr is None:
            continue
        rows.append({"n": n, "m_n": cr.m_n, "t": str(cr.t), "firings": cr.firings,
                     "batches": cr.batches, "visited": int(np.count_nonzero(cr.visited))})
        if cr.m_n == 0:
            continue
        base = stabilize_modified_asm(n)
        B = base.final.cells
        Rb = base.radius
        t = cr.t
        for h in range(halvings + 1):
            tt = t / 2 ** h
            res = stabilize(point_source(n, Rb, RATIONAL), ToppleRule.uniform(1 + tt),
                            grow=False)
            Lc = np.vectorize(math.ceil, otypes=[object])(res.final.cells)
            same = bool(np.array_equal(Lc, B)) and bool(np.array_equal(res.visited, base.visited))
            rep.add(f"ceil_limit(n={n}, t={tt})", same, True, same)
    rep.tables = {"runs": rows}
    return rep


def classical_background_asm(n: int) -> np.ndarray:
    """Classical ASM (fire at 4) where every site except the origin starts at -1.

    Returns the final heights on the radius of the companion modified-ASM run;
    sites never reached keep ``-1``.
    """
    from collections import deque

    h: dict = {(0, 0): n - 1}
    queue = deque([(0, 0)] if n - 1 >= 4 else [])
    queued = set(queue)
    while queue:
        s = queue.popleft()
        queued.discard(s)
        v = h.get(s, -1)
        if v < 4:
            continue
        k = v // 4
        h[s] = v - 4 * k
        x, y = s
        for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            h[nb] = h.get(nb, -1) + k
            if h[nb] >= 4 and nb not in queued:
                queue.append(nb)
                queued.add(nb)
    R = max((max(abs(x), abs(y)) for x, y in h), default=0)
    out = np.full((2 * R + 1, 2 * R + 1), -1, dtype=object)
    for (x, y), v in h.items():
        out[x + R, y + R] = v
    return out


SUITES = ("sandwich", "operators", "shape", "leak", "coupling")

DEFAULTS = {
    "sandwich": {"cases": [(1e5, 2.0, (1, 1, 1, 1)), (1e6, 2.0, (1, 1, 1, 1)),
                           (1e5, 1.5, (1, 1, 1, 1)), (1e5, 2.0, (2, 1, 1, 1))]},
    "operators": {"cases": [("3/2", (1, 1, 1, 1)), ("2", (1, 1, 1, 1)), ("5", (1, 1, 1, 1)),
                            ("2", (2, 1, 1, 1))]},
    "shape": {"n": [1e10, 1e20, 1e40, 1e80], "d": 2.0},
    "leak": {"n": 1e7},
    "coupling": {"n": [5, 50, 500, 2000]},
}


def run_suite(suite: str, options: dict | None = None) -> list:
    """Run one named suite with defaults overridden by ``options``; returns reports."""
    o = dict(options or {})
    if suite == "sandwich":
        if "n" in o or "d" in o:
            w = tuple(o.get("weights", (1, 1, 1, 1)))
            ns = o.get("n", 1e6)
            ns = ns if isinstance(ns, (list, tuple)) else [ns]
            cases = [(float(n), float(o.get("d", 2.0)), w) for n in ns]
        else:
            cases = DEFAULTS["sandwich"]["cases"]
        return [check_sandwich(n, d, ToppleRule(*w, d=d)) for n, d, w in cases]
    if suite == "operators":
        if "d" in o:
            cases = [(str(o["d"]), tuple(o.get("weights", (1, 1, 1, 1))))]
        else:
            cases = DEFAULTS["operators"]["cases"]
        return [check_operator_identities(ToppleRule(*w, d=d)) for d, w in cases]
    if suite == "shape":
        ns = o.get("n", DEFAULTS["shape"]["n"])
        ns = ns if isinstance(ns, (list, tuple)) else [ns]
        return [check_shape_convergence(ns, float(o.get("d", DEFAULTS["shape"]["d"])))]
    if suite == "leak":
        n = float(o.get("n", DEFAULTS["leak"]["n"]))
        ts = o.get("t", [1 / math.log(n), n ** -0.5])
        ts = ts if isinstance(ts, (list, tuple)) else [ts]
        return [check_leak_to_zero(n, ts)]
    if suite == "coupling":
        ns = o.get("n", DEFAULTS["coupling"]["n"])
        ns = ns if isinstance(ns, (list, tuple)) else [ns]
        return [check_coupling([int(float(v)) for v in ns])]
    raise ValueError(f"unknown suite {suite!r}")


def worker_count() -> int:
    """Worker cap from the ``LEAKY_THREADS`` environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("LEAKY_THREADS", "1")))
    except ValueError:
        return 1


def run_suites(suites, options: dict | None = None) -> dict:
    """Run several suites, in parallel processes when ``LEAKY_THREADS`` > 1."""
    suites = list(suites)
    workers = min(worker_count(), len(suites))
    if workers <= 1:
        return {s: run_suite(s, options) for s in suites}
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = {s: ex.submit(run_suite, s, options) for s in suites}
        return {s: f.result() for s, f in futs.items()}


def shuffled_orders_agree(field, rule, orders: int = 20, seed: int = 0) -> bool:
    """Stabilize in ``orders`` random firing orders; True if all results match bit for bit."""
    rng = random.Random(seed)
    ref = stabilize(field, rule)
    for _ in range(orders):
        res = stabilize(field, rule, order="random", seed=rng.randrange(2 ** 32))
        if not (np.array_equal(res.final.cells, ref.final.cells)
                and np.array_equal(res.odometer.topples, ref.odometer.topples)):
            return False
    return True
