"""Death probabilities of the killed random walk.

A walker starts at the origin.  At every step it dies with probability
``1 - 1/d`` and otherwise moves one site north, east, south or west with
probabilities ``c_dir / (c d)``.  ``P_d(x)`` is the probability that it dies
at ``x``.  Three independent routes are provided:

* dynamic programming over the number of steps (float or exact integers),
* closed forms for the two-directional walk and for whole vertical lines,
* trapezoid quadrature of a one-dimensional contour integral in ``w``.

Probabilities are returned as natural logarithms unless stated otherwise.
Grids follow :mod:`leaky_asm.sandpile`: ``log_p[x + R, y + R]``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .sandpile import ToppleRule, to_fraction


@dataclass(frozen=True)
class StepDistribution:
    """One-step law of the killed walk for a given rule."""

    p_up: object
    p_right: object
    p_down: object
    p_left: object
    p_kill: object

    @classmethod
    def from_rule(cls, rule: ToppleRule) -> "StepDistribution":
        thr = rule.threshold
        return cls(rule.c_up / thr, rule.c_right / thr, rule.c_down / thr,
                   rule.c_left / thr, 1 - 1 / rule.d)

    @property
    def moves(self) -> tuple:
        """``(p_up, p_right, p_down, p_left)``."""
        return (self.p_up, self.p_right, self.p_down, self.p_left)

    def total(self):
        return sum(self.moves) + self.p_kill


@dataclass(frozen=True)
class SpectralPolynomial:
    """``P(z, w) = (c d - (c_up z + c_down/z + c_right w + c_left/w)) / (c (d - 1))``.

    ``z`` tracks the vertical coordinate and ``w`` the horizontal one, so the
    Laurent coefficient of ``z^j w^i`` in ``1 / P`` is ``P_d(i, j)``.
    """

    rule: ToppleRule

    def __post_init__(self):
        if self.rule.d <= 1:
            raise ValueError("the spectral polynomial needs d > 1")

    def __call__(self, z, w):
        r = self.rule
        num = r.threshold - (r.c_up * z + r.c_down / z + r.c_right * w + r.c_left / w)
        return num / (r.c * (r.d - 1))


@dataclass
class DeathProbField:
    """Truncated death probabilities on a square grid.

    ``log_p`` holds ``log P^K_d(x)``, the probability of dying at ``x`` within
    the first ``K + 1`` steps.  The truncation misses at most ``tail_bound``
    of total mass.  Exact runs also carry ``numer`` (object array of ints) and
    ``denom`` with ``P^K_d = numer / denom``.
    """

    log_p: np.ndarray
    steps_used: int
    tail_bound: float
    d: object
    weights: tuple
    numer: np.ndarray | None = None
    denom: int | None = None

    @property
    def radius(self) -> int:
        return (self.log_p.shape[0] - 1) // 2

    @property
    def K(self) -> int:
        return self.steps_used

    @property
    def rule(self) -> ToppleRule:
        return ToppleRule(*self.weights, d=self.d)

    def prob(self) -> np.ndarray:
        return np.exp(self.log_p)

    def log_at(self, x: int, y: int) -> float:
        R = self.radius
        if max(abs(x), abs(y)) > R:
            return -math.inf
        return float(self.log_p[x + R, y + R])

    def total(self) -> float:
        return math.fsum(self.prob().ravel())

    def exact_values(self) -> np.ndarray:
        """Object array of exact Fractions (exact runs only)."""
        if self.numer is None:
            raise ValueError("field was computed in float mode")
        return np.vectorize(lambda v: Fraction(v, self.denom), otypes=[object])(self.numer)

    def column_sums(self) -> np.ndarray:
        """``sum_y P(x, y)`` for each ``x``, float."""
        return self.prob().sum(axis=1)

    def exact_column_sums(self) -> list:
        if self.numer is None:
            raise ValueError("field was computed in float mode")
        return [Fraction(sum(row, 0), self.denom) for row in self.numer]

    def metadata(self) -> dict:
        return {
            "d": _plain(self.d),
            "weights": [_plain(w) for w in self.weights],
            "K": self.steps_used,
            "tail_bound": self.tail_bound,
        }


def _plain(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else v.numerator
    return float(v) if not isinstance(v, int) else v


def horizon(d, tail_eps: float) -> int:
    """Smallest ``K`` with ``(1/d)^K <= tail_eps``."""
    if tail_eps <= 0:
        raise ValueError("tail_eps must be positive")
    d = float(d)
    if d <= 1:
        raise ValueError("d must exceed 1")
    if tail_eps >= 1:
        return 0
    return max(0, int(math.ceil(math.log(tail_eps) / -math.log(d) - 1e-12)))


def death_prob_dp(rule: ToppleRule, radius: int | None = None, tail_eps: float = 1e-30,
                  *, exact: bool = False, steps: int | None = None) -> DeathProbField:
    """Death probabilities by stepping the surviving walker ``K`` times.

    Parameters
    ----------
    rule : ToppleRule
        Walk weights and ``d > 1``.
    radius : int, optional
        Grid radius; defaults to ``K`` and must be at least ``K`` so that no
        mass can leave the grid before the horizon.
    tail_eps : float
        Target for the survival probability ``(1/d)^K`` after the horizon.
    exact : bool
        Use exact integer arithmetic.  Needs rational weights and ``d``.
    steps : int, optional
        Override ``K`` directly (must still satisfy ``radius >= K``).

    Returns
    -------
    DeathProbField
        ``log P^K`` with ``P^K(x) = p_kill * sum_{k<=K} q_k(x)``, where
        ``q_k`` is the law of a walker alive after ``k`` moves.

    Notes
    -----
    Float runs keep ``q_k`` rescaled by its maximum each step, so all
    entries are accurate to a few ulps relative (every term is positive).
    A site whose value falls more than ~300 decades below the peak of its
    step becomes ``-inf``; such sites are far below any classification
    threshold used here.
    """
    if rule.d <= 1:
        raise ValueError("death probabilities need d > 1")
    K = horizon(rule.d, tail_eps) if steps is None else int(steps)
    if K < 0:
        raise ValueError("steps must be nonnegative")
    if radius is None:
        radius = K
    if radius < K:
        raise ValueError(
            f"radius {radius} < K = {K}: the walk could leave the grid within the "
            f"horizon, so truncation would not be rigorous")
    if exact:
        return _dp_exact(rule.exact(), radius, K)
    return _dp_float(rule.as_float(), radius, K)


def _dp_float(rule: ToppleRule, radius: int, K: int) -> DeathProbField:
    sd = StepDistribution.from_rule(rule)
    pu, pr, pdn, pl = sd.moves
    side = 2 * radius + 1
    c0 = radius
    # q is kept on a box of half-width k + 1 around the origin
    q = np.zeros((side, side))
    q[c0, c0] = 1.0
    log_scale = 0.0
    log_kill = math.log(sd.p_kill)
    acc = np.full((side, side), -np.inf)
    with np.errstate(divide="ignore"):
        for k in range(K + 1):
            lo, hi = c0 - k, c0 + k + 1
            box = q[lo:hi, lo:hi]
            acc[lo:hi, lo:hi] = np.logaddexp(
                acc[lo:hi, lo:hi], np.log(box) + (log_kill + log_scale))
            if k == K:
                break
            lo2, hi2 = lo - 1, hi + 1
            new = np.zeros((hi2 - lo2, hi2 - lo2))
            # x shifts along axis 0, y along axis 1
            new[2:, 1:-1] += pr * box
            new[:-2, 1:-1] += pl * box
            new[1:-1, 2:] += pu * box
            new[1:-1, :-2] += pdn * box
            m = new.max()
            q[lo2:hi2, lo2:hi2] = new / m
            log_scale += math.log(m)
    return DeathProbField(acc, K, float(rule.d) ** -K, rule.d, rule.weights)


def _dp_exact(rule: ToppleRule, radius: int, K: int) -> DeathProbField:
    sd = StepDistribution.from_rule(rule)
    moves = [to_fraction(p) for p in sd.moves]
    D = 1
    for p in moves:
        D = D * p.denominator // math.gcd(D, p.denominator)
    e_up, e_right, e_down, e_left = (int(p * D) for p in moves)
    side = 2 * radius + 1
    c0 = radius
    # R_k = q_k * D^K, an integer while k <= K
    q = np.full((side, side), 0, dtype=object)
    q[c0, c0] = D ** K
    acc = np.full((side, side), 0, dtype=object)
    for k in range(K + 1):
        lo, hi = c0 - k, c0 + k + 1
        box = q[lo:hi, lo:hi]
        acc[lo:hi, lo:hi] += box
        if k == K:
            break
        lo2, hi2 = lo - 1, hi + 1
        new = np.full((hi2 - lo2, hi2 - lo2), 0, dtype=object)
        if e_right:
            new[2:, 1:-1] += e_right * box
        if e_left:
            new[:-2, 1:-1] += e_left * box
        if e_up:
            new[1:-1, 2:] += e_up * box
        if e_down:
            new[1:-1, :-2] += e_down * box
        q[lo2:hi2, lo2:hi2] = new // D
    pk = to_fraction(sd.p_kill)
    numer = acc * pk.numerator
    denom = pk.denominator * D ** K
    log_denom = math.log(denom)
    log_p = np.array(
        [-math.inf if v == 0 else math.log(v) - log_denom for v in numer.ravel()]
    ).reshape(numer.shape)
    return DeathProbField(log_p, K, float(Fraction(1) / rule.d ** K), rule.d, rule.weights,
                          numer=numer, denom=denom)


def death_prob_ne(i: int, j: int, d, *, log: bool = False):
    """Death probability of the walk that only steps north or east.

    ``P(i, j) = ((d-1)/d) * binom(i+j, i) * (2d)^-(i+j)`` for ``i, j >= 0``.
    The walk corresponds to ``ToppleRule(1, 1, 0, 0, d)``.
    """
    d = float(d)
    if d <= 1:
        raise ValueError("d must exceed 1")
    if i < 0 or j < 0:
        return -math.inf if log else 0.0
    n = i + j
    lp = (math.log1p(-1 / d) + gammaln(n + 1) - gammaln(i + 1) - gammaln(j + 1)
          - n * math.log(2 * d))
    return float(lp) if log else math.exp(lp)


def z_roots(w, d) -> tuple:
    """Roots ``(z_minus, z_plus)`` of ``z + 1/z = 4d - w - 1/w``, ``|z_minus| <= 1``."""
    if w == 0:
        raise ZeroDivisionError("w must be nonzero")
    d = float(d)
    w = complex(w)
    v = 4 * d - w - 1 / w
    s = cmath.sqrt(v * v - 4)
    zp = (v + s) / 2
    if abs(zp) < 1:
        zp = (v - s) / 2
    zm = 1 / zp
    return zm, zp


def coeff_z(j: int, w, d, c: float = 4.0):
    """Coefficient of ``z^j`` in ``1 / P(z, w)`` for the uniform rule."""
    d = float(d)
    zm, zp = z_roots(w, d)
    gap = zp - zm
    if gap == 0:
        raise ZeroDivisionError("w is a branch point: z_plus = 1/z_plus")
    return c * (d - 1) * zp ** (-abs(j)) / gap


def z_plus_one(d) -> float:
    """``z_plus(1) = 2d - 1 + sqrt((2d-1)^2 - 1)``."""
    d = float(d)
    b = 2 * d - 1
    return b + math.sqrt((b - 1) * (b + 1))


def line_death_prob(j: int, d, *, log: bool = False):
    """Probability of dying on the vertical line ``{(j, k) : k in Z}``, uniform rule.

    Equals ``c (d-1) z^(1-|j|) / (z^2 - 1)`` with ``z = z_plus(1)`` and ``c = 4``.
    """
    d = float(d)
    if d <= 1:
        raise ValueError("d must exceed 1")
    z = z_plus_one(d)
    lz = math.log(z)
    lp = math.log(4 * (d - 1)) + (1 - abs(j)) * lz - math.log((z - 1) * (z + 1))
    return lp if log else math.exp(lp)


def line_death_prob_decimal(j: int, d, digits: int = 60) -> Decimal:
    """High-precision :func:`line_death_prob` for an exactly given ``d``."""
    dq = to_fraction(d)
    with localcontext() as ctx:
        ctx.prec = digits
        dd = Decimal(dq.numerator) / Decimal(dq.denominator)
        b = 2 * dd - 1
        z = b + (b * b - 1).sqrt()
        return 4 * (dd - 1) * z ** (1 - abs(j)) / (z * z - 1)


class QuadratureError(RuntimeError):
    """Contour quadrature failed its convergence or reality check."""


@dataclass
class ContourResult:
    log_p: float
    points: int
    rel_change: float
    imag_ratio: float
    radius: float


def _contour_sum(r: int, k: int, d: float, rho: float, N: int):
    theta = 2 * np.pi * np.arange(N) / N
    w = rho * np.exp(1j * theta)
    v = 4 * d - w - 1 / w
    s = np.sqrt(v * v - 4)
    zp = (v + s) / 2
    flip = np.abs(zp) < 1
    s = np.where(flip, -s, s)
    zp = np.where(flip, (v - s) / 2, zp)
    # integrand of (1/2pi) * int z^-r w^-k / s dtheta, in log form
    L = -r * np.log(zp) - k * np.log(w) - np.log(s)
    M = L.real.max()
    total = np.exp(L - M).sum() / N
    return M, total


def death_prob_contour(r: int, a, d, quad_points: int = 64, *, radius="saddle",
                       rtol: float = 1e-13, max_points: int = 1 << 20,
                       details: bool = False):
    """``log P_d(r, a r)`` for the uniform rule by trapezoid quadrature in ``w``.

    Integrates ``c (d-1) / (2 pi i) * z_plus(w)^-r w^-(a r) / (w sqrt(v^2 - 4))``
    over a circle ``|w| = rho``, doubling the point count until consecutive
    values agree to ``rtol``.

    Parameters
    ----------
    r : int
        Horizontal distance, ``r >= 0``.
    a : float or Fraction
        Slope; ``a * r`` must be an integer.
    d : float
        Leak factor, ``d > 1``.
    quad_points : int
        Starting number of nodes.
    radius : "saddle", "unit" or float
        Circle radius.  ``"unit"`` is ``|w| = 1``.  ``"saddle"`` (default)
        uses ``rho = w_plus(a, d)``, where the integrand has no oscillation
        and hence no cancellation; any radius strictly between the inner
        branch points gives the same value.
    details : bool
        Return a :class:`ContourResult` instead of the bare log value.

    Raises
    ------
    ValueError
        If ``a * r`` is not an integer or the radius is outside the annulus.
    QuadratureError
        If the imaginary part does not vanish to ``1e-12`` relative or the
        point count exceeds ``max_points`` before converging.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    d = float(d)
    if d <= 1:
        raise ValueError("d must exceed 1")
    k_exact = to_fraction(a) * r if not isinstance(a, float) else a * r
    k = int(round(float(k_exact)))
    if abs(float(k_exact) - k) > 1e-9:
        raise ValueError(f"a * r = {float(k_exact)} is not an integer")
    # the uniform field is dihedrally symmetric
    r, k = abs(int(r)), abs(k)
    if k > r:
        r, k = k, r
    w2 = 2 * d - 1 - 2 * math.sqrt(d * (d - 1))
    w3 = 1 / w2
    if radius == "saddle":
        from .shape import saddle
        rho = saddle(k / r if r else 0.0, d).w_plus
    elif radius == "unit":
        rho = 1.0
    else:
        rho = float(radius)
    if not w2 < rho < w3:
        raise ValueError(f"contour radius {rho} is outside the annulus ({w2}, {w3})")
    N = int(quad_points)
    if N < 4:
        raise ValueError("quad_points must be at least 4")
    M, prev = _contour_sum(r, k, d, rho, N)
    while True:
        N *= 2
        if N > max_points:
            raise QuadratureError(f"no convergence with {max_points} nodes")
        M2, cur = _contour_sum(r, k, d, rho, N)
        cur = cur * math.exp(M2 - M)
        change = abs(cur - prev) / abs(cur)
        prev = cur
        if change < rtol:
            break
    imag_ratio = abs(cur.imag) / abs(cur.real)
    if imag_ratio > 1e-12:
        raise QuadratureError(f"imaginary residual {imag_ratio:.3g} exceeds 1e-12")
    if cur.real <= 0:
        raise QuadratureError("quadrature returned a nonpositive probability")
    lp = M + math.log(cur.real) + math.log(4 * (d - 1))
    if details:
        return ContourResult(lp, N, change, imag_ratio, rho)
    return lp
