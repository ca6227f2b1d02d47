#!/usr/bin/env python3
"""
Controlled Allocation Module

Platform that collects each firm's aggregate quantity, splits the total across
markets by maximizing lambda * CS + (1 - lambda) * REV, and pays every firm the
budget-balanced uniform price. Covers:
- the allocation map (water-filling below lambda = 2/3, vertex search above)
- the aggregate price curve and its piecewise-quadratic revenue
- exact single-firm and heuristic multi-firm Stackelberg equilibria
- the controlled-allocation price of anarchy and its lower-bound families
"""

import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize_scalar

from . import config
from .equilibrium import WelfareBreakdown, demand_welfare, efficient_outcome
from .errors import PreconditionError
from .models import UNBOUNDED, CostFunction, EdgeSet, Instance, MarketParams, linear_instance
from .poa_analysis import PoAReport, welfare_ratio

logger = logging.getLogger(__name__)

TWO_THIRDS = 2.0 / 3.0
# Regime switch: below this lambda the allocation objective is strictly concave
CONCAVE_LIMIT = TWO_THIRDS - 1e-12


class AllocationConfig(BaseModel):
    """Platform weight on consumer surplus and the optional price floor d_j <= alpha_j / beta_j."""
    model_config = ConfigDict(frozen=True)

    lam: float = Field(ge=0.0, le=1.0, description="Weight lambda on consumer surplus.")
    price_floor: bool = Field(default=False, description="Cap every market at its zero-price quantity.")

    @property
    def concave(self) -> bool:
        return self.lam < CONCAVE_LIMIT

    @property
    def sigma(self) -> Optional[float]:
        """Demand-slope scaling (2 - 3 lambda) / (1 - lambda) of the aggregate curve."""
        if self.lam >= 1.0:
            return None
        return (2.0 - 3.0 * self.lam) / (1.0 - self.lam)


class Allocation(BaseModel):
    """Per-market demand chosen by the platform for one aggregate quantity."""
    model_config = ConfigDict(frozen=True)

    d: Tuple[float, ...]
    active: Tuple[int, ...] = Field(description="0-based markets with d_j > 0.")
    objective: float = Field(description="lambda * CS + (1 - lambda) * REV at d.")
    uniform_price: float
    total: float = Field(description="Aggregate quantity Q handed to the platform.")
    regime: str = Field(description="'water-filling' or 'vertex'.")

    def as_array(self) -> np.ndarray:
        return np.array(self.d, dtype=float)


class PriceSegment(BaseModel):
    """Interval of Q on which the allocation is affine: d_j(Q) = intercepts_j + slopes_j * Q."""
    model_config = ConfigDict(frozen=True)

    q_start: float
    q_end: float
    intercepts: Tuple[float, ...]
    slopes: Tuple[float, ...]
    active: Tuple[int, ...]
    revenue_coeffs: Tuple[float, float, float] = Field(description="R(Q) = r0 + r1 Q + r2 Q^2.")

    def revenue(self, q: float) -> float:
        r0, r1, r2 = self.revenue_coeffs
        return r0 + r1 * q + r2 * q * q

    def price(self, q: float) -> float:
        return self.revenue(q) / q


class PriceCurve(BaseModel):
    """Uniform price p(A_lambda(Q)) as a function of the aggregate quantity."""
    model_config = ConfigDict(frozen=True)

    lam: float
    price_floor: bool
    regime: str
    segments: Tuple[PriceSegment, ...]
    breakpoints: Tuple[float, ...] = Field(description="0, every active-set change, and the curve end.")
    q_max: float = Field(description="Beyond this aggregate the price is never positive.")
    max_alpha: float

    def price(self, q: float) -> float:
        return float(self.prices(np.array([q]))[0])

    def prices(self, q: np.ndarray) -> np.ndarray:
        """Vectorized uniform price; max alpha at Q = 0."""
        q = np.asarray(q, dtype=float)
        starts = np.array([seg.q_start for seg in self.segments])
        coeffs = np.array([seg.revenue_coeffs for seg in self.segments])
        idx = np.clip(np.searchsorted(starts, q, side="right") - 1, 0, len(self.segments) - 1)
        r0, r1, r2 = coeffs[idx, 0], coeffs[idx, 1], coeffs[idx, 2]
        safe_q = np.where(q > 0.0, q, 1.0)
        out = r0 / safe_q + r1 + r2 * safe_q
        return np.where(q > 0.0, out, self.max_alpha)

    def nodes(self) -> List[Tuple[float, float]]:
        """(Q, price) at every breakpoint."""
        return [(q, self.price(q)) for q in self.breakpoints]


class StackelbergOutcome(BaseModel):
    """A candidate or verified Stackelberg equilibrium of the controlled-allocation game."""
    model_config = ConfigDict(frozen=True)

    s: Tuple[float, ...] = Field(description="Aggregate quantity of each firm.")
    total_q: float
    uniform_price: float
    sw: float = Field(description="Utility of the allocated demand minus production cost.")
    profits: Tuple[float, ...]
    verified: bool
    kind: str = Field(description="'exact' or 'grid-verified'.")
    max_gain: float = Field(default=0.0, description="Largest unilateral profit gain found.")


# Allocation
def _params(markets: Sequence[MarketParams]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.array([mk.alpha for mk in markets], dtype=float),
            np.array([mk.beta for mk in markets], dtype=float))


def objective(markets: Sequence[MarketParams], d: Sequence[float], lam: float) -> float:
    """OBJ(d; lambda) = lambda * CS(d) + (1 - lambda) * REV(d)."""
    _, surplus, revenue = demand_welfare(markets, np.asarray(d, dtype=float))
    return lam * surplus + (1.0 - lam) * revenue


def uniform_price(markets: Sequence[MarketParams], d: Sequence[float]) -> float:
    """
    Budget-balanced uniform price sum_j d_j p_j(d_j) / sum_j d_j.

    Args:
        markets: Market parameters
        d: Allocated demand per market

    Returns:
        float: The uniform price, max_j alpha_j when nothing is allocated
    """
    alpha, beta = _params(markets)
    d = np.asarray(d, dtype=float)
    total = float(d.sum())
    if total <= 0.0:
        return float(alpha.max())
    return float(np.sum(d * (alpha - beta * d)) / total)


def _caps(alpha: np.ndarray, beta: np.ndarray, price_floor: bool) -> np.ndarray:
    return alpha / beta if price_floor else np.full(alpha.shape, np.inf)


def _waterfill(alpha: np.ndarray, beta: np.ndarray, lam: float, q: float, cap: np.ndarray) -> np.ndarray:
    """
    Concave allocation: d_j = clip(((1-lam) alpha_j - mu) / ((2-3lam) beta_j), 0, cap_j)
    with mu chosen so that sum_j d_j = Q. The sum is piecewise linear in mu, so mu is
    found exactly between consecutive breakpoints.
    """
    top = (1.0 - lam) * alpha
    curv = (2.0 - 3.0 * lam) * beta
    bottom = np.where(np.isfinite(cap), top - curv * np.where(np.isfinite(cap), cap, 0.0), -np.inf)

    def supplied(mu: float) -> float:
        return float(np.clip((top - mu) / curv, 0.0, cap).sum())

    if np.isfinite(cap).all() and q >= cap.sum():
        return cap.copy()

    levels = sorted(set(top.tolist()) | set(bottom[np.isfinite(bottom)].tolist()), reverse=True)
    prev_mu, prev_q = levels[0], 0.0
    mu = None
    for level in levels[1:]:
        level_q = supplied(level)
        if level_q >= q:
            mu = prev_mu + (q - prev_q) * (level - prev_mu) / (level_q - prev_q)
            break
        prev_mu, prev_q = level, level_q
    if mu is None:
        # below every level each market is active, and capped iff its cap is finite
        free = ~np.isfinite(cap)
        slope = float(np.sum(1.0 / curv[free]))
        mu = prev_mu - (q - prev_q) / slope
    return np.clip((top - mu) / curv, 0.0, cap)


def _vertex_candidates(cap: np.ndarray, q: float, price_floor: bool):
    """Vertices of {d >= 0, sum d = Q, d <= cap}: a saturated set, one partial market, zeros."""
    m = len(cap)
    if not price_floor:
        for j in range(m):
            d = np.zeros(m)
            d[j] = q
            yield d
        return
    if q >= cap.sum():
        yield cap.copy()
        return
    for j in range(m):
        others = [k for k in range(m) if k != j]
        for size in range(len(others) + 1):
            for saturated in itertools.combinations(others, size):
                filled = float(cap[list(saturated)].sum()) if saturated else 0.0
                rest = q - filled
                if rest < 0.0 or rest > cap[j]:
                    continue
                d = np.zeros(m)
                if saturated:
                    d[list(saturated)] = cap[list(saturated)]
                d[j] = rest
                yield d


def _vertex_allocate(alpha: np.ndarray, beta: np.ndarray, lam: float, q: float, price_floor: bool,
                     max_markets: int) -> np.ndarray:
    if price_floor and len(alpha) > max_markets:
        raise PreconditionError(f"vertex enumeration is limited to {max_markets} markets")
    cap = _caps(alpha, beta, price_floor)
    best, best_value = None, -np.inf
    for d in _vertex_candidates(cap, q, price_floor):
        value = float(np.sum((1.0 - lam) * alpha * d - 0.5 * (2.0 - 3.0 * lam) * beta * d * d))
        # earlier candidates favour lower market indices; replace only on a clear gain
        if best is None or value > best_value + 1e-12 * max(1.0, abs(best_value)):
            best, best_value = d, value
    return best


def allocate(markets: Sequence[MarketParams], q: float, cfg: AllocationConfig,
             max_markets: int = config.VERTEX_MAX_MARKETS) -> Allocation:
    """
    Platform allocation A_lambda(Q).

    Below lambda = 2/3 the objective is strictly concave and solved by water-filling
    (markets activate in descending alpha). From 2/3 on it is linear or convex and the
    best vertex of the feasible polytope is taken, ties to the lowest market index.
    With the price floor, a total above sum_j alpha_j / beta_j fills every market to its
    cap and the excess is discarded.

    Args:
        markets: Market parameters
        q: Aggregate quantity supplied by the firms
        cfg: Platform weight and price-floor flag
        max_markets: Size guard for the vertex enumeration

    Returns:
        Allocation: Demand per market with objective and uniform price
    """
    if q < 0.0 or not math.isfinite(q):
        raise PreconditionError("aggregate quantity must be a finite nonnegative number")
    alpha, beta = _params(markets)
    regime = "water-filling" if cfg.concave else "vertex"
    if q == 0.0:
        d = np.zeros(len(markets))
    elif cfg.concave:
        d = _waterfill(alpha, beta, cfg.lam, q, _caps(alpha, beta, cfg.price_floor))
    else:
        d = _vertex_allocate(alpha, beta, cfg.lam, q, cfg.price_floor, max_markets)
    return Allocation(
        d=tuple(float(x) for x in d),
        active=tuple(int(j) for j in np.nonzero(d > 0.0)[0]),
        objective=objective(markets, d, cfg.lam),
        uniform_price=uniform_price(markets, d),
        total=q,
        regime=regime,
    )


# Price curve
def _revenue_coeffs(alpha: np.ndarray, beta: np.ndarray, intercepts: np.ndarray,
                    slopes: np.ndarray) -> Tuple[float, float, float]:
    r0 = float(np.sum(intercepts * alpha - beta * intercepts ** 2))
    r1 = float(np.sum(slopes * alpha - 2.0 * beta * intercepts * slopes))
    r2 = float(-np.sum(beta * slopes ** 2))
    return r0, r1, r2


def _affine_segment(alpha: np.ndarray, beta: np.ndarray, lo: float, hi: float, intercepts: np.ndarray,
                    slopes: np.ndarray, anchored: bool) -> PriceSegment:
    if anchored:
        # d(0) = 0 on the first segment
        intercepts = np.zeros_like(intercepts)
    active = tuple(int(j) for j in np.nonzero((np.abs(intercepts) + np.abs(slopes)) > 0.0)[0])
    return PriceSegment(
        q_start=lo, q_end=hi,
        intercepts=tuple(float(x) for x in intercepts),
        slopes=tuple(float(x) for x in slopes),
        active=active,
        revenue_coeffs=_revenue_coeffs(alpha, beta, intercepts, slopes),
    )


def _sampled_segment(markets: Sequence[MarketParams], cfg: AllocationConfig, lo: float, hi: float,
                     q_a: float, q_b: float) -> PriceSegment:
    """Vertex-regime segment from two allocations inside it; a fixed vertex pattern is affine in Q."""
    alpha, beta = _params(markets)
    d_lo = allocate(markets, q_a, cfg).as_array()
    d_hi = allocate(markets, q_b, cfg).as_array()
    slopes = (d_hi - d_lo) / (q_b - q_a)
    intercepts = d_lo - slopes * q_a
    return _affine_segment(alpha, beta, lo, hi, intercepts, slopes, anchored=lo == 0.0)


def _concave_segment(markets: Sequence[MarketParams], cfg: AllocationConfig, lo: float, hi: float) -> PriceSegment:
    """
    Water-filling segment built from its active set. Free markets share the level
    mu(Q) = (sum_F top_j / curv_j + sum_C cap_j - Q) / sum_F 1 / curv_j, capped
    markets sit at their cap and the rest at zero.
    """
    alpha, beta = _params(markets)
    top = (1.0 - cfg.lam) * alpha
    curv = (2.0 - 3.0 * cfg.lam) * beta
    cap = _caps(alpha, beta, cfg.price_floor)
    mid = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 1.0
    d_mid = allocate(markets, mid, cfg).as_array()
    capped = np.isfinite(cap) & (d_mid >= cap)
    free = (d_mid > 0.0) & ~capped

    intercepts = np.where(capped, np.where(np.isfinite(cap), cap, 0.0), 0.0)
    slopes = np.zeros(len(markets))
    if free.any():
        inv = np.where(free, 1.0 / curv, 0.0)
        total_inv = float(inv.sum())
        level = float(np.sum(top * inv)) + float(intercepts[capped].sum())
        intercepts = np.where(free, (top - level / total_inv) / curv, intercepts)
        slopes = inv / total_inv
    return _affine_segment(alpha, beta, lo, hi, intercepts, slopes, anchored=lo == 0.0)


def _concave_breakpoints(markets: Sequence[MarketParams], cfg: AllocationConfig) -> List[float]:
    alpha, beta = _params(markets)
    top = (1.0 - cfg.lam) * alpha
    curv = (2.0 - 3.0 * cfg.lam) * beta
    cap = _caps(alpha, beta, cfg.price_floor)
    levels = set(top.tolist())
    if cfg.price_floor:
        levels |= set((top - curv * cap).tolist())
    qs = {float(np.clip((top - mu) / curv, 0.0, cap).sum()) for mu in levels}
    return sorted(q for q in qs if q > 0.0)


def _pattern(d: np.ndarray, cap: np.ndarray) -> Tuple[int, ...]:
    return tuple(0 if x <= 0.0 else (2 if np.isfinite(c) and x >= c else 1) for x, c in zip(d, cap))


def _vertex_breakpoints(markets: Sequence[MarketParams], cfg: AllocationConfig, q_hi: float,
                        resolution: int = 4096) -> List[float]:
    """Aggregates where the optimal vertex pattern changes, located by grid scan and bisection."""
    alpha, beta = _params(markets)
    cap = _caps(alpha, beta, cfg.price_floor)

    def key(q: float) -> Tuple[int, ...]:
        return _pattern(allocate(markets, q, cfg).as_array(), cap)

    def split(lo: float, hi: float, key_lo, key_hi) -> List[float]:
        if key_lo == key_hi:
            return []
        if hi - lo <= 1e-13 * max(1.0, hi):
            return [hi]
        mid = 0.5 * (lo + hi)
        key_mid = key(mid)
        return split(lo, mid, key_lo, key_mid) + split(mid, hi, key_mid, key_hi)

    grid = np.linspace(0.0, q_hi, resolution + 1)
    grid[0] = 1e-12 * q_hi
    keys = [key(q) for q in grid]
    switches: List[float] = []
    for k in range(1, len(grid)):
        switches.extend(split(grid[k - 1], grid[k], keys[k - 1], keys[k]))
    return switches


def _first_nonpositive(segment: PriceSegment) -> Optional[float]:
    """Smallest Q in [q_start, q_end] with R(Q) <= 0, if any (Q > 0)."""
    r0, r1, r2 = segment.revenue_coeffs
    lo, hi = segment.q_start, segment.q_end
    scale = max(1.0, abs(r0) + abs(r1) * max(lo, 1.0) + abs(r2) * max(lo, 1.0) ** 2)
    if lo > 0.0 and segment.revenue(lo) <= 1e-12 * scale:
        return lo
    if abs(r2) < 1e-300:
        roots = [] if r1 == 0.0 else [-r0 / r1]
    else:
        disc = r1 * r1 - 4.0 * r2 * r0
        if disc < 0.0:
            roots = []
        else:
            root = math.sqrt(disc)
            roots = [(-r1 - root) / (2.0 * r2), (-r1 + root) / (2.0 * r2)]
    # roots at the left end are rounding residue of R(q_start) = 0
    q_tol = 1e-12 * max(1.0, lo, hi if math.isfinite(hi) else lo)
    hits = [r for r in roots if lo + q_tol < r <= hi]
    return min(hits) if hits else None


def price_curve(markets: Sequence[MarketParams], cfg: AllocationConfig) -> PriceCurve:
    """
    Aggregate price curve Q -> p(A_lambda(Q)).

    Below lambda = 2/3 the curve is continuous and ends where the price reaches zero.
    In the vertex regime it may jump at pattern switches and is traced up to the
    aggregate beyond which no market can carry a positive price.

    Args:
        markets: Market parameters
        cfg: Platform weight and price-floor flag

    Returns:
        PriceCurve: Segments with affine demand and quadratic revenue, and breakpoints
    """
    alpha, beta = _params(markets)
    max_alpha = float(alpha.max())

    if cfg.concave:
        inner = _concave_breakpoints(markets, cfg)
        starts = [0.0] + inner
        segments: List[PriceSegment] = []
        for k, lo in enumerate(starts):
            hi = starts[k + 1] if k + 1 < len(starts) else math.inf
            segments.append(_concave_segment(markets, cfg, lo, hi))
        q_end = None
        kept: List[PriceSegment] = []
        for seg in segments:
            hit = _first_nonpositive(seg)
            if hit is not None:
                if hit > seg.q_start:
                    kept.append(seg.model_copy(update={"q_end": hit}))
                q_end = hit
                break
            kept.append(seg)
        if q_end is None:
            raise PreconditionError("price curve never reaches zero")
        breakpoints = [0.0] + [seg.q_start for seg in kept[1:]] + [q_end]
        return PriceCurve(
            lam=cfg.lam, price_floor=cfg.price_floor, regime="water-filling",
            segments=tuple(kept), breakpoints=tuple(breakpoints), q_max=q_end, max_alpha=max_alpha,
        )

    q_hi = float((alpha / beta).sum()) if cfg.price_floor else float((alpha / beta).max())
    switches = [q for q in _vertex_breakpoints(markets, cfg, q_hi) if 0.0 < q < q_hi]
    edges = [0.0] + switches + [q_hi]
    segments = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        segments.append(_sampled_segment(markets, cfg, lo, hi, lo + (hi - lo) / 3.0, lo + 2.0 * (hi - lo) / 3.0))
    return PriceCurve(
        lam=cfg.lam, price_floor=cfg.price_floor, regime="vertex",
        segments=tuple(segments), breakpoints=tuple(edges), q_max=q_hi, max_alpha=max_alpha,
    )


def stationary_aggregate(markets: Sequence[MarketParams], cfg: AllocationConfig) -> float:
    """
    Revenue-maximizing aggregate of one costless firm on the segment where every market
    is active, without clipping to that segment. Equals sum_j alpha_j / (2 beta_j) for
    every lambda below 2/3.
    """
    if not cfg.concave or cfg.price_floor:
        raise PreconditionError("stationary aggregate needs lambda < 2/3 and no price floor")
    alpha, beta = _params(markets)
    top = (1.0 - cfg.lam) * alpha
    curv = (2.0 - 3.0 * cfg.lam) * beta
    inv = 1.0 / curv
    slopes = inv / inv.sum()
    intercepts = (top - np.sum(top * inv) / inv.sum()) * inv
    r1 = float(np.sum(slopes * alpha - 2.0 * beta * intercepts * slopes))
    r2 = float(-np.sum(beta * slopes ** 2))
    return -r1 / (2.0 * r2)


# Payoffs and welfare
def firm_payoff(i: int, s: Sequence[float], instance: Instance, cfg: AllocationConfig) -> float:
    """pi_i(s; lambda) = s_i * p(A_lambda(sum s)) - C_i(s_i)."""
    s = np.asarray(s, dtype=float)
    if (s < 0.0).any():
        raise PreconditionError("firm quantities must be nonnegative")
    if s[i] == 0.0:
        return 0.0
    allocation = allocate(instance.markets, float(s.sum()), cfg)
    return float(s[i] * allocation.uniform_price - instance.firms[i].evaluate(float(s[i])))


def controlled_welfare(instance: Instance, s: Sequence[float], cfg: AllocationConfig) -> WelfareBreakdown:
    """Welfare of firm quantities s once the platform allocates their sum."""
    s = np.asarray(s, dtype=float)
    d = allocate(instance.markets, float(s.sum()), cfg).as_array()
    utility, surplus, revenue = demand_welfare(instance.markets, d)
    cost = float(sum(f.evaluate(float(x)) for f, x in zip(instance.firms, s)))
    return WelfareBreakdown(
        consumer_utility=utility,
        production_cost=cost,
        consumer_surplus=surplus,
        revenue=revenue,
        social_welfare=utility - cost,
    )


def _outcome(instance: Instance, s: np.ndarray, cfg: AllocationConfig, verified: bool, kind: str,
             gain: float = 0.0) -> StackelbergOutcome:
    allocation = allocate(instance.markets, float(s.sum()), cfg)
    return StackelbergOutcome(
        s=tuple(float(x) for x in s),
        total_q=float(s.sum()),
        uniform_price=allocation.uniform_price,
        sw=controlled_welfare(instance, s, cfg).social_welfare,
        profits=tuple(firm_payoff(i, s, instance, cfg) for i in range(instance.n)),
        verified=verified,
        kind=kind,
        max_gain=gain,
    )


# Stackelberg equilibria
def stackelberg_single_firm(instance: Instance, cfg: AllocationConfig, tie_tol: float = 1e-9) -> List[StackelbergOutcome]:
    """
    Every global profit maximizer of a single firm facing the aggregate price curve.

    Profit is a quadratic on every curve segment, so the candidates are the segment
    stationary points, the breakpoints and zero. In the vertex regime a supremum
    approached only from the left of a jump is not attained; the result is then empty.

    Args:
        instance: One-firm instance
        cfg: Platform weight and price-floor flag
        tie_tol: Relative tolerance for treating two profits as equal

    Returns:
        List[StackelbergOutcome]: The exact equilibrium set, ascending in quantity
    """
    if instance.n != 1:
        raise PreconditionError("exact Stackelberg path needs exactly one firm")
    cost = instance.firms[0]
    curve = price_curve(instance.markets, cfg)

    candidates = {0.0, curve.q_max}
    candidates.update(q for q in curve.breakpoints if 0.0 <= q <= curve.q_max)
    left_limits: List[float] = []
    for seg in curve.segments:
        r0, r1, r2 = seg.revenue_coeffs
        lead = r2 - cost.d
        if lead < 0.0:
            q_star = -(r1 - cost.c) / (2.0 * lead)
            if seg.q_start < q_star < min(seg.q_end, curve.q_max):
                candidates.add(float(q_star))
        if curve.regime == "vertex" and seg.q_end <= curve.q_max:
            left_limits.append(seg.revenue(seg.q_end) - cost.evaluate(seg.q_end))

    profit = {q: firm_payoff(0, [q], instance, cfg) for q in sorted(candidates)}
    best = max(profit.values())
    tol = tie_tol * max(1.0, abs(best))
    if left_limits and max(left_limits) > best + tol:
        logger.warning("profit supremum is approached at a jump but not attained; no Stackelberg equilibrium")
        return []

    winners: List[float] = []
    for q in sorted(profit):
        if profit[q] >= best - tol and not any(abs(q - w) <= 1e-9 * max(1.0, q) for w in winners):
            winners.append(q)
    logger.info(f"single-firm Stackelberg set: {winners}")
    return [_outcome(instance, np.array([q]), cfg, True, "exact") for q in winners]


def _profit_vector(x: np.ndarray, others: float, cost: CostFunction, curve: PriceCurve) -> np.ndarray:
    produced = np.where(x > 0.0, cost.c * x + cost.d * x * x, 0.0)
    return x * curve.prices(others + x) - produced


def _best_response(i: int, s: np.ndarray, instance: Instance, curve: PriceCurve, grid: int) -> Tuple[float, float]:
    """Grid search plus bounded Brent refinement around the leading local maxima."""
    others = float(s.sum() - s[i])
    x_hi = max(0.0, curve.q_max - others)
    if x_hi <= 0.0:
        return 0.0, 0.0
    cost = instance.firms[i]
    shifted = [b - others for b in curve.breakpoints if 0.0 < b - others < x_hi]
    xs = np.unique(np.concatenate([np.linspace(0.0, x_hi, grid + 1), shifted]))
    values = _profit_vector(xs, others, cost, curve)

    def profit(x: float) -> float:
        return float(_profit_vector(np.array([x]), others, cost, curve)[0])

    peaks = [k for k in range(len(xs))
             if (k == 0 or values[k] >= values[k - 1]) and (k == len(xs) - 1 or values[k] >= values[k + 1])]
    peaks = sorted(peaks, key=lambda k: -values[k])[:8]
    found: List[Tuple[float, float]] = [(float(values[k]), float(xs[k])) for k in peaks]
    for k in peaks:
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(lambda x: -profit(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        found.append((-float(res.fun), float(res.x)))
    best_value = max(v for v, _ in found)
    tol = 1e-12 * max(1.0, abs(best_value))
    best_x = min(x for v, x in found if v >= best_value - tol)
    return best_x, best_value


def _deviation_gain(i: int, s: np.ndarray, instance: Instance, curve: PriceCurve, grid: int) -> float:
    others = float(s.sum() - s[i])
    current = float(_profit_vector(np.array([s[i]]), others, instance.firms[i], curve)[0])
    _, best = _best_response(i, s, instance, curve, grid)
    return max(0.0, best - current)


def _starts(n: int, q_max: float, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    starts = [np.zeros(n), np.full(n, q_max / (n + 1))]
    while len(starts) < count:
        starts.append(rng.uniform(0.0, q_max / n, size=n))
    return starts[:max(count, 1)]


def stackelberg_search(
        instance: Instance,
        cfg: AllocationConfig,
        grid: int = config.SE_GRID,
        eps: float = config.SE_EPS,
        starts: int = config.SE_STARTS,
        seed: int = 0,
        max_sweeps: int = config.SE_MAX_SWEEPS,
) -> List[StackelbergOutcome]:
    """
    Heuristic Stackelberg search for any number of firms.

    From several starting profiles, firms take turns playing a grid-and-Brent best
    response to the others' aggregate (cyclic sweeps). Each limit is kept only if no
    firm gains more than eps by a unilateral deviation on the verification grid.

    Args:
        instance: Game description
        cfg: Platform weight and price-floor flag
        grid: Points in the best-response and verification grids
        eps: Allowed unilateral profit gain
        starts: Number of starting profiles (zero, symmetric, then seeded random)
        seed: Seed for the random starts
        max_sweeps: Cap on best-response sweeps per start

    Returns:
        List[StackelbergOutcome]: Verified, de-duplicated candidates (possibly empty)
    """
    curve = price_curve(instance.markets, cfg)
    rng = np.random.default_rng(seed)
    n = instance.n
    results: List[StackelbergOutcome] = []
    for k, start in enumerate(_starts(n, curve.q_max, starts, rng)):
        s = start.copy()
        for sweep in range(1, max_sweeps + 1):
            change = 0.0
            for i in range(n):
                x, _ = _best_response(i, s, instance, curve, grid)
                change = max(change, abs(x - s[i]))
                s[i] = x
            logger.debug("start %d sweep %d: change %.3e", k, sweep, change)
            if change <= 1e-10 * max(1.0, float(s.max())):
                break
        else:
            logger.warning(f"start {k}: best-response sweeps did not settle after {max_sweeps} sweeps")

        gain = max(_deviation_gain(i, s, instance, curve, grid) for i in range(n))
        if gain > eps:
            logger.debug("start %d: candidate rejected, deviation gain %.3e", k, gain)
            continue
        if any(np.max(np.abs(np.array(r.s) - s)) <= 1e-6 for r in results):
            continue
        results.append(_outcome(instance, s, cfg, True, "grid-verified", gain))

    if not results:
        logger.warning("Stackelberg search found no verified equilibrium")
    return results


def poa_controlled(
        instance: Instance,
        cfg: AllocationConfig,
        grid: int = config.SE_GRID,
        eps: float = config.SE_EPS,
        seed: int = 0,
        tol: float = config.NASH_TOL,
) -> PoAReport:
    """
    Controlled-allocation ratio: open-access efficient welfare over the smallest
    welfare among the Stackelberg equilibria found.

    One firm uses the exact path; more firms use the heuristic search. No equilibrium
    (or a non-positive equilibrium welfare against positive efficient welfare) gives
    the UNBOUNDED ratio. se_status tells a proven-empty equilibrium set ('verified-empty')
    apart from a search that merely found nothing ('search-empty').
    """
    efficient = efficient_outcome(instance, EdgeSet.complete(instance.n, instance.m), tol=tol)
    if instance.n == 1:
        outcomes = stackelberg_single_firm(instance, cfg)
        status = "exact" if outcomes else "verified-empty"
    else:
        outcomes = stackelberg_search(instance, cfg, grid=grid, eps=eps, seed=seed)
        status = "search-found" if outcomes else "search-empty"

    sw_star = efficient.social_welfare
    if outcomes:
        sw_eq = min(o.sw for o in outcomes)
        rho = welfare_ratio(sw_star, sw_eq)
    else:
        sw_eq = 0.0
        rho = UNBOUNDED if sw_star > 0.0 else 1.0

    lower = bound_controlled(cfg.lam, instance.m) if instance.m >= 2 else None
    return PoAReport(
        sw_efficient=sw_star,
        sw_equilibrium=sw_eq,
        rho=rho,
        bound_name="controlled_lower" if lower is not None else None,
        bound_value=lower,
        bound_satisfied=None,
        bound_is_lower=lower is not None,
        design="controlled",
        converged=efficient.converged,
        se_status=status,
    )


def bound_controlled(lam: float, m: int) -> float:
    """
    Worst-case lower bound on the controlled-allocation ratio.

    Args:
        lam: Platform weight in [0, 1]
        m: Number of markets (at least 2)

    Returns:
        float: max{3/2, (2/3)(1 + sqrt(1 + lam^2/((2lam-1)(lam-1))))} below 1/2,
        8m/9 on [1/2, 2/3), UNBOUNDED from 2/3 on
    """
    if not 0.0 <= lam <= 1.0:
        raise PreconditionError("lambda must lie in [0, 1]")
    if m < 2:
        raise PreconditionError("controlled bound needs at least 2 markets")
    if lam < 0.5:
        inner = 1.0 + lam * lam / ((2.0 * lam - 1.0) * (lam - 1.0))
        return max(1.5, (2.0 / 3.0) * (1.0 + math.sqrt(inner)))
    if lam < TWO_THIRDS:
        return 8.0 * m / 9.0
    return UNBOUNDED


# Lower-bound families
def gen_theta_family(m: int, theta: float, epsilon: float = 0.0) -> Instance:
    """
    One costless firm; market 1 has p = (1 + epsilon) - d, market j >= 2 has
    p = theta^(j-1)/(1+theta) - theta^(2j-2)/(1-theta^2) d.

    Raises:
        PreconditionError: Unless 0 < theta <= 1/2, m >= 2 and epsilon >= 0
    """
    if m < 2:
        raise PreconditionError("theta family needs m >= 2")
    if not 0.0 < theta <= 0.5:
        raise PreconditionError("theta family needs 0 < theta <= 1/2")
    if epsilon < 0.0:
        raise PreconditionError("theta family needs epsilon >= 0")
    markets = [(1.0 + epsilon, 1.0)]
    for j in range(2, m + 1):
        markets.append((theta ** (j - 1) / (1.0 + theta), theta ** (2 * j - 2) / (1.0 - theta * theta)))
    sw_star = (1.0 + epsilon) ** 2 / 2.0 + (m - 1) * (1.0 - theta) / (2.0 * (1.0 + theta))
    metadata: Dict[str, Any] = {
        "family": "theta", "m": m, "theta": theta, "epsilon": epsilon,
        "sw_efficient": sw_star,
    }
    return linear_instance([0.0], markets, metadata=metadata)


def gen_cs_counterexample(c: float, epsilon: float, n_firms: int = 1) -> Instance:
    """
    Two markets p_1 = (c + eps) - (eps/2) d_1 and p_2 = (c - eps) - eps d_2 served by
    firms of marginal cost c. Efficient supply is 2 units in market 1; a platform that
    only values consumer surplus sends everything to market 2, where no unit is profitable.
    """
    if not c > epsilon > 0.0:
        raise PreconditionError("cs counterexample needs c > epsilon > 0")
    if n_firms < 1:
        raise PreconditionError("cs counterexample needs at least one firm")
    metadata: Dict[str, Any] = {
        "family": "cs-example", "c": c, "epsilon": epsilon, "n_firms": n_firms,
        "sw_efficient": epsilon,
    }
    return linear_instance([c] * n_firms, [(c + epsilon, epsilon / 2.0), (c - epsilon, epsilon)], metadata=metadata)


def rev_counterexample_epsilon(alpha: float, beta: float) -> float:
    """Limiting slope beta^3 / (beta^2 + 4 alpha (alpha - beta)) of market 1."""
    return beta ** 3 / (beta * beta + 4.0 * alpha * (alpha - beta))


def gen_rev_counterexample(alpha: float, beta: float, epsilon: Optional[float] = None) -> Instance:
    """
    One firm with cost (alpha - beta) x and markets p_1 = alpha - eps d_1, p_2 = alpha - beta d_2.
    Meant to be evaluated with the price floor on.

    Args:
        alpha: Common intercept
        beta: Slope of market 2
        epsilon: Slope of market 1 (the limiting value when omitted)

    Returns:
        Instance: With exact and quoted efficient welfare in its metadata
    """
    eps = rev_counterexample_epsilon(alpha, beta) if epsilon is None else epsilon
    if not alpha > beta > eps > 0.0:
        raise PreconditionError("rev counterexample needs alpha > beta > epsilon > 0")
    sw_exact = beta * beta / (2.0 * eps) + beta / 2.0
    sw_quoted = alpha * (beta / eps + 1.0)
    if not math.isclose(sw_exact, sw_quoted, rel_tol=1e-9):
        logger.warning(
            f"exact efficient welfare {sw_exact:.12g} differs from the quoted closed form {sw_quoted:.12g}"
        )
    metadata: Dict[str, Any] = {
        "family": "rev-example", "alpha": alpha, "beta": beta, "epsilon": eps,
        "price_floor": True, "sw_efficient": sw_exact, "sw_efficient_quoted": sw_quoted,
        "sw_equilibrium": 3.0 * beta / 8.0,
    }
    return linear_instance([alpha - beta], [(alpha, eps), (alpha, beta)], metadata=metadata)


def generalcap_a(lam: float) -> float:
    """Largest admissible intercept ratio a of the lambda < 1/2 family."""
    if not 0.0 < lam < 0.5:
        raise PreconditionError("generalcap family needs 0 < lambda < 1/2")
    root = math.sqrt((1.0 - lam) * (1.0 - 2.0 * lam) * (3.0 * lam * lam - 3.0 * lam + 1.0))
    a_sq = ((2.0 - 3.0 * lam) ** 2 + lam * lam - 4.0 * root) / (2.0 * lam * lam)
    return math.sqrt(max(a_sq, 0.0))


def generalcap_predicted_poa(a: float, theta: float) -> float:
    """Limiting ratio (4/3)(1 + (1-theta) a^2 / ((1+theta)(1-a^2))) of the lambda < 1/2 family."""
    if not 0.0 <= a < 1.0:
        raise PreconditionError("intercept ratio a must lie in [0, 1)")
    return 4.0 / 3.0 * (1.0 + (1.0 - theta) * a * a / ((1.0 + theta) * (1.0 - a * a)))


def gen_generalcap_family(m: int, lam: float, theta: float = 1e-3) -> Instance:
    """
    One costless firm; market 1 has p = 1 - d, market j >= 2 has
    p = a^(j-1) theta^(j-1)/(1+theta) - theta^(2j-2)/(1-theta^2) d, with a maximal.
    """
    if m < 2:
        raise PreconditionError("generalcap family needs m >= 2")
    if not 0.0 < theta < 0.5:
        raise PreconditionError("generalcap family needs 0 < theta < 1/2")
    a = generalcap_a(lam)
    markets = [(1.0, 1.0)]
    for j in range(2, m + 1):
        markets.append(((a * theta) ** (j - 1) / (1.0 + theta), theta ** (2 * j - 2) / (1.0 - theta * theta)))
    metadata: Dict[str, Any] = {
        "family": "generalcap", "m": m, "lambda": lam, "theta": theta,
        "a": a, "a_squared": a * a, "predicted_poa": generalcap_predicted_poa(a, theta),
    }
    return linear_instance([0.0], markets, metadata=metadata)
