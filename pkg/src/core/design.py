#!/usr/bin/env python3
"""
Network Design Module

Discriminatory access: the platform picks which firm may serve which market so that
equilibrium welfare is maximal. With linear costs markets decouple, the optimal
per-market firm set is a prefix of the cost order, and the greedy algorithm finds it.
"""

import itertools
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import config
from .equilibrium import active_quantities, efficient_outcome, nash_linear
from .errors import PreconditionError
from .models import EdgeSet, Instance
from .poa_analysis import PoAReport, bound_discriminatory, bound_satisfied, welfare_ratio

logger = logging.getLogger(__name__)

# Cap on the discriminatory ratio for any linear instance
DISCRIMINATORY_CAP = 4.0 / 3.0


class DesignResult(BaseModel):
    """Edge set chosen by a design procedure and the equilibrium welfare it induces."""
    model_config = ConfigDict(frozen=True)

    edges: EdgeSet
    sw_equilibrium: float = Field(description="Equilibrium welfare under the chosen edges.")
    per_market_active_counts: Tuple[int, ...] = Field(description="Firms producing in each market.")
    permutation: Tuple[int, ...] = Field(description="0-based firm order by ascending cost.")
    per_market_welfare: Tuple[float, ...] = Field(default=())
    method: str = Field(default="greedy")


def _market_welfare(alpha: float, beta: float, costs: Sequence[float]) -> Tuple[float, int]:
    """Equilibrium welfare and active count of one market served by firms with the given costs."""
    if len(costs) == 0:
        return 0.0, 0
    costs = np.asarray(costs, dtype=float)
    q = active_quantities(alpha, beta, costs)
    d = float(q.sum())
    return alpha * d - 0.5 * beta * d * d - float(np.dot(costs, q)), int(np.count_nonzero(q > 0.0))


def _all_active(alpha: float, sorted_costs: Sequence[float]) -> bool:
    total = 0.0
    for k, c in enumerate(sorted_costs, start=1):
        margin = alpha - c
        if not margin > total / k:
            return False
        total += margin
    return True


def sw_single_market_closed(alpha: float, beta: float, active_costs: Sequence[float]) -> float:
    """
    Equilibrium welfare of one market whose firms are all active:
    sum (alpha - c_i)^2 / beta - (2k+3)/2 (sum (alpha - c_i))^2 / ((k+1)^2 beta).

    Args:
        alpha: Demand intercept
        beta: Demand slope
        active_costs: Costs of the connected firms

    Returns:
        float: Social welfare at the market's Nash equilibrium

    Raises:
        PreconditionError: If some listed firm would not produce
    """
    costs = sorted(float(c) for c in active_costs)
    if not costs:
        return 0.0
    if not _all_active(alpha, costs):
        raise PreconditionError("every listed firm must be active at equilibrium")
    margins = alpha - np.array(costs)
    k = len(costs)
    return float(np.sum(margins ** 2) / beta - (2 * k + 3) / 2.0 * margins.sum() ** 2 / ((k + 1) ** 2 * beta))


def include_improves(alpha: float, prefix_costs: Sequence[float], c_k: float) -> bool:
    """
    Whether connecting the next-cheapest firm strictly raises equilibrium welfare:
    alpha - c_k > (1/k)(1 + 1/(k - 1/(2(k+1)))) sum_{i<k} (alpha - c_i), k = |prefix| + 1.
    """
    k = len(prefix_costs) + 1
    total = float(sum(alpha - c for c in prefix_costs))
    rhs = (1.0 / k) * (1.0 + 1.0 / (k - 1.0 / (2.0 * (k + 1)))) * total
    return alpha - c_k > rhs


def prefix_welfare_curve(alpha: float, beta: float, sorted_costs: Sequence[float]) -> np.ndarray:
    """Equilibrium welfare when the first k firms of the cost order are connected, k = 0..n."""
    return np.array([_market_welfare(alpha, beta, sorted_costs[:k])[0] for k in range(len(sorted_costs) + 1)])


def _require_linear(instance: Instance) -> None:
    if not instance.all_linear:
        raise PreconditionError("network design requires linear costs")


def greedy_network(instance: Instance) -> DesignResult:
    """
    Greedy design: per market, connect firms in ascending cost order while the
    closed-form equilibrium welfare strictly increases; stop at the first firm that
    does not improve it.

    Args:
        instance: Linear-cost instance (its own edges are ignored)

    Returns:
        DesignResult: Prefix edge set per market and its equilibrium welfare
    """
    _require_linear(instance)
    order = instance.cost_order()
    slopes = instance.slopes()
    grid = np.zeros((instance.n, instance.m), dtype=bool)
    counts, welfare = [], []
    for j, mk in enumerate(instance.markets):
        included: List[int] = []
        current = 0.0
        for i in order:
            costs = [slopes[f] for f in included] + [slopes[i]]
            if not _all_active(mk.alpha, costs):
                break
            candidate = sw_single_market_closed(mk.alpha, mk.beta, costs)
            if not candidate > current:
                break
            included.append(i)
            current = candidate
        grid[included, j] = True
        counts.append(len(included))
        welfare.append(current)
        logger.debug("market %d: greedy keeps %d firms", j, len(included))
    return DesignResult(
        edges=EdgeSet.from_array(grid),
        sw_equilibrium=float(sum(welfare)),
        per_market_active_counts=tuple(counts),
        permutation=tuple(order),
        per_market_welfare=tuple(welfare),
        method="greedy",
    )


def brute_force_design(instance: Instance, max_firms: int = config.BRUTE_FORCE_MAX_FIRMS) -> DesignResult:
    """
    Exact design by enumerating every firm subset of every market independently.

    Ties keep the smaller subset found first (subsets are scanned by size).

    Raises:
        PreconditionError: On non-linear costs or more than max_firms firms
    """
    _require_linear(instance)
    if instance.n > max_firms:
        raise PreconditionError(f"brute-force design is limited to {max_firms} firms")
    slopes = instance.slopes()
    grid = np.zeros((instance.n, instance.m), dtype=bool)
    counts, welfare = [], []
    for j, mk in enumerate(instance.markets):
        best_set: Tuple[int, ...] = ()
        best_sw, best_active = 0.0, 0
        for size in range(1, instance.n + 1):
            for subset in itertools.combinations(range(instance.n), size):
                sw, active = _market_welfare(mk.alpha, mk.beta, slopes[list(subset)])
                if sw > best_sw:
                    best_set, best_sw, best_active = subset, sw, active
        grid[list(best_set), j] = True
        counts.append(best_active)
        welfare.append(best_sw)
    return DesignResult(
        edges=EdgeSet.from_array(grid),
        sw_equilibrium=float(sum(welfare)),
        per_market_active_counts=tuple(counts),
        permutation=tuple(instance.cost_order()),
        per_market_welfare=tuple(welfare),
        method="brute-force",
    )


def joint_brute_force_design(instance: Instance, max_edges: int = config.JOINT_MAX_EDGES) -> DesignResult:
    """Exact design over all 2^(n m) edge sets, without using market decoupling."""
    _require_linear(instance)
    n, m = instance.n, instance.m
    if n * m > max_edges:
        raise PreconditionError(f"joint enumeration is limited to {max_edges} edges")
    slopes = instance.slopes()
    best_mask, best_sw = 0, 0.0
    for mask in range(1, 2 ** (n * m)):
        bits = np.array([(mask >> b) & 1 for b in range(n * m)], dtype=bool).reshape(n, m)
        sw = 0.0
        for j, mk in enumerate(instance.markets):
            sw += _market_welfare(mk.alpha, mk.beta, slopes[bits[:, j]])[0]
        if sw > best_sw:
            best_mask, best_sw = mask, sw
    grid = np.array([(best_mask >> b) & 1 for b in range(n * m)], dtype=bool).reshape(n, m)
    result = nash_linear(instance.with_edges(EdgeSet.from_array(grid)))
    counts = tuple(int(np.count_nonzero(col > 0.0)) for col in result.q.as_array().T)
    return DesignResult(
        edges=EdgeSet.from_array(grid),
        sw_equilibrium=best_sw,
        per_market_active_counts=counts,
        permutation=tuple(instance.cost_order()),
        method="joint-brute-force",
    )


def poa_discriminatory(instance: Instance, design: Optional[DesignResult] = None) -> PoAReport:
    """
    Ratio of open-access efficient welfare to equilibrium welfare under the greedy design.

    Args:
        instance: Linear-cost instance
        design: Precomputed greedy result (computed when omitted)

    Returns:
        PoAReport: With the discriminatory bound (never above 4/3) and whether the
        designed edges keep the open-access efficient welfare
    """
    _require_linear(instance)
    design = design or greedy_network(instance)
    designed = instance.with_edges(design.edges)
    equilibrium = nash_linear(designed)
    efficient_open = efficient_outcome(instance, EdgeSet.complete(instance.n, instance.m))
    efficient_designed = efficient_outcome(instance, design.edges)
    gap = abs(efficient_open.social_welfare - efficient_designed.social_welfare)
    preserved = gap <= 1e-12 * max(1.0, efficient_open.social_welfare)
    if not preserved:
        logger.warning(f"efficient welfare under the designed edges is short by {gap:.3e}")

    rho = welfare_ratio(efficient_open.social_welfare, equilibrium.social_welfare)
    if instance.slopes().min() < instance.alphas().max():
        name, value = "discriminatory", bound_discriminatory(instance.open_access())
    else:
        name, value = "discriminatory_cap", DISCRIMINATORY_CAP
    return PoAReport(
        sw_efficient=efficient_open.social_welfare,
        sw_equilibrium=equilibrium.social_welfare,
        rho=rho,
        bound_name=name,
        bound_value=value,
        bound_satisfied=bound_satisfied(rho, value),
        design="greedy",
        efficient_preserved=preserved,
    )
