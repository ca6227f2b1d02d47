#!/usr/bin/env python3
"""
Equilibrium Module

Welfare accounting and Nash equilibrium computation for networked Cournot games:
- closed-form equilibrium for linear costs (markets decouple)
- cyclic exact best response on the equilibrium potential for any convex cost
- efficient (welfare-maximizing) supply
- unilateral-deviation certification and the production-preservation check
"""

import logging
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import config
from .errors import ConvergenceError, PreconditionError
from .models import CostFunction, EdgeSet, Instance, MarketParams, SupplyProfile

logger = logging.getLogger(__name__)


class SolveMethod(str, Enum):
    CLOSED_FORM = "closed-form"
    ITERATIVE = "iterative"


class WelfareBreakdown(BaseModel):
    """Decomposition of social welfare for one supply profile."""
    model_config = ConfigDict(frozen=True)

    consumer_utility: float = Field(description="Sum over markets of the area under inverse demand.")
    production_cost: float = Field(description="Sum over firms of C_i(s_i).")
    consumer_surplus: float = Field(description="Utility above the price paid.")
    revenue: float = Field(description="Payments from consumers to firms (price times quantity).")
    social_welfare: float = Field(description="Consumer utility minus production cost.")


class EquilibriumResult(BaseModel):
    """Supply profile returned by a solver, with prices, profits and welfare."""
    model_config = ConfigDict(frozen=True)

    q: SupplyProfile
    demand: Tuple[float, ...] = Field(description="Aggregate quantity d_j per market.")
    prices: Tuple[float, ...] = Field(description="Market price alpha_j - beta_j d_j.")
    firm_profits: Tuple[float, ...] = Field(description="Profit pi_i per firm.")
    welfare: WelfareBreakdown
    method: SolveMethod
    iterations: int = Field(default=0, description="Best-response sweeps performed.")
    residual: float = Field(default=0.0, description="Max first-order (KKT) violation.")
    converged: bool = Field(default=True)

    @property
    def social_welfare(self) -> float:
        return self.welfare.social_welfare


class VerificationReport(BaseModel):
    """Result of a unilateral-deviation check."""
    model_config = ConfigDict(frozen=True)

    certified: bool
    max_improvement: float = Field(description="Largest profit gain available to any single firm.")
    improvements: Tuple[float, ...] = Field(description="Profit gain of each firm's exact best response.")
    eps: float


class MarketPreservation(BaseModel):
    model_config = ConfigDict(frozen=True)

    market: int = Field(description="0-based market index.")
    demand_equilibrium: float
    demand_efficient: float
    ratio: float
    below_half: bool


class PreservationReport(BaseModel):
    """Per-market equilibrium demand against efficient demand."""
    model_config = ConfigDict(frozen=True)

    markets: Tuple[MarketPreservation, ...]

    @property
    def flagged(self) -> bool:
        return any(mk.below_half for mk in self.markets)


# Welfare accounting
def _check_sparsity(q: SupplyProfile, instance: Instance) -> np.ndarray:
    problems = q.sparsity_violations(instance.edges)
    if problems:
        raise PreconditionError("supply profile violates edge sparsity: " + "; ".join(problems))
    return q.as_array().reshape(instance.n, instance.m)


def demand_welfare(markets: Sequence[MarketParams], d: np.ndarray) -> Tuple[float, float, float]:
    """
    Consumer-side welfare terms of a demand vector.

    Args:
        markets: Market parameters
        d: Aggregate quantity per market

    Returns:
        Tuple[float, float, float]: (consumer utility, consumer surplus, revenue)
    """
    alpha = np.array([mk.alpha for mk in markets], dtype=float)
    beta = np.array([mk.beta for mk in markets], dtype=float)
    d = np.asarray(d, dtype=float)
    utility = float(np.sum(alpha * d - 0.5 * beta * d * d))
    surplus = float(np.sum(0.5 * beta * d * d))
    revenue = float(np.sum(d * (alpha - beta * d)))
    return utility, surplus, revenue


def _breakdown(arr: np.ndarray, instance: Instance) -> WelfareBreakdown:
    d = arr.sum(axis=0) if arr.size else np.zeros(instance.m)
    s = arr.sum(axis=1) if arr.size else np.zeros(instance.n)
    utility, surplus, revenue = demand_welfare(instance.markets, d)
    cost = float(sum(f.evaluate(float(si)) for f, si in zip(instance.firms, s)))
    return WelfareBreakdown(
        consumer_utility=utility,
        production_cost=cost,
        consumer_surplus=surplus,
        revenue=revenue,
        social_welfare=utility - cost,
    )


def social_welfare(q: SupplyProfile, instance: Instance) -> WelfareBreakdown:
    """
    Social welfare of a supply profile.

    Args:
        q: Supply profile respecting the instance's edges
        instance: Game description

    Returns:
        WelfareBreakdown: Utility, cost, surplus, revenue and welfare

    Raises:
        PreconditionError: If q places quantity on a missing edge
    """
    return _breakdown(_check_sparsity(q, instance), instance)


def _profits(arr: np.ndarray, instance: Instance) -> np.ndarray:
    prices = instance.alphas() - instance.betas() * arr.sum(axis=0)
    gross = arr @ prices
    costs = np.array([f.evaluate(float(si)) for f, si in zip(instance.firms, arr.sum(axis=1))])
    return gross - costs


def firm_profits(q: SupplyProfile, instance: Instance) -> np.ndarray:
    """Profit pi_i = sum_j q_ij p_j(d_j) - C_i(s_i) of every firm."""
    return _profits(_check_sparsity(q, instance), instance)


def _residual(arr: np.ndarray, instance: Instance, penalty: float) -> float:
    """Max KKT violation of the per-coordinate stationarity condition."""
    if instance.n == 0 or instance.m == 0:
        return 0.0
    alpha, beta = instance.alphas(), instance.betas()
    prices = alpha - beta * arr.sum(axis=0)
    marginal_cost = np.array([f.right_derivative(float(si)) for f, si in zip(instance.firms, arr.sum(axis=1))])
    grad = prices[None, :] - penalty * beta[None, :] * arr - marginal_cost[:, None]
    mask = instance.edges.as_array()
    violation = np.where(arr > 0.0, np.abs(grad), np.maximum(grad, 0.0))
    violation = np.where(mask, violation, 0.0)
    return float(violation.max()) if violation.size else 0.0


def first_order_residual(q: SupplyProfile, instance: Instance, efficient: bool = False) -> float:
    """
    Largest first-order violation of q.

    With efficient=False the condition is each firm's profit stationarity (the Nash
    conditions); with efficient=True it is stationarity of social welfare.
    """
    return _residual(_check_sparsity(q, instance), instance, 0.0 if efficient else 1.0)


# Best responses
def block_response(intercepts: np.ndarray, curvature: np.ndarray, cost: CostFunction) -> np.ndarray:
    """
    Maximize sum_j a_j x_j - 0.5 sum_j k_j x_j^2 - C(sum_j x_j) over x >= 0.

    The optimum is x_j = max(0, (a_j - mu) / k_j) with mu = C'(s); markets enter in
    descending a_j order, so the active set is found by scanning sorted prefixes.

    Args:
        intercepts: a_j, marginal value of the first unit in each market
        curvature: k_j > 0
        cost: Firm cost function

    Returns:
        np.ndarray: Optimal quantities x_j
    """
    x = np.zeros_like(intercepts, dtype=float)
    if intercepts.size == 0 or intercepts.max() <= cost.c:
        return x
    order = np.argsort(-intercepts, kind="stable")
    a_sorted = intercepts[order]
    inv_k = 1.0 / curvature[order]
    weighted = np.cumsum(a_sorted * inv_k)
    total_inv = np.cumsum(inv_k)
    mu = cost.c
    for r in range(len(order)):
        # mu solves mu = c + 2 d s(mu) with the first r + 1 markets active
        mu = (cost.c + 2.0 * cost.d * weighted[r]) / (1.0 + 2.0 * cost.d * total_inv[r])
        nxt = a_sorted[r + 1] if r + 1 < len(order) else -np.inf
        if a_sorted[r] > mu >= nxt:
            break
    x[order] = np.maximum(0.0, (a_sorted - mu) * inv_k)
    return x


def _firm_response(arr: np.ndarray, i: int, instance: Instance, penalty: float) -> np.ndarray:
    """Exact best response of firm i (penalty 1: own profit, penalty 0: social welfare)."""
    mask = instance.edges.as_array()[i]
    result = np.zeros(instance.m)
    if not mask.any():
        return result
    alpha, beta = instance.alphas(), instance.betas()
    others = arr.sum(axis=0) - arr[i]
    intercepts = (alpha - beta * others)[mask]
    curvature = ((1.0 + penalty) * beta)[mask]
    result[mask] = block_response(intercepts, curvature, instance.firms[i])
    return result


def _cyclic_best_response(
        instance: Instance,
        edges: EdgeSet,
        penalty: float,
        tol: float,
        max_iters: int,
        start: Optional[np.ndarray],
) -> Tuple[np.ndarray, int, float, bool]:
    game = instance.with_edges(edges)
    n, m = instance.n, instance.m
    mask = edges.as_array()
    arr = np.zeros((n, m)) if start is None else np.where(mask, np.maximum(np.asarray(start, dtype=float), 0.0), 0.0)
    if not mask.any():
        return np.zeros((n, m)), 0, 0.0, True

    price_scale = max(1.0, float(instance.alphas().max()))
    residual = _residual(arr, game, penalty)
    for sweep in range(1, max_iters + 1):
        change = 0.0
        for i in range(n):
            new_row = _firm_response(arr, i, game, penalty)
            change = max(change, float(np.abs(new_row - arr[i]).max()))
            arr[i] = new_row
        residual = _residual(arr, game, penalty)
        logger.debug("sweep %d: change %.3e residual %.3e", sweep, change, residual)
        if change <= tol * max(1.0, float(arr.max())) and residual <= tol * price_scale:
            return arr, sweep, residual, True
    return arr, max_iters, residual, False


def _result(arr: np.ndarray, instance: Instance, method: SolveMethod, iterations: int,
            residual: float, converged: bool) -> EquilibriumResult:
    d = arr.sum(axis=0)
    prices = instance.alphas() - instance.betas() * d
    return EquilibriumResult(
        q=SupplyProfile.from_array(arr),
        demand=tuple(float(x) for x in d),
        prices=tuple(float(x) for x in prices),
        firm_profits=tuple(float(x) for x in _profits(arr, instance)),
        welfare=_breakdown(arr, instance),
        method=method,
        iterations=iterations,
        residual=residual,
        converged=converged,
    )


# Nash equilibrium
def _require_linear(instance: Instance) -> None:
    if not instance.all_linear:
        raise PreconditionError("closed form requires linear costs")


def active_quantities(alpha: float, beta: float, costs: Sequence[float]) -> np.ndarray:
    """
    Single-market Cournot equilibrium for linear costs.

    Args:
        alpha: Demand intercept
        beta: Demand slope
        costs: Marginal costs of the connected firms, in any order

    Returns:
        np.ndarray: Equilibrium quantity of each firm, aligned with costs
    """
    costs = np.asarray(costs, dtype=float)
    q = np.zeros(len(costs))
    order = np.argsort(costs, kind="stable")
    margins = alpha - costs[order]
    k, total = 0, 0.0
    for margin in margins:
        # strict inequality: a firm exactly at the threshold stays out
        if margin > total / (k + 1):
            k += 1
            total += margin
        else:
            break
    if k == 0:
        return q
    q[order[:k]] = ((k + 1) * margins[:k] - total) / ((k + 1) * beta)
    return q


def nash_linear(instance: Instance) -> EquilibriumResult:
    """
    Closed-form Nash equilibrium of a linear-cost instance, market by market.

    Raises:
        PreconditionError: If any firm has a quadratic cost
    """
    _require_linear(instance)
    arr = np.zeros((instance.n, instance.m))
    slopes = instance.slopes()
    for j, mk in enumerate(instance.markets):
        firms = instance.edges.firms_in_market(j)
        if firms:
            arr[firms, j] = active_quantities(mk.alpha, mk.beta, slopes[firms])
    residual = _residual(arr, instance, 1.0)
    return _result(arr, instance, SolveMethod.CLOSED_FORM, 0, residual, True)


def nash_general(
        instance: Instance,
        tol: float = config.NASH_TOL,
        max_iters: int = config.NASH_MAX_ITERS,
        start: Optional[np.ndarray] = None,
        strict: bool = False,
) -> EquilibriumResult:
    """
    Nash equilibrium for any convex cost profile by cyclic exact best response.

    Each sweep replaces every firm's quantities by its exact best response, which
    is coordinate ascent on the strictly concave potential
    SW(q) - sum_ij beta_j q_ij^2 / 2.

    Args:
        instance: Game description
        tol: Relative tolerance on quantity change and first-order residual
        max_iters: Maximum number of sweeps
        start: Optional starting profile (n x m)
        strict: Raise ConvergenceError instead of returning a non-converged result

    Returns:
        EquilibriumResult: method "iterative", with iterations and residual
    """
    arr, iterations, residual, converged = _cyclic_best_response(
        instance, instance.edges, 1.0, tol, max_iters, start
    )
    if converged:
        logger.info(f"Nash equilibrium converged in {iterations} sweeps (residual {residual:.3e})")
    else:
        logger.warning(f"Nash solver stopped after {iterations} sweeps (residual {residual:.3e})")
        if strict:
            raise ConvergenceError("Nash best-response iteration did not converge", iterations, residual)
    return _result(arr, instance, SolveMethod.ITERATIVE, iterations, residual, converged)


def solve_nash(
        instance: Instance,
        method: str = "auto",
        tol: float = config.NASH_TOL,
        max_iters: int = config.NASH_MAX_ITERS,
        strict: bool = False,
) -> EquilibriumResult:
    """Dispatch to nash_linear ("closed"), nash_general ("iterative") or by cost kind ("auto")."""
    if method == "closed":
        return nash_linear(instance)
    if method == "iterative":
        return nash_general(instance, tol=tol, max_iters=max_iters, strict=strict)
    if method != "auto":
        raise PreconditionError(f"unknown solve method '{method}'")
    if instance.all_linear:
        return nash_linear(instance)
    return nash_general(instance, tol=tol, max_iters=max_iters, strict=strict)


# Efficient welfare
def efficient_outcome(
        instance: Instance,
        edges: Optional[EdgeSet] = None,
        tol: float = config.NASH_TOL,
        max_iters: int = config.NASH_MAX_ITERS,
        strict: bool = False,
) -> EquilibriumResult:
    """
    Welfare-maximizing supply over the given edge set (instance.edges when omitted).

    Linear costs route each market's demand to its cheapest connected firm; other
    cost profiles run cyclic exact best response on social welfare itself.
    """
    edges = edges if edges is not None else instance.edges
    if edges.n != instance.n or edges.m != instance.m:
        raise PreconditionError("edge set dimension mismatch")
    game = instance.with_edges(edges)

    if instance.all_linear:
        arr = np.zeros((instance.n, instance.m))
        slopes = instance.slopes()
        for j, mk in enumerate(instance.markets):
            firms = edges.firms_in_market(j)
            if not firms:
                continue
            cheapest = min(firms, key=lambda i: (slopes[i], i))
            arr[cheapest, j] = max(0.0, mk.alpha - slopes[cheapest]) / mk.beta
        return _result(arr, game, SolveMethod.CLOSED_FORM, 0, _residual(arr, game, 0.0), True)

    arr, iterations, residual, converged = _cyclic_best_response(instance, edges, 0.0, tol, max_iters, None)
    if not converged:
        logger.warning(f"Efficient-welfare iteration stopped after {iterations} sweeps (residual {residual:.3e})")
        if strict:
            raise ConvergenceError("efficient-welfare iteration did not converge", iterations, residual)
    return _result(arr, game, SolveMethod.ITERATIVE, iterations, residual, converged)


def efficient_welfare(
        instance: Instance,
        edges: Optional[EdgeSet] = None,
        tol: float = config.NASH_TOL,
        max_iters: int = config.NASH_MAX_ITERS,
) -> Tuple[SupplyProfile, WelfareBreakdown]:
    """
    Efficient supply and its welfare over an edge set.

    Args:
        instance: Game description
        edges: Edge set to optimize over (instance.edges when omitted)

    Returns:
        Tuple[SupplyProfile, WelfareBreakdown]: Optimal profile and its welfare
    """
    outcome = efficient_outcome(instance, edges, tol=tol, max_iters=max_iters)
    return outcome.q, outcome.welfare


# Verification
def best_response_check(q: SupplyProfile, instance: Instance, eps: float = config.CERTIFY_EPS) -> VerificationReport:
    """
    Certify q as a Nash equilibrium by comparing each firm's profit with that of
    its exact unilateral best response.

    Args:
        q: Profile to check
        instance: Game description
        eps: Allowed absolute profit improvement

    Returns:
        VerificationReport: certified iff no firm gains more than eps
    """
    arr = _check_sparsity(q, instance)
    current = _profits(arr, instance)
    improvements: List[float] = []
    for i in range(instance.n):
        deviated = arr.copy()
        deviated[i] = _firm_response(arr, i, instance, 1.0)
        gain = float(_profits(deviated, instance)[i] - current[i])
        improvements.append(max(gain, 0.0))
    best = max(improvements, default=0.0)
    return VerificationReport(certified=best <= eps, max_improvement=best, improvements=tuple(improvements), eps=eps)


def production_preservation(instance: Instance, tol: float = config.NASH_TOL) -> PreservationReport:
    """
    Compare equilibrium demand with efficient demand in every market.

    Ratios use the 0/0 = 1 convention; a market is flagged when its ratio falls
    below one half.

    Raises:
        PreconditionError: If the edge set is not complete
    """
    if not instance.edges.is_complete:
        raise PreconditionError("production preservation requires the complete edge set")
    equilibrium = solve_nash(instance, tol=tol)
    efficient = efficient_outcome(instance, tol=tol)
    rows = []
    for j in range(instance.m):
        d_ne, d_star = equilibrium.demand[j], efficient.demand[j]
        ratio = 1.0 if d_star <= 1e-15 else d_ne / d_star
        rows.append(MarketPreservation(
            market=j,
            demand_equilibrium=d_ne,
            demand_efficient=d_star,
            ratio=ratio,
            below_half=ratio < 0.5 - 1e-9,
        ))
    report = PreservationReport(markets=tuple(rows))
    if report.flagged:
        logger.warning("equilibrium fulfils less than half of efficient demand in some market")
    return report
