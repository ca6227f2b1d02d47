#!/usr/bin/env python3
"""
Price of Anarchy Module

Price-of-anarchy computation under open access, the catalogue of closed-form
bounds, the worst-case cost constructions and the consumer search-cost model.
"""

import logging
import math
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import config
from .equilibrium import demand_welfare, efficient_outcome, solve_nash
from .errors import PreconditionError
from .models import UNBOUNDED, CostFunction, EdgeSet, Instance, linear_instance

logger = logging.getLogger(__name__)

# Welfare magnitudes at or below this are treated as zero in ratios
WELFARE_ZERO = 1e-14


class PoAReport(BaseModel):
    """Efficient welfare, equilibrium welfare, their ratio and the applicable bound."""
    model_config = ConfigDict(frozen=True)

    sw_efficient: float = Field(description="SW* over the complete edge set.")
    sw_equilibrium: float = Field(description="Welfare at the (worst) equilibrium of the design.")
    rho: float = Field(description="sw_efficient / sw_equilibrium; 1 for 0/0, inf for positive/0.")
    bound_name: Optional[str] = Field(default=None, description="Closed-form bound that applies, if any.")
    bound_value: Optional[float] = Field(default=None)
    bound_satisfied: Optional[bool] = Field(default=None, description="rho <= bound + slack (upper bounds only).")
    bound_is_lower: bool = Field(default=False, description="True when bound_value is a worst-case lower bound.")
    design: str = Field(default="open", description="Platform design the report refers to.")
    converged: bool = Field(default=True, description="Whether every solver call converged.")
    se_status: Optional[str] = Field(
        default=None,
        description="Controlled design only: 'exact', 'verified-empty', 'search-found' or 'search-empty'.",
    )
    efficient_preserved: Optional[bool] = Field(
        default=None, description="Discriminatory design only: SW* under the designed edges equals SW* under all edges.",
    )

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.rho)


class AsymmetryParams(BaseModel):
    """Marginal cost range and per-market cost asymmetry gamma_j."""
    model_config = ConfigDict(frozen=True)

    c_min: float
    c_max: float
    gamma: Tuple[float, ...] = Field(description="1 - (c_max - c_min) / (alpha_j - c_min) per market.")


class SearchCostReport(BaseModel):
    """Equilibrium welfare net of consumer search costs on a symmetric linear instance."""
    model_config = ConfigDict(frozen=True)

    theta: float
    n: int
    consumer_surplus: Tuple[float, ...]
    penalties: Tuple[float, ...]
    sw_efficient: float
    sw_equilibrium: float
    sw_post_search: float
    rho: float
    bound: float


def welfare_ratio(sw_efficient: float, sw_equilibrium: float) -> float:
    """Ratio with the 0/0 = 1 convention and UNBOUNDED for positive over non-positive."""
    if sw_efficient <= WELFARE_ZERO and abs(sw_equilibrium) <= WELFARE_ZERO:
        return 1.0
    if sw_equilibrium <= WELFARE_ZERO:
        return UNBOUNDED
    return sw_efficient / sw_equilibrium


def bound_satisfied(rho: float, bound: Optional[float], slack: float = config.BOUND_SLACK) -> Optional[bool]:
    if bound is None:
        return None
    return rho <= bound + slack


# Closed-form bounds
def bound_open_asym(n: int) -> float:
    """Worst-case ratio for n firms with arbitrary convex costs: 3/2 (1 - 1/(3n+6))."""
    if n < 1:
        raise PreconditionError("firm count must be at least 1")
    return 1.5 * (1.0 - 1.0 / (3 * n + 6))


def bound_open_sym(n: int) -> float:
    """Ratio bound for n firms with identical linear costs: 1 + 1/((n+1)^2 - 1)."""
    if n < 1:
        raise PreconditionError("firm count must be at least 1")
    return 1.0 + 1.0 / ((n + 1) ** 2 - 1)


def delta(gamma: float, n: int) -> float:
    """
    Asymmetry correction, zero below the threshold (2n+3)/(3n+5).

    Args:
        gamma: Cost asymmetry of a market
        n: Number of firms

    Returns:
        float: (n-1)(3n+5)/(n+1)^2 (gamma - threshold)^2 above the threshold, else 0
    """
    if n < 1:
        raise PreconditionError("firm count must be at least 1")
    threshold = (2 * n + 3) / (3 * n + 5)
    if gamma < threshold:
        return 0.0
    return (n - 1) * (3 * n + 5) / (n + 1) ** 2 * (gamma - threshold) ** 2


def bound_linear_gamma(n: int, gamma: float) -> float:
    """Single-market linear bound 1 / ((2n+4)/(3n+5) + delta(gamma, n))."""
    return 1.0 / ((2 * n + 4) / (3 * n + 5) + delta(gamma, n))


def bound_discriminatory_gamma(n: int, gamma: float) -> float:
    """Single-market discriminatory bound: the best active count k in 1..n."""
    return 1.0 / max((2 * k + 4) / (3 * k + 5) + delta(gamma, k) for k in range(1, n + 1))


def asymmetry_params(instance: Instance, c_min: Optional[float] = None, c_max: Optional[float] = None) -> AsymmetryParams:
    """
    Build AsymmetryParams from the instance's slope range (or the given overrides).

    Markets with alpha_j <= c_min carry gamma_j = 0; they have no efficient demand.
    """
    slopes = instance.slopes()
    lo = float(slopes.min()) if c_min is None else float(c_min)
    hi = float(slopes.max()) if c_max is None else float(c_max)
    if lo > hi:
        raise PreconditionError("c_min must not exceed c_max")
    gammas = []
    for mk in instance.markets:
        if mk.alpha > lo:
            gammas.append(1.0 - (hi - lo) / (mk.alpha - lo))
        else:
            gammas.append(0.0)
    return AsymmetryParams(c_min=lo, c_max=hi, gamma=tuple(gammas))


def _check_linear_range(instance: Instance, params: AsymmetryParams) -> None:
    if not instance.all_linear:
        raise PreconditionError("bound requires linear costs")
    slopes = instance.slopes()
    if slopes.min() < params.c_min - 1e-12 or slopes.max() > params.c_max + 1e-12:
        raise PreconditionError("cost slopes fall outside [c_min, c_max]")
    if params.c_min >= instance.alphas().max():
        raise PreconditionError("c_min must be below the largest demand intercept")
    if len(params.gamma) != instance.m:
        raise PreconditionError("one gamma per market is required")


def _market_weights(instance: Instance, c_min: float) -> np.ndarray:
    margin = np.maximum(instance.alphas() - c_min, 0.0)
    return margin ** 2 / instance.betas()


def bound_open_linear(instance: Instance, params: Optional[AsymmetryParams] = None) -> float:
    """
    Asymmetric linear-cost bound: sum_j w_j / sum_j [(2n+4)/(3n+5) + delta(gamma_j, n)] w_j
    with w_j = ((alpha_j - c_min)^+)^2 / beta_j.

    Args:
        instance: Linear-cost instance
        params: Cost range and gammas (instance slope range when omitted)

    Returns:
        float: Upper bound on the open-access ratio
    """
    params = params or asymmetry_params(instance)
    _check_linear_range(instance, params)
    w = _market_weights(instance, params.c_min)
    denom = sum(wj / bound_linear_gamma(instance.n, g) for g, wj in zip(params.gamma, w))
    return float(w.sum() / denom)


def bound_discriminatory(instance: Instance, params: Optional[AsymmetryParams] = None) -> float:
    """Bound under greedy discriminatory access: per market the best k in 1..n; never above 4/3."""
    params = params or asymmetry_params(instance)
    _check_linear_range(instance, params)
    w = _market_weights(instance, params.c_min)
    denom = sum(wj / bound_discriminatory_gamma(instance.n, g) for g, wj in zip(params.gamma, w))
    return float(w.sum() / denom)


def applicable_open_bound(instance: Instance) -> Tuple[Optional[str], Optional[float]]:
    """
    Sharpest catalogued upper bound for the open-access ratio of an instance.

    Returns:
        Tuple[Optional[str], Optional[float]]: (bound name, value), or (None, None)
        when the edge set is not complete
    """
    if not instance.edges.is_complete:
        return None, None
    if instance.all_linear and instance.slopes().min() < instance.alphas().max():
        return "open_linear", bound_open_linear(instance)
    return "open_asym", bound_open_asym(instance.n)


# Price of anarchy
def price_of_anarchy(instance: Instance, tol: float = config.NASH_TOL) -> PoAReport:
    """
    Efficient welfare over the complete edge set divided by equilibrium welfare
    over the instance's own edges.

    Args:
        instance: Valid instance
        tol: Solver tolerance for non-linear costs

    Returns:
        PoAReport: Ratio with the applicable closed-form bound
    """
    equilibrium = solve_nash(instance, tol=tol)
    efficient = efficient_outcome(instance, EdgeSet.complete(instance.n, instance.m), tol=tol)
    rho = welfare_ratio(efficient.social_welfare, equilibrium.social_welfare)
    name, value = applicable_open_bound(instance)
    report = PoAReport(
        sw_efficient=efficient.social_welfare,
        sw_equilibrium=equilibrium.social_welfare,
        rho=rho,
        bound_name=name,
        bound_value=value,
        bound_satisfied=bound_satisfied(rho, value),
        design="open",
        converged=equilibrium.converged and efficient.converged,
    )
    if report.bound_satisfied is False:
        logger.warning(f"ratio {rho:.12g} exceeds {name} bound {value:.12g}")
    return report


def worst_case_linearize(instance: Instance, tol: float = config.NASH_TOL) -> Instance:
    """
    Replace every cost by the linear cost whose slope is its right derivative at the
    firm's equilibrium output. The equilibrium profile is unchanged and the ratio
    can only grow.
    """
    equilibrium = solve_nash(instance, tol=tol)
    outputs = equilibrium.q.firm_totals
    firms = [CostFunction.linear(f.right_derivative(float(s))) for f, s in zip(instance.firms, outputs)]
    metadata = dict(instance.metadata)
    metadata["linearized"] = True
    return instance.with_costs(firms).model_copy(update={"metadata": metadata})


# Generators
def gen_symmetric(n: int, m: int, alpha: float, beta: float, c: float) -> Instance:
    """n identical linear-cost firms on m identical markets, complete edges."""
    if n < 1 or m < 1:
        raise PreconditionError("symmetric family needs n >= 1 and m >= 1")
    if alpha <= 0 or beta <= 0 or c < 0:
        raise PreconditionError("symmetric family needs alpha > 0, beta > 0 and c >= 0")
    metadata: Dict[str, Any] = {
        "family": "symmetric", "n": n, "m": m, "alpha": alpha, "beta": beta, "c": c,
        "bound_open_sym": bound_open_sym(n),
    }
    return linear_instance([c] * n, [(alpha, beta)] * m, metadata=metadata)


def gen_asym_worst(n: int, alpha: float, beta: float, c1: float) -> Instance:
    """
    Single-market instance attaining bound_open_asym(n): firm 1 has cost c1, the
    other n - 1 firms share c* = alpha - (2n+3)/(3n+5) (alpha - c1).

    Raises:
        PreconditionError: If n < 2 or c1 >= alpha
    """
    if n < 2:
        raise PreconditionError("asym-worst family needs n >= 2")
    if not c1 < alpha:
        raise PreconditionError("asym-worst family needs c1 < alpha")
    if beta <= 0 or c1 < 0:
        raise PreconditionError("asym-worst family needs beta > 0 and c1 >= 0")
    c_star = alpha - (2 * n + 3) / (3 * n + 5) * (alpha - c1)
    metadata: Dict[str, Any] = {
        "family": "asym-worst", "n": n, "alpha": alpha, "beta": beta, "c1": c1,
        "c_star": c_star, "bound_open_asym": bound_open_asym(n),
    }
    return linear_instance([c1] + [c_star] * (n - 1), [(alpha, beta)], metadata=metadata)


# Search costs
def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise PreconditionError("search intensity theta must lie in [0, 1]")


def search_cost_bound(n: int, theta: float) -> float:
    """Ratio bound with consumer search costs: (n+1)^2 / (n^2 (1 - theta f(n)) + 2n), f(n) = (n-1)/(n+1)."""
    if n < 1:
        raise PreconditionError("firm count must be at least 1")
    _check_theta(theta)
    f = (n - 1) / (n + 1)
    return (n + 1) ** 2 / (n * n * (1.0 - theta * f) + 2 * n)


def search_cost_penalty(theta: float, n: int, consumer_surplus: float) -> float:
    """Search cost r = theta (n-1)/(n+1) CS borne by consumers of a market with n sellers."""
    if n < 1:
        raise PreconditionError("firm count must be at least 1")
    _check_theta(theta)
    if consumer_surplus < 0:
        raise PreconditionError("consumer surplus must be nonnegative")
    return theta * (n - 1) / (n + 1) * consumer_surplus


def search_cost_report(instance: Instance, theta: float) -> SearchCostReport:
    """
    Equilibrium welfare net of search costs for identical linear firms on complete edges.

    Raises:
        PreconditionError: If costs are not identical and linear or edges are not complete
    """
    _check_theta(theta)
    slopes = instance.slopes()
    if not instance.all_linear or not np.allclose(slopes, slopes[0], rtol=0.0, atol=1e-15):
        raise PreconditionError("search-cost model requires identical linear costs")
    if not instance.edges.is_complete:
        raise PreconditionError("search-cost model requires the complete edge set")

    n = instance.n
    equilibrium = solve_nash(instance)
    efficient = efficient_outcome(instance)
    surplus = []
    penalties = []
    for j, mk in enumerate(instance.markets):
        _, cs, _ = demand_welfare([mk], np.array([equilibrium.demand[j]]))
        surplus.append(cs)
        penalties.append(search_cost_penalty(theta, n, cs))
    post_search = equilibrium.social_welfare - sum(penalties)
    return SearchCostReport(
        theta=theta,
        n=n,
        consumer_surplus=tuple(surplus),
        penalties=tuple(penalties),
        sw_efficient=efficient.social_welfare,
        sw_equilibrium=equilibrium.social_welfare,
        sw_post_search=post_search,
        rho=welfare_ratio(efficient.social_welfare, post_search),
        bound=search_cost_bound(n, theta),
    )

