# src/core/__init__.py
"""Core modules for the NetCournot toolkit"""

from .errors import ConvergenceError, InstanceError, NetCournotError, PreconditionError
from .models import (
    UNBOUNDED,
    CostFunction,
    EdgeSet,
    Instance,
    MarketParams,
    SupplyProfile,
    parse_instance,
    serialize_instance,
    validate,
)
from .equilibrium import EquilibriumResult, efficient_outcome, solve_nash
from .poa_analysis import PoAReport, price_of_anarchy
from .controlled import AllocationConfig, allocate, poa_controlled, price_curve
from .design import DesignResult, greedy_network, poa_discriminatory
from .reports import Report
from . import config

__all__ = [
    'NetCournotError',
    'InstanceError',
    'PreconditionError',
    'ConvergenceError',
    'UNBOUNDED',
    'CostFunction',
    'EdgeSet',
    'Instance',
    'MarketParams',
    'SupplyProfile',
    'parse_instance',
    'serialize_instance',
    'validate',
    'EquilibriumResult',
    'efficient_outcome',
    'solve_nash',
    'PoAReport',
    'price_of_anarchy',
    'AllocationConfig',
    'allocate',
    'poa_controlled',
    'price_curve',
    'DesignResult',
    'greedy_network',
    'poa_discriminatory',
    'Report',
    'config',
]
