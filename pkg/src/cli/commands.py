#!/usr/bin/env python3
"""
Command-line front end.

Subcommands: nash, efficient, poa, design, controlled, gen, bounds, curve.
Exit codes: 0 success, 1 input error, 2 numerical non-convergence.
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core import config
from core.controlled import (
    AllocationConfig,
    allocate,
    bound_controlled,
    gen_cs_counterexample,
    gen_generalcap_family,
    gen_rev_counterexample,
    gen_theta_family,
    poa_controlled,
    price_curve,
    stackelberg_search,
    stackelberg_single_firm,
)
from core.design import brute_force_design, greedy_network, poa_discriminatory
from core.equilibrium import EquilibriumResult, best_response_check, efficient_outcome, solve_nash
from core.errors import ConvergenceError, NetCournotError
from core.models import EdgeSet, Instance, instance_digest, parse_instance, serialize_instance
from core.poa_analysis import (
    PoAReport,
    bound_discriminatory_gamma,
    bound_linear_gamma,
    bound_open_asym,
    bound_open_sym,
    delta,
    gen_asym_worst,
    gen_symmetric,
    price_of_anarchy,
    search_cost_bound,
)
from core.reports import Report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2

CURVE_POINTS = 101


class CliError(Exception):
    """Bad flags or flag combinations."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# I/O helpers
def _read_instance(path: str) -> Instance:
    if path == "-":
        return parse_instance(sys.stdin.read())
    with open(path, "r", encoding="utf-8") as f:
        return parse_instance(f.read())


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _quantity_rows(result: EquilibriumResult) -> List[Dict[str, Any]]:
    arr = result.q.as_array()
    return [
        {"firm": i + 1, "market": j + 1, "quantity": float(arr[i, j])}
        for i in range(arr.shape[0]) for j in range(arr.shape[1])
    ]


def _equilibrium_payload(result: EquilibriumResult) -> Dict[str, Any]:
    return {
        "method": result.method.value,
        "converged": result.converged,
        "iterations": result.iterations,
        "residual": result.residual,
        "q": result.q.as_array().tolist(),
        "demand": list(result.demand),
        "prices": list(result.prices),
        "profits": list(result.firm_profits),
        "social_welfare": result.social_welfare,
        "welfare": result.welfare.model_dump(),
    }


def _poa_payload(report: PoAReport) -> Dict[str, Any]:
    return report.model_dump()


def _allocation_config(args: argparse.Namespace, instance: Instance) -> AllocationConfig:
    if args.lam is None:
        raise CliError("--lambda is required")
    floor = bool(args.price_floor or instance.metadata.get("price_floor", False))
    return AllocationConfig(lam=args.lam, price_floor=floor)


def _tol(args: argparse.Namespace) -> float:
    return args.tol if args.tol is not None else config.NASH_TOL


def _eps(args: argparse.Namespace) -> float:
    return args.eps if args.eps is not None else config.SE_EPS


# Subcommands
def cmd_nash(args: argparse.Namespace) -> int:
    """Nash equilibrium quantities, prices, profits and welfare."""
    instance = _read_instance(args.instance)
    result = solve_nash(instance, method=args.method, tol=_tol(args))
    payload = _equilibrium_payload(result)
    payload["certified"] = best_response_check(result.q, instance).certified
    report = Report(command="nash", instance_digest=instance_digest(instance), payload=payload,
                    rows=_quantity_rows(result), format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_efficient(args: argparse.Namespace) -> int:
    """Welfare-maximizing supply over the complete edge set (or the instance's own edges)."""
    instance = _read_instance(args.instance)
    edges = instance.edges if args.own_edges else EdgeSet.complete(instance.n, instance.m)
    result = efficient_outcome(instance, edges, tol=_tol(args))
    report = Report(command="efficient", instance_digest=instance_digest(instance),
                    payload=_equilibrium_payload(result), rows=_quantity_rows(result), format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_poa(args: argparse.Namespace) -> int:
    """Price of anarchy under open access, greedy discriminatory access or controlled allocation."""
    if args.design == "controlled" and args.lam is None:
        raise CliError("--lambda is required with --design controlled")
    if args.design != "controlled" and args.lam is not None:
        raise CliError("--lambda only applies to --design controlled")
    instance = _read_instance(args.instance)
    if args.design == "open":
        report = price_of_anarchy(instance, tol=_tol(args))
    elif args.design == "greedy":
        report = poa_discriminatory(instance)
    else:
        report = poa_controlled(instance, _allocation_config(args, instance), grid=args.grid or config.SE_GRID,
                                eps=_eps(args), seed=args.seed, tol=_tol(args))
    out = Report(command="poa", instance_digest=instance_digest(instance), payload=_poa_payload(report),
                 format=args.format)
    _emit(out.render(), args.out)
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_design(args: argparse.Namespace) -> int:
    """Greedy discriminatory-access edge set, optionally checked against brute force."""
    instance = _read_instance(args.instance)
    result = greedy_network(instance)
    payload: Dict[str, Any] = {
        "edges": [[i + 1, j + 1] for i, j in result.edges.pairs()],
        "sw_equilibrium": result.sw_equilibrium,
        "per_market_active_counts": list(result.per_market_active_counts),
        "permutation": [i + 1 for i in result.permutation],
    }
    if args.oracle:
        oracle = brute_force_design(instance)
        payload["sw_brute_force"] = oracle.sw_equilibrium
        payload["oracle_equal"] = abs(oracle.sw_equilibrium - result.sw_equilibrium) <= 1e-12 * max(
            1.0, abs(oracle.sw_equilibrium))
    rows = [
        {"market": j + 1, "firms": " ".join(str(i + 1) for i in result.edges.firms_in_market(j)),
         "sw_equilibrium": result.per_market_welfare[j]}
        for j in range(instance.m)
    ]
    report = Report(command="design", instance_digest=instance_digest(instance), payload=payload,
                    rows=rows, format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK


def cmd_controlled(args: argparse.Namespace) -> int:
    """Stackelberg equilibria under controlled allocation."""
    instance = _read_instance(args.instance)
    cfg = _allocation_config(args, instance)
    if instance.n == 1:
        outcomes = stackelberg_single_firm(instance, cfg)
        status = "exact" if outcomes else "verified-empty"
    else:
        outcomes = stackelberg_search(instance, cfg, grid=args.grid or config.SE_GRID, eps=_eps(args), seed=args.seed)
        status = "search-found" if outcomes else "search-empty"
    rows = [
        {"outcome": k + 1, "total_q": o.total_q, "uniform_price": o.uniform_price, "sw": o.sw,
         "kind": o.kind, "verified": o.verified, "s": " ".join(f"{x:.12g}" for x in o.s)}
        for k, o in enumerate(outcomes)
    ]
    payload = {
        "lambda": cfg.lam,
        "price_floor": cfg.price_floor,
        "equilibria": [o.model_dump() for o in outcomes],
        "found": len(outcomes),
        "se_status": status,
    }
    report = Report(command="controlled", instance_digest=instance_digest(instance), payload=payload,
                    rows=rows, format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK


GEN_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "symmetric": {"n": 2, "m": 1, "alpha": 1.0, "beta": 1.0, "c": 0.0},
    "asym-worst": {"n": 2, "alpha": 1.0, "beta": 1.0, "c1": 0.0},
    "theta": {"m": 2, "theta": 0.5, "epsilon": 0.0},
    "cs-example": {"n": 1, "c": 1.0, "epsilon": 0.1},
    "rev-example": {"alpha": 4.0, "beta": 1.0},
    "generalcap": {"m": 2, "lam": 0.25, "theta": 1e-3},
}


def _generate(args: argparse.Namespace) -> Instance:
    defaults = GEN_DEFAULTS[args.family]
    params = {k: v if getattr(args, k) is None else getattr(args, k) for k, v in defaults.items()}
    family = args.family
    if family == "symmetric":
        return gen_symmetric(params["n"], params["m"], params["alpha"], params["beta"], params["c"])
    if family == "asym-worst":
        return gen_asym_worst(params["n"], params["alpha"], params["beta"], params["c1"])
    if family == "theta":
        return gen_theta_family(params["m"], params["theta"], params["epsilon"])
    if family == "cs-example":
        return gen_cs_counterexample(params["c"], params["epsilon"], params["n"])
    if family == "rev-example":
        return gen_rev_counterexample(params["alpha"], params["beta"], args.epsilon)
    return gen_generalcap_family(params["m"], params["lam"], params["theta"])


def cmd_gen(args: argparse.Namespace) -> int:
    """Write a generated instance document with its metadata block."""
    _emit(serialize_instance(_generate(args)), args.out)
    return EXIT_OK


def _range(lo: float, hi: float, step: float) -> List[float]:
    if step <= 0 or hi < lo:
        raise CliError("ranges need min <= max and a positive step")
    count = int(round((hi - lo) / step))
    return [lo + k * step for k in range(count + 1)]


def cmd_bounds(args: argparse.Namespace) -> int:
    """Tables of the closed-form bounds."""
    if args.n_min < 1 or args.n_max < args.n_min:
        raise CliError("firm range needs 1 <= n-min <= n-max")
    rows: List[Dict[str, Any]] = []
    if args.table == "open":
        gammas = _range(args.gamma_min, args.gamma_max, args.gamma_step)
        for n in range(args.n_min, args.n_max + 1):
            for gamma in gammas:
                rows.append({
                    "n": n,
                    "gamma": gamma,
                    "delta": delta(gamma, n),
                    "bound_open_asym": bound_open_asym(n),
                    "bound_open_sym": bound_open_sym(n),
                    "bound_open_linear": bound_linear_gamma(n, gamma),
                    "bound_discriminatory": bound_discriminatory_gamma(n, gamma),
                })
    elif args.table == "controlled":
        if args.m_min < 2 or args.m_max < args.m_min:
            raise CliError("market range needs 2 <= m-min <= m-max")
        for lam in args.lambdas:
            for m in range(args.m_min, args.m_max + 1):
                rows.append({"lambda": lam, "m": m, "bound_controlled": bound_controlled(lam, m)})
    else:
        for n in range(args.n_min, args.n_max + 1):
            for theta in _range(args.theta_min, args.theta_max, args.theta_step):
                rows.append({"n": n, "theta": theta, "search_cost_bound": search_cost_bound(n, min(theta, 1.0))})
    report = Report(command="bounds", payload={"table": args.table}, rows=rows, format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK


def cmd_curve(args: argparse.Namespace) -> int:
    """Sampled aggregate price curve plus its exact breakpoints."""
    points = args.grid or CURVE_POINTS
    if points < 2:
        raise CliError("--grid needs at least 2 points")
    instance = _read_instance(args.instance)
    cfg = _allocation_config(args, instance)
    curve = price_curve(instance.markets, cfg)
    samples = np.linspace(0.0, curve.q_max, points)
    breakpoints = np.array(curve.breakpoints)
    qs = np.concatenate([samples, breakpoints])
    kinds = ["sample"] * len(samples) + ["breakpoint"] * len(breakpoints)
    order = np.argsort(qs, kind="stable")
    prices = curve.prices(qs)
    rows = [
        {"Q": float(qs[k]), "price": float(prices[k]), "kind": kinds[k],
         "active_markets": len(allocate(instance.markets, float(qs[k]), cfg).active)}
        for k in order
    ]
    payload = {
        "lambda": cfg.lam,
        "price_floor": cfg.price_floor,
        "regime": curve.regime,
        "breakpoints": list(curve.breakpoints),
        "nodes": [list(node) for node in curve.nodes()],
    }
    report = Report(command="curve", instance_digest=instance_digest(instance), payload=payload,
                    rows=rows, format=args.format)
    _emit(report.render(), args.out)
    return EXIT_OK


# Parser
def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid number list '{text}'") from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["json", "csv"], default=None)
    common.add_argument("--out", default=None, help="Write the report to this path instead of stdout")
    common.add_argument("--tol", type=float, default=None, help="Solver tolerance")
    common.add_argument("--seed", type=int, default=0, help="Seed for randomized search starts")
    common.add_argument("--log-level", default=None, help="Logging level (default from NETCOURNOT_LOG_LEVEL)")

    platform = argparse.ArgumentParser(add_help=False)
    platform.add_argument("--lambda", dest="lam", type=float, default=None, help="Platform weight on consumer surplus")
    platform.add_argument("--price-floor", action="store_true", help="Cap each market at its zero-price quantity")
    platform.add_argument("--grid", type=int, default=None, help="Grid points (search grid, or curve samples)")
    platform.add_argument("--eps", type=float, default=None, help="Allowed unilateral gain in the Stackelberg search")

    parser = _Parser(prog="netcournot", description="Networked Cournot platform analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("nash", parents=[common], help="Nash equilibrium")
    p.add_argument("instance")
    p.add_argument("--method", choices=["auto", "closed", "iterative"], default="auto")
    p.set_defaults(handler=cmd_nash)

    p = sub.add_parser("efficient", parents=[common], help="Efficient supply")
    p.add_argument("instance")
    p.add_argument("--own-edges", action="store_true", help="Optimize over the instance's edges, not all edges")
    p.set_defaults(handler=cmd_efficient)

    p = sub.add_parser("poa", parents=[common, platform], help="Price of anarchy")
    p.add_argument("instance")
    p.add_argument("--design", choices=["open", "greedy", "controlled"], default="open")
    p.set_defaults(handler=cmd_poa)

    p = sub.add_parser("design", parents=[common], help="Greedy discriminatory-access design")
    p.add_argument("instance")
    p.add_argument("--oracle", action="store_true", help="Also run the brute-force oracle")
    p.set_defaults(handler=cmd_design)

    p = sub.add_parser("controlled", parents=[common, platform], help="Stackelberg equilibria")
    p.add_argument("instance")
    p.set_defaults(handler=cmd_controlled)

    p = sub.add_parser("gen", parents=[common], help="Generate an instance family")
    p.add_argument("--family", required=True,
                   choices=["symmetric", "asym-worst", "theta", "cs-example", "rev-example", "generalcap"])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("bounds", parents=[common], help="Closed-form bound tables")
    p.add_argument("--table", choices=["open", "controlled", "search"], required=True)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--m-min", type=int, default=2)
    p.add_argument("--m-max", type=int, default=6)
    p.add_argument("--lambdas", type=_float_list, default=[0.0, 0.25, 0.5, 0.6, 0.8])
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=1.0)
    p.add_argument("--theta-step", type=float, default=0.5)
    p.add_argument("--gamma-min", type=float, default=1.0)
    p.add_argument("--gamma-max", type=float, default=1.0)
    p.add_argument("--gamma-step", type=float, default=0.25)
    p.set_defaults(handler=cmd_bounds, default_format="csv")

    p = sub.add_parser("curve", parents=[common, platform], help="Aggregate price curve")
    p.add_argument("instance")
    p.set_defaults(handler=cmd_curve, default_format="csv")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    try:
        logging.basicConfig(
            level=(args.log_level or config.LOG_LEVEL).upper(),
            stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.handler(args)
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (NetCournotError, CliError, ValidationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
