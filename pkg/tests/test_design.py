import numpy as np
import pytest

from core.design import (
    brute_force_design,
    greedy_network,
    include_improves,
    joint_brute_force_design,
    poa_discriminatory,
    prefix_welfare_curve,
    sw_single_market_closed,
)
from core.equilibrium import efficient_outcome, nash_linear
from core.errors import PreconditionError
from core.models import CostFunction, EdgeSet, Instance, MarketParams, linear_instance
from core.poa_analysis import bound_open_sym, gen_asym_worst, gen_symmetric, price_of_anarchy

from conftest import random_linear_instance


def small_corpus(rng, size):
    for _ in range(size):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        alphas = rng.uniform(0.5, 2.0, m)
        betas = rng.uniform(0.2, 2.0, m)
        costs = rng.uniform(0.0, alphas.max(), n)
        yield linear_instance(costs, list(zip(alphas, betas)))


class TestClosedForms:
    def test_monopoly(self):
        assert sw_single_market_closed(1.0, 1.0, [0.0]) == pytest.approx(3 / 8)

    def test_symmetric(self):
        for k in range(1, 6):
            expected = (1.0 - 0.2) ** 2 / 2.0 * (1.0 - 1.0 / (k + 1) ** 2)
            assert sw_single_market_closed(1.0, 1.0, [0.2] * k) == pytest.approx(expected)

    def test_two_firms(self):
        value = sw_single_market_closed(1.0, 1.0, [0.0, 0.3])
        assert value == pytest.approx(1.49 - 7 / 18 * 1.7 ** 2)
        assert value == pytest.approx(nash_linear(linear_instance([0.0, 0.3], [(1.0, 1.0)])).social_welfare)

    def test_inactive_firm_rejected(self):
        with pytest.raises(PreconditionError):
            sw_single_market_closed(1.0, 1.0, [0.0, 0.6])

    def test_include_threshold(self):
        assert include_improves(1.0, [0.0], 0.1)
        assert not include_improves(1.0, [0.0], 0.3)
        assert include_improves(1.0, [], 0.5)

    def test_prefix_curve_shows_excess_entry(self):
        curve = prefix_welfare_curve(1.0, 1.0, [0.0, 0.3])
        assert curve.tolist() == pytest.approx([0.0, 3 / 8, 1.49 - 7 / 18 * 1.7 ** 2])
        assert curve[2] < curve[1]


class TestGreedy:
    def test_symmetric_keeps_everyone(self):
        result = greedy_network(gen_symmetric(4, 3, 1.5, 0.5, 0.2))
        assert result.edges.is_complete
        assert result.per_market_active_counts == (4, 4, 4)

    def test_costly_entrant_excluded(self, duopoly_03):
        result = greedy_network(duopoly_03)
        assert result.edges.pairs() == [(0, 0)]
        assert result.sw_equilibrium == pytest.approx(3 / 8)

    def test_cheap_entrant_included(self):
        result = greedy_network(linear_instance([0.0, 0.1], [(1.0, 1.0)]))
        assert result.edges.pairs() == [(0, 0), (1, 0)]
        assert result.sw_equilibrium == pytest.approx(1.81 - 7 / 18 * 1.9 ** 2)
        assert result.sw_equilibrium > 3 / 8

    def test_no_later_firm_improves_after_stop(self, rng):
        for inst in small_corpus(rng, 200):
            design = greedy_network(inst)
            slopes = inst.slopes()
            order = list(design.permutation)
            for j, mk in enumerate(inst.markets):
                k = len(design.edges.firms_in_market(j))
                assert design.edges.firms_in_market(j) == sorted(order[:k])
                kept = [slopes[i] for i in order[:k]]
                for i in order[k:]:
                    assert not include_improves(mk.alpha, kept, slopes[i])

    def test_permutation_is_cost_order(self):
        result = greedy_network(linear_instance([0.4, 0.0, 0.2], [(1.0, 1.0)]))
        assert result.permutation == (1, 2, 0)

    def test_rejects_quadratic(self):
        inst = Instance(
            firms=(CostFunction.quadratic(0.0, 1.0),),
            markets=(MarketParams(alpha=2.0, beta=1.0),),
            edges=EdgeSet.complete(1, 1),
        )
        with pytest.raises(PreconditionError):
            greedy_network(inst)

    def test_matches_brute_force(self, rng):
        for inst in small_corpus(rng, 300):
            greedy = greedy_network(inst)
            brute = brute_force_design(inst)
            assert greedy.sw_equilibrium == pytest.approx(brute.sw_equilibrium, abs=1e-12)
            order = greedy.permutation
            grid = greedy.edges.as_array()
            for j in range(inst.m):
                connected = [bool(grid[i, j]) for i in order]
                k = sum(connected)
                # the kept firms form a prefix of the cost order
                assert connected == [True] * k + [False] * (inst.n - k)
                if k < inst.n:
                    mk = inst.markets[j]
                    curve = prefix_welfare_curve(mk.alpha, mk.beta, inst.slopes()[order])
                    assert curve[k + 1] <= curve[k] + 1e-12

    def test_joint_oracle_agrees(self, rng):
        for inst in small_corpus(rng, 20):
            if inst.n * inst.m > 12:
                continue
            joint = joint_brute_force_design(inst)
            assert joint.sw_equilibrium == pytest.approx(greedy_network(inst).sw_equilibrium, abs=1e-12)


class TestBruteForce:
    def test_monopoly_connects_profitable_markets(self):
        result = brute_force_design(linear_instance([0.5], [(1.0, 1.0), (0.4, 1.0)]))
        assert result.edges.pairs() == [(0, 0)]

    def test_same_prefix_as_greedy(self):
        inst = linear_instance([0.0, 0.2, 0.9], [(1.0, 1.0), (1.0, 0.5)])
        assert brute_force_design(inst).edges == greedy_network(inst).edges

    def test_size_guard(self):
        with pytest.raises(PreconditionError):
            brute_force_design(linear_instance([0.0] * 4, [(1.0, 1.0)]), max_firms=3)
        with pytest.raises(PreconditionError):
            joint_brute_force_design(linear_instance([0.0] * 3, [(1.0, 1.0)] * 3), max_edges=8)


class TestPoADiscriminatory:
    def test_asym_worst_two_firms(self):
        inst = gen_asym_worst(2, 1.0, 1.0, 0.0)
        assert price_of_anarchy(inst).rho == pytest.approx(11 / 8)
        report = poa_discriminatory(inst)
        assert report.rho == pytest.approx(4 / 3, abs=1e-9)
        assert greedy_network(inst).edges.pairs() == [(0, 0)]
        assert report.bound_satisfied

    def test_symmetric_is_open_access(self):
        for n in (1, 2, 3):
            report = poa_discriminatory(gen_symmetric(n, 2, 2.0, 1.0, 0.5))
            assert report.rho == pytest.approx(bound_open_sym(n))

    def test_zero_demand(self):
        report = poa_discriminatory(linear_instance([2.0, 3.0], [(1.0, 1.0)]))
        assert report.rho == 1.0
        assert report.bound_name == "discriminatory_cap"

    def test_corpus_capped_and_efficiency_preserved(self, rng):
        for inst in small_corpus(rng, 300):
            design = greedy_network(inst)
            report = poa_discriminatory(inst, design)
            assert report.rho <= 4 / 3 + 1e-9
            designed = efficient_outcome(inst, design.edges).social_welfare
            complete = efficient_outcome(inst, EdgeSet.complete(inst.n, inst.m)).social_welfare
            assert designed >= complete - 1e-12
            assert designed == pytest.approx(complete, abs=1e-12)
            assert report.efficient_preserved is True

    def test_random_linear_with_partial_edges(self, rng):
        # the instance's own edges are ignored by the design
        inst = random_linear_instance(rng, n_max=3, m_max=2, complete=False)
        assert poa_discriminatory(inst).sw_efficient == pytest.approx(
            efficient_outcome(inst, EdgeSet.complete(inst.n, inst.m)).social_welfare
        )
        assert np.isfinite(poa_discriminatory(inst).rho)
