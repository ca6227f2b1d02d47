import json

import numpy as np
import pytest

from core.errors import InstanceError, NetCournotError
from core.models import (
    CostFunction,
    EdgeSet,
    Instance,
    MarketParams,
    SupplyProfile,
    ensure_valid,
    instance_digest,
    linear_instance,
    parse_instance,
    serialize_instance,
    validate,
)

TWO_BY_TWO = """
{
  "firms": [{"cost": {"kind": "linear", "c": 0.0}},
            {"cost": {"kind": "quadratic", "c": 0.1, "d": 0.5}}],
  "markets": [{"alpha": 2.0, "beta": 1.0}, {"alpha": 1.5, "beta": 0.5}],
  "edges": [[1, 1], [2, 1], [2, 2]]
}
"""


class TestValidate:
    def test_minimal_instance_is_ok(self, monopoly):
        report = validate(monopoly)
        assert report.ok
        assert report.violations == ()

    def test_zero_beta_is_reported(self):
        inst = linear_instance([0.0], [(1.0, 0.0)])
        report = validate(inst)
        assert not report.ok
        assert any("beta must be strictly positive" in v for v in report.violations)

    def test_edge_dimension_mismatch(self):
        inst = linear_instance([0.0], [(1.0, 1.0)], edges=EdgeSet.complete(2, 3))
        report = validate(inst)
        assert "edge set dimension mismatch" in report.violations

    def test_negative_cost_and_alpha(self):
        inst = linear_instance([-0.5], [(-1.0, 1.0)])
        report = validate(inst)
        assert len(report.violations) == 2

    def test_ensure_valid_raises_with_violations(self):
        inst = linear_instance([0.0], [(1.0, 0.0)])
        with pytest.raises(InstanceError) as exc:
            ensure_valid(inst)
        assert exc.value.violations
        assert isinstance(exc.value, ValueError)
        assert isinstance(exc.value, NetCournotError)


class TestEdgeSet:
    def test_complete_has_all_edges(self):
        edges = EdgeSet.complete(3, 2)
        assert edges.count == 6
        assert edges.is_complete

    def test_membership_is_total(self):
        edges = EdgeSet.from_pairs(2, 2, [(0, 1)])
        assert edges.contains(0, 1)
        assert not edges.contains(1, 0)
        assert not edges.contains(5, 5)

    def test_out_of_range_pair_rejected(self):
        with pytest.raises(InstanceError):
            EdgeSet.from_pairs(1, 1, [(1, 0)])

    def test_with_edge_and_firms_in_market(self):
        edges = EdgeSet.empty(3, 1).with_edge(2, 0).with_edge(0, 0)
        assert edges.firms_in_market(0) == [0, 2]
        assert edges.pairs() == [(0, 0), (2, 0)]


class TestCostFunction:
    def test_zero_output_costs_nothing(self):
        assert CostFunction.quadratic(1.0, 2.0).evaluate(0.0) == 0.0

    def test_quadratic_evaluate_and_derivative(self):
        cost = CostFunction.quadratic(0.5, 1.0)
        assert cost.evaluate(2.0) == pytest.approx(5.0)
        assert cost.right_derivative(2.0) == pytest.approx(4.5)
        assert cost.right_derivative(0.0) == pytest.approx(0.5)

    def test_linear_flag(self):
        assert CostFunction.linear(0.2).is_linear
        assert not CostFunction.quadratic(0.2, 0.1).is_linear


class TestSupplyProfile:
    def test_totals(self):
        q = SupplyProfile.from_array(np.array([[1.0, 2.0], [0.5, 0.0]]))
        assert q.firm_totals.tolist() == [3.0, 0.5]
        assert q.market_totals.tolist() == [1.5, 2.0]

    def test_sparsity_violation_on_missing_edge(self):
        q = SupplyProfile.from_array(np.array([[1.0, 1.0]]))
        edges = EdgeSet.from_pairs(1, 2, [(0, 0)])
        problems = q.sparsity_violations(edges)
        assert len(problems) == 1
        assert "missing edge" in problems[0]


class TestParse:
    def test_canonical_document(self):
        inst = parse_instance(TWO_BY_TWO)
        assert (inst.n, inst.m) == (2, 2)
        assert inst.edges.pairs() == [(0, 0), (1, 0), (1, 1)]
        assert inst.firms[1].d == 0.5
        assert not inst.all_linear

    def test_complete_edges(self):
        doc = json.loads(TWO_BY_TWO)
        doc["edges"] = "complete"
        inst = parse_instance(json.dumps(doc))
        assert inst.edges.count == 4

    def test_unknown_cost_kind_rejected(self):
        doc = json.loads(TWO_BY_TWO)
        doc["firms"][0]["cost"]["kind"] = "cubic"
        with pytest.raises(InstanceError) as exc:
            parse_instance(json.dumps(doc))
        assert any("firms.0.cost.kind" in v for v in exc.value.violations)

    def test_quadratic_without_d_rejected(self):
        doc = json.loads(TWO_BY_TWO)
        del doc["firms"][1]["cost"]["d"]
        with pytest.raises(InstanceError):
            parse_instance(json.dumps(doc))

    def test_malformed_json_reports_location(self):
        with pytest.raises(InstanceError) as exc:
            parse_instance('{"firms": [}')
        assert exc.value.location.startswith("line 1")

    def test_invalid_values_rejected(self):
        doc = json.loads(TWO_BY_TWO)
        doc["markets"][0]["beta"] = 0.0
        with pytest.raises(InstanceError):
            parse_instance(json.dumps(doc))

    def test_serialize_parse_identity(self):
        inst = parse_instance(TWO_BY_TWO)
        assert parse_instance(serialize_instance(inst)) == inst

    def test_metadata_survives_and_digest_ignores_it(self):
        plain = linear_instance([0.0, 0.5], [(1.0, 1.0)])
        tagged = linear_instance([0.0, 0.5], [(1.0, 1.0)], metadata={"family": "demo"})
        assert parse_instance(serialize_instance(tagged)).metadata == {"family": "demo"}
        assert instance_digest(plain) == instance_digest(tagged)
        assert instance_digest(plain) != instance_digest(linear_instance([0.0, 0.6], [(1.0, 1.0)]))


def test_instance_helpers():
    inst = Instance(
        firms=(CostFunction.linear(0.4), CostFunction.linear(0.1), CostFunction.linear(0.4)),
        markets=(MarketParams(alpha=1.0, beta=2.0),),
        edges=EdgeSet.empty(3, 1),
    )
    assert inst.cost_order() == [1, 0, 2]
    assert inst.open_access().edges.is_complete
    assert MarketParams(alpha=3.0, beta=2.0).choke_quantity == 1.5
