import io
import json

import pandas as pd
import pytest

from cli.commands import EXIT_INPUT, EXIT_OK, main
from core.controlled import gen_cs_counterexample, gen_theta_family
from core.models import CostFunction, EdgeSet, Instance, MarketParams, instance_digest, linear_instance, \
    parse_instance, serialize_instance
from core.poa_analysis import gen_asym_worst
from core.reports import Report, round_sig


@pytest.fixture
def write_instance(tmp_path):
    def writer(instance, name="instance.json"):
        path = tmp_path / name
        path.write_text(serialize_instance(instance))
        return str(path)
    return writer


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_frame(out):
    return pd.read_csv(io.StringIO(out), comment="#")


def quadratic_instance():
    return Instance(
        firms=(CostFunction.quadratic(0.0, 1.0),),
        markets=(MarketParams(alpha=2.0, beta=1.0),),
        edges=EdgeSet.complete(1, 1),
    )


class TestNash:
    def test_monopoly_welfare(self, capsys, write_instance):
        inst = linear_instance([0.0], [(2.0, 1.0)])
        code, out, _ = run(capsys, "nash", write_instance(inst))
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["command"] == "nash"
        assert doc["payload"]["social_welfare"] == pytest.approx(1.5)
        assert doc["payload"]["certified"] is True
        assert doc["instance_digest"] == instance_digest(inst)

    def test_closed_method_on_quadratic(self, capsys, write_instance):
        code, _, err = run(capsys, "nash", write_instance(quadratic_instance()), "--method", "closed")
        assert code == EXIT_INPUT
        assert "closed form requires linear costs" in err

    def test_csv_rows_per_edge(self, capsys, write_instance):
        inst = linear_instance([0.0, 0.3], [(1.0, 1.0), (2.0, 1.0)])
        code, out, _ = run(capsys, "nash", write_instance(inst), "--format", "csv")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert list(frame.columns) == ["firm", "market", "quantity"]
        assert len(frame) == 4
        assert frame.loc[0, "quantity"] == pytest.approx(13 / 30)

    def test_out_file(self, capsys, tmp_path, write_instance):
        target = tmp_path / "report.json"
        code, out, _ = run(capsys, "nash", write_instance(linear_instance([0.0], [(2.0, 1.0)])), "--out", str(target))
        assert code == EXIT_OK
        assert out == ""
        assert Report.from_json(target.read_text()).payload["social_welfare"] == pytest.approx(1.5)


class TestInputErrors:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "nash", str(tmp_path / "absent.json"))
        assert code == EXIT_INPUT
        assert err.startswith("error:")

    def test_invalid_instance(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"firms": [{"cost": {"kind": "linear", "c": 0}}], '
                        '"markets": [{"alpha": 1, "beta": 0}], "edges": "complete"}')
        code, _, err = run(capsys, "nash", str(path))
        assert code == EXIT_INPUT
        assert "beta must be strictly positive" in err

    def test_unknown_flag(self, capsys, write_instance):
        code, _, _ = run(capsys, "nash", write_instance(linear_instance([0.0], [(1.0, 1.0)])), "--bogus")
        assert code == EXIT_INPUT

    def test_unknown_subcommand(self, capsys):
        code, _, _ = run(capsys, "simulate")
        assert code == EXIT_INPUT


class TestEfficient:
    def test_cheapest_firm(self, capsys, write_instance):
        code, out, _ = run(capsys, "efficient", write_instance(linear_instance([0.0, 0.3], [(1.0, 1.0)])))
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["social_welfare"] == pytest.approx(0.5)


class TestPoA:
    def test_open_asym_worst(self, capsys, write_instance):
        code, out, _ = run(capsys, "poa", write_instance(gen_asym_worst(2, 1.0, 1.0, 0.0)), "--design", "open")
        assert code == EXIT_OK
        payload = json.loads(out)["payload"]
        assert payload["rho"] == pytest.approx(1.375)
        assert payload["bound_value"] == pytest.approx(1.375)
        assert payload["bound_satisfied"] is True

    def test_greedy_asym_worst(self, capsys, write_instance):
        code, out, _ = run(capsys, "poa", write_instance(gen_asym_worst(2, 1.0, 1.0, 0.0)), "--design", "greedy")
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["rho"] <= 4 / 3 + 1e-9

    def test_controlled_cs_example_is_inf(self, capsys, write_instance):
        path = write_instance(gen_cs_counterexample(1.0, 0.1))
        code, out, _ = run(capsys, "poa", path, "--design", "controlled", "--lambda", "1")
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["rho"] == "inf"
        assert '"rho": "inf"' in out

    def test_controlled_search_status_and_eps(self, capsys, write_instance):
        path = write_instance(linear_instance([0.0, 0.0], [(1.0, 1.0)]))
        code, out, _ = run(capsys, "poa", path, "--design", "controlled", "--lambda", "0.5", "--grid", "200",
                           "--eps", "-1")
        assert code == EXIT_OK
        payload = json.loads(out)["payload"]
        assert payload["se_status"] == "search-empty"
        assert payload["rho"] == "inf"

    def test_controlled_exact_status(self, capsys, write_instance):
        path = write_instance(gen_theta_family(2, 0.5))
        code, out, _ = run(capsys, "poa", path, "--design", "controlled", "--lambda", "0.5")
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["se_status"] == "exact"

    def test_controlled_requires_lambda(self, capsys, write_instance):
        code, _, err = run(capsys, "poa", write_instance(gen_theta_family(2, 0.5)), "--design", "controlled")
        assert code == EXIT_INPUT
        assert "--lambda" in err

    def test_lambda_rejected_for_open(self, capsys, write_instance):
        code, _, _ = run(capsys, "poa", write_instance(gen_theta_family(2, 0.5)), "--lambda", "0.5")
        assert code == EXIT_INPUT

    def test_lambda_out_of_range(self, capsys, write_instance):
        path = write_instance(gen_theta_family(2, 0.5))
        code, _, _ = run(capsys, "poa", path, "--design", "controlled", "--lambda", "1.5")
        assert code == EXIT_INPUT


class TestGen:
    def test_asym_worst(self, capsys):
        code, out, _ = run(capsys, "gen", "--family", "asym-worst", "--n", "2", "--alpha", "1", "--beta", "1",
                           "--c1", "0")
        assert code == EXIT_OK
        inst = parse_instance(out)
        assert inst.slopes().tolist() == pytest.approx([0.0, 4 / 11])
        assert inst.metadata["c_star"] == pytest.approx(4 / 11)

    def test_theta_three_markets(self, capsys):
        code, out, _ = run(capsys, "gen", "--family", "theta", "--m", "3", "--theta", "0.5")
        assert code == EXIT_OK
        inst = parse_instance(out)
        assert [mk.alpha for mk in inst.markets] == pytest.approx([1.0, 1 / 3, 1 / 6])
        assert [mk.beta for mk in inst.markets] == pytest.approx([1.0, 1 / 3, 1 / 12])

    def test_theta_out_of_range(self, capsys):
        code, _, err = run(capsys, "gen", "--family", "theta", "--theta", "0.7")
        assert code == EXIT_INPUT
        assert "theta" in err

    def test_rev_example_carries_price_floor(self, capsys):
        code, out, _ = run(capsys, "gen", "--family", "rev-example")
        assert code == EXIT_OK
        assert parse_instance(out).metadata["price_floor"] is True

    def test_generalcap_metadata(self, capsys):
        code, out, _ = run(capsys, "gen", "--family", "generalcap", "--m", "2", "--lambda", "0.25")
        assert code == EXIT_OK
        assert 0.0 < parse_instance(out).metadata["a"] < 1.0


class TestBounds:
    def test_open_table(self, capsys):
        code, out, _ = run(capsys, "bounds", "--table", "open", "--n-min", "1", "--n-max", "5")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert frame["bound_open_asym"].tolist() == pytest.approx([4 / 3, 11 / 8, 10 / 7, 13 / 9, 22 / 15])

    def test_open_table_gamma_axis(self, capsys):
        code, out, _ = run(capsys, "bounds", "--table", "open", "--n-min", "2", "--n-max", "3",
                           "--gamma-min", "0", "--gamma-max", "1", "--gamma-step", "0.5")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert len(frame) == 6
        assert frame["gamma"].tolist() == pytest.approx([0.0, 0.5, 1.0, 0.0, 0.5, 1.0])
        assert frame["delta"].iloc[0] == 0.0
        assert frame["delta"].iloc[2] > 0.0
        at_zero = frame[frame["gamma"] == 0.0]
        assert at_zero["bound_open_linear"].tolist() == pytest.approx(at_zero["bound_open_asym"].tolist())
        at_one = frame[frame["gamma"] == 1.0]
        assert at_one["bound_open_linear"].tolist() == pytest.approx(at_one["bound_open_sym"].tolist())
        assert (frame["bound_discriminatory"] <= frame["bound_open_linear"] + 1e-12).all()

    def test_controlled_table(self, capsys):
        code, out, _ = run(capsys, "bounds", "--table", "controlled", "--lambdas", "0.5", "--m-min", "2",
                           "--m-max", "6")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert frame["bound_controlled"].tolist() == pytest.approx([8 * m / 9 for m in range(2, 7)])

    def test_search_table(self, capsys):
        code, out, _ = run(capsys, "bounds", "--table", "search", "--n-min", "2", "--n-max", "2",
                           "--theta-min", "0", "--theta-max", "1", "--theta-step", "0.5")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert len(frame) == 3
        assert frame["search_cost_bound"].iloc[-1] == pytest.approx(1.35)

    def test_bad_range(self, capsys):
        code, _, _ = run(capsys, "bounds", "--table", "open", "--n-min", "5", "--n-max", "2")
        assert code == EXIT_INPUT

    def test_json_on_request(self, capsys):
        code, out, _ = run(capsys, "bounds", "--table", "open", "--n-max", "2", "--format", "json")
        assert code == EXIT_OK
        assert len(json.loads(out)["rows"]) == 2


class TestDesign:
    def test_excludes_costly_entrant(self, capsys, write_instance):
        code, out, _ = run(capsys, "design", write_instance(linear_instance([0.0, 0.3], [(1.0, 1.0)])))
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["edges"] == [[1, 1]]

    def test_oracle_agrees(self, capsys, write_instance):
        inst = linear_instance([0.1, 0.0, 0.35], [(1.0, 1.0), (1.4, 0.6)])
        code, out, _ = run(capsys, "design", write_instance(inst), "--oracle")
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["oracle_equal"] is True

    def test_oracle_fields_in_csv_header(self, capsys, write_instance):
        inst = linear_instance([0.1, 0.0, 0.35], [(1.0, 1.0), (1.4, 0.6)])
        code, out, _ = run(capsys, "design", write_instance(inst), "--oracle", "--format", "csv")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert "# oracle_equal: True" in lines
        assert any(line.startswith("# sw_brute_force: ") for line in lines)
        assert len(read_frame(out)) == 2

    def test_quadratic_rejected(self, capsys, write_instance):
        code, _, _ = run(capsys, "design", write_instance(quadratic_instance()))
        assert code == EXIT_INPUT


class TestControlled:
    def test_theta_family(self, capsys, write_instance):
        path = write_instance(gen_theta_family(2, 0.5))
        code, out, _ = run(capsys, "controlled", path, "--lambda", "0.5")
        assert code == EXIT_OK
        payload = json.loads(out)["payload"]
        assert payload["found"] == 2
        assert [e["sw"] for e in payload["equilibria"]] == pytest.approx([3 / 8, 13 / 24])
        assert payload["se_status"] == "exact"

    def test_unattained_supremum_is_verified_empty(self, capsys, write_instance):
        path = write_instance(linear_instance([0.0], [(1.0, 1.0), (2.0, 0.5)]))
        code, out, _ = run(capsys, "controlled", path, "--lambda", "0.9")
        assert code == EXIT_OK
        payload = json.loads(out)["payload"]
        assert payload["found"] == 0
        assert payload["se_status"] == "verified-empty"


class TestCurve:
    def test_theta_family_breakpoints(self, capsys, write_instance):
        path = write_instance(gen_theta_family(2, 0.5))
        code, out, _ = run(capsys, "curve", path, "--lambda", "0.5", "--format", "json")
        assert code == EXIT_OK
        assert json.loads(out)["payload"]["breakpoints"] == pytest.approx([0.0, 2 / 3, 2.0])

    def test_single_market_csv(self, capsys, write_instance):
        path = write_instance(linear_instance([0.0], [(2.0, 0.5)]))
        code, out, _ = run(capsys, "curve", path, "--lambda", "0.3", "--grid", "11")
        assert code == EXIT_OK
        frame = read_frame(out)
        assert list(frame.columns) == ["Q", "price", "kind", "active_markets"]
        samples = frame[frame["kind"] == "sample"]
        assert len(samples) == 11
        assert samples["Q"].iloc[-1] == pytest.approx(4.0)
        assert samples["price"].iloc[-1] == pytest.approx(0.0, abs=1e-9)
        assert frame[frame["kind"] == "breakpoint"]["Q"].tolist() == pytest.approx([0.0, 4.0])

    def test_csv_keeps_breakpoints_and_digest(self, capsys, write_instance):
        inst = gen_theta_family(2, 0.5)
        code, out, _ = run(capsys, "curve", write_instance(inst), "--lambda", "0.5", "--grid", "7")
        assert code == EXIT_OK
        assert f"# instance_digest: {instance_digest(inst)}" in out.splitlines()
        assert "# regime: water-filling" in out.splitlines()
        frame = read_frame(out)
        breakpoints = frame[frame["kind"] == "breakpoint"]
        assert breakpoints["Q"].tolist() == pytest.approx([0.0, 2 / 3, 2.0])
        assert breakpoints["price"].tolist() == pytest.approx([1.0, 1 / 3, 0.0], abs=1e-9)
        assert frame["Q"].is_monotonic_increasing

    def test_vertex_regime(self, capsys, write_instance):
        path = write_instance(linear_instance([0.0], [(2.0, 0.5), (1.0, 1.0)]))
        code, out, _ = run(capsys, "curve", path, "--lambda", "0.9", "--format", "json")
        assert code == EXIT_OK
        payload = json.loads(out)["payload"]
        assert payload["regime"] == "vertex"
        assert len(payload["breakpoints"]) == 3


def test_round_sig():
    assert round_sig(1 / 3) == pytest.approx(0.333333333333)
    assert round_sig(float("inf")) == "inf"


def test_commands_are_deterministic(capsys, write_instance):
    path = write_instance(linear_instance([0.0, 0.1], [(1.0, 1.0), (0.8, 0.5)]))
    first = run(capsys, "controlled", path, "--lambda", "0.5", "--grid", "200", "--seed", "3")
    second = run(capsys, "controlled", path, "--lambda", "0.5", "--grid", "200", "--seed", "3")
    assert first == second
