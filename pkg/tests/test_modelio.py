import json

import numpy as np
import pytest

from cptmdp import modelio
from cptmdp.cpt import Identity, PosynomialApprox, PowerGain, PowerLoss, Prelec, TverskyKahneman
from cptmdp.errors import ModelParseError
from cptmdp.mdp import PolicyTable, simulate, validate
from cptmdp.posy import Posynomial
from cptmdp.scenarios import (
    EXAMPLE_TERMINAL,
    GridworldSpec,
    build_gridworld,
    build_rideshare,
    example_mdp,
    random_mdp,
)
from cptmdp.synthesis import SynthesisConfig, synthesize


def round_trip(model, tmp_path):
    path = tmp_path / "m.json"
    modelio.save_model(model, path)
    return modelio.load_model(path)


@pytest.mark.parametrize(
    "build",
    [
        lambda: example_mdp(2),
        build_rideshare,
        lambda: build_gridworld(GridworldSpec.random(5, 4, 3, seed=2, horizon=6)),
        lambda: random_mdp(np.random.default_rng(1), 9, 3, 5),
    ],
)
def test_scenarios_round_trip(build, tmp_path):
    m = build()
    assert round_trip(m, tmp_path).mdp == m


def test_full_document_round_trip(tmp_path):
    model = modelio.ModelFile(
        example_mdp(),
        weighting=PosynomialApprox(Posynomial.published()),
        utility=PowerGain(0.88),
        solver={"tol": 1e-7, "max_iter": 20, "starts": 4},
        mode="reach",
        terminal=dict(EXAMPLE_TERMINAL),
    )
    assert round_trip(model, tmp_path) == model


@pytest.mark.parametrize("w", [Identity(), Prelec(0.4, 0.7), TverskyKahneman(0.5)])
def test_weighting_specs(w):
    assert modelio.weighting_from_json(json.loads(json.dumps(modelio.weighting_to_json(w)))) == w


@pytest.mark.parametrize("u", [Identity(), PowerGain(0.5), PowerLoss(2.0, 0.7)])
def test_utility_specs(u):
    assert modelio.utility_from_json(json.loads(json.dumps(modelio.utility_to_json(u)))) == u


def test_probabilities_are_decimal_strings(tmp_path):
    path = tmp_path / "m.json"
    modelio.save_model(example_mdp(), path)
    doc = json.loads(path.read_text())
    assert doc["transitions"]["1"]["b"] == {"2": "0.6", "4": "0.4"}


def test_row_sum_defect_loads_then_fails_validation(tmp_path):
    doc = modelio.mdp_to_json(example_mdp())
    doc["transitions"]["1"]["b"] = {"2": "0.55", "4": "0.4"}
    model = modelio.parse_model(json.dumps(doc))
    problems = validate(model.mdp)
    assert len(problems) == 1 and "(1, 'b')" in problems[0]


def test_truncated_document_reports_position():
    text = json.dumps(modelio.mdp_to_json(example_mdp()), indent=1)
    with pytest.raises(ModelParseError) as err:
        modelio.parse_model(text[: len(text) // 2])
    assert err.value.line is not None and err.value.column is not None


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["transitions"]["1"]["b"].update({"9": "0.1"}), "transitions.1.b.9"),
        (lambda d: d["transitions"]["1"]["b"].update({"2": "six"}), "transitions.1.b.2"),
        (lambda d: d.pop("horizon"), "$"),
        (lambda d: d.update(mode="fast"), "mode"),
        (lambda d: d.update(weighting={"kind": "cubic"}), "weighting.kind"),
    ],
)
def test_field_errors(mutate, field):
    doc = modelio.mdp_to_json(example_mdp())
    mutate(doc)
    with pytest.raises(ModelParseError) as err:
        modelio.parse_model(json.dumps(doc))
    assert err.value.field == field


def test_string_state_ids_survive(tmp_path):
    m = example_mdp()
    from cptmdp.mdp import Mdp

    named = Mdp(
        tuple(f"s{s}" for s in m.states),
        "s1",
        {f"s{s}": a for s, a in m.actions.items()},
        {(f"s{s}", a): {f"s{t}": p for t, p in row.items()} for (s, a), row in m.transitions.items()},
        1,
        target={"s4"},
    )
    assert round_trip(named, tmp_path).mdp == named


class TestCsv:
    def test_policy_round_trip(self, tmp_path):
        m = random_mdp(np.random.default_rng(0), 6, 3, 3)
        res = synthesize(m, SynthesisConfig(weighting=Posynomial.published(), utility=PowerGain()))
        path = tmp_path / "policy.csv"
        modelio.write_policy_csv(res.policy, path)
        back = modelio.read_policy_csv(m, path)
        assert all(np.array_equal(a, b) for a, b in zip(back.probs, res.policy.probs))

    def test_policy_bad_row(self, tmp_path):
        m = example_mdp()
        path = tmp_path / "p.csv"
        path.write_text("state,t,action,prob\n1,0,zz,1.0\n")
        with pytest.raises(ModelParseError) as err:
            modelio.read_policy_csv(m, path)
        assert err.value.line == 2

    def test_headers(self, tmp_path):
        m = example_mdp()
        res = synthesize(m, SynthesisConfig(keep_traces=True), EXAMPLE_TERMINAL)
        modelio.write_values_csv(res.values, tmp_path / "v.csv")
        modelio.write_trace_csv(res.traces, tmp_path / "t.csv")
        modelio.write_simulation_csv(simulate(m, PolicyTable.uniform(m), 5, 0), tmp_path / "s.csv")
        heads = {p: (tmp_path / p).read_text().splitlines()[0] for p in ("v.csv", "t.csv", "s.csv")}
        assert heads == {"v.csv": "state,t,value", "t.csv": "state,t,round,objective", "s.csv": "run,cost,crashed,reached"}
        rows = (tmp_path / "t.csv").read_text().splitlines()[1:]
        assert rows[0].startswith("1,0,0,")
