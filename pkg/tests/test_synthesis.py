import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cptmdp.cpt import Identity, PowerGain
from cptmdp.errors import InvalidInputError
from cptmdp.mdp import (
    Mdp,
    PolicyTable,
    value_iteration_expected_cost,
    value_iteration_reachability,
)
from cptmdp.posy import Posynomial
from cptmdp.scenarios import build_rideshare, random_mdp
from cptmdp.synthesis import SynthesisConfig, evaluate_policy_cpt, stage_problem, synthesize

from conftest import simplex_grid_max

PUB = Posynomial.published()


class TestExample:
    def test_identity_picks_a(self, example, example_terminal):
        res = synthesize(example, SynthesisConfig(), example_terminal)
        assert res.policy.get(1, 0) == {"a": 1.0, "b": 0.0}
        assert res.values.at(1, 0) == pytest.approx(0.5, abs=1e-9)

    def test_mixed_policy_value(self, example, example_terminal):
        pol = PolicyTable.stationary(example, {1: {"a": 0.3, "b": 0.7}})
        v = evaluate_policy_cpt(example, pol, SynthesisConfig(), example_terminal)
        assert v.at(1, 0) == pytest.approx(0.486, abs=1e-9)

    def test_weighting_inflates(self, example, example_terminal):
        cfg = SynthesisConfig(weighting=PUB, utility=PowerGain(0.88))
        res = synthesize(example, cfg, example_terminal)
        v = res.values.at(1, 0)
        assert v >= 0.5
        prob = stage_problem(example, cfg, 1, 0, res.values.values[:, 1])
        assert v >= simplex_grid_max(prob.value) - 1e-3

    def test_targets_pinned(self, example, example_terminal):
        res = synthesize(example, SynthesisConfig(weighting=PUB, utility=PowerGain(0.88)), example_terminal)
        assert res.values.at(4, 0) == 1.0


class TestIdentityReduction:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_reach(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, int(rng.integers(2, 10)), 3, int(rng.integers(1, 6)))
        v, pol = value_iteration_reachability(m)
        res = synthesize(m, SynthesisConfig())
        assert np.abs(res.values.values - v.values).max() <= 1e-9
        assert all(np.array_equal(a, b) for a, b in zip(pol.probs, res.policy.probs))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_cost(self, seed):
        rng = np.random.default_rng(seed)
        base = random_mdp(rng, 6, 3, 4)
        cost = {s: float(rng.uniform(0, 5)) for s in base.states}
        m = Mdp(base.states, base.initial, base.actions, base.transitions, 4, target=base.target, state_cost=cost)
        v, _ = value_iteration_expected_cost(m)
        res = synthesize(m, SynthesisConfig(mode="cost"))
        assert np.abs(res.values.values - v.values).max() <= 1e-9

    def test_reward(self):
        m = build_rideshare()
        v, pol = value_iteration_expected_cost(m)
        res = synthesize(m, SynthesisConfig(mode="reward"))
        assert np.abs(res.values.values - v.values).max() <= 1e-9
        assert all(np.array_equal(a, b) for a, b in zip(pol.probs, res.policy.probs))


class TestConsistency:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_evaluating_synthesized_policy(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 6, 3, 3)
        cfg = SynthesisConfig(weighting=PUB, utility=PowerGain(0.88))
        res = synthesize(m, cfg)
        v = evaluate_policy_cpt(m, res.policy, cfg)
        assert np.abs(v.values - res.values.values).max() <= 1e-9

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_deterministic_policies_do_not_beat_synthesis(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 5, 2, 1)
        cfg = SynthesisConfig(weighting=PUB, utility=PowerGain(0.88))
        best = synthesize(m, cfg).values.at(m.initial, 0)
        i = m.compiled.index[m.initial]
        for j in range(len(m.actions[m.initial])):
            choice = np.zeros((len(m.states), 1), dtype=int)
            choice[i, 0] = j
            v = evaluate_policy_cpt(m, PolicyTable.deterministic(m, choice), cfg)
            assert v.at(m.initial, 0) <= best + 1e-9

    def test_traces_kept(self, example, example_terminal):
        res = synthesize(example, SynthesisConfig(keep_traces=True), example_terminal)
        assert set(res.traces) == {(1, 0), (2, 0), (3, 0)}
        assert all(tr.is_monotone() for tr in res.traces.values())

    def test_deterministic_output(self):
        m = random_mdp(np.random.default_rng(4), 8, 3, 4)
        cfg = SynthesisConfig(weighting=PUB, utility=PowerGain(0.88))
        a, b = synthesize(m, cfg), synthesize(m, cfg)
        assert np.array_equal(a.values.values, b.values.values)


class TestConfigErrors:
    def test_unknown_mode(self, example):
        with pytest.raises(InvalidInputError):
            synthesize(example, SynthesisConfig(mode="fast"))

    def test_cost_mode_needs_costs(self, example):
        with pytest.raises(InvalidInputError):
            synthesize(example, SynthesisConfig(mode="cost"))

    def test_reward_mode_needs_identity_utility(self):
        with pytest.raises(InvalidInputError):
            synthesize(build_rideshare(), SynthesisConfig(mode="reward", utility=PowerGain()))

    def test_reward_mode_needs_rewards(self, example):
        with pytest.raises(InvalidInputError):
            synthesize(example, SynthesisConfig(mode="reward", utility=Identity()))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_cost_mode_is_the_reachability_recursion(seed):
    rng = np.random.default_rng(seed)
    base = random_mdp(rng, 6, 3, 4)
    m = Mdp(
        base.states, base.initial, base.actions, base.transitions, 4,
        target=base.target, state_cost={s: 0.0 for s in base.states},
    )
    pol = PolicyTable.from_arrays(m, [rng.dirichlet(np.ones(len(m.actions[s])), size=4) for s in m.states])
    terminal = {s: 1.0 for s in m.target}
    cost_view = evaluate_policy_cpt(m, pol, SynthesisConfig(mode="cost"), terminal)
    reach_view = evaluate_policy_cpt(base, pol, SynthesisConfig())
    assert np.array_equal(cost_view.values, reach_view.values)
