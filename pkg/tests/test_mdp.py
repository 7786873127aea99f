import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cptmdp.errors import InvalidInputError
from cptmdp.mdp import (
    Mdp,
    PolicyTable,
    evaluate_policy_expected,
    first_best,
    induce_chain,
    simulate,
    validate,
    value_iteration_expected_cost,
    value_iteration_reachability,
)
from cptmdp.scenarios import random_mdp

from conftest import brute_force_best


def chain(length=3, horizon=5):
    states = tuple(range(length))
    trans = {(s, "go"): {min(s + 1, length - 1): 1.0} for s in states}
    return Mdp(
        states,
        0,
        {s: ("go",) for s in states},
        trans,
        horizon,
        target={length - 1},
        state_cost={s: 1.0 for s in states},
    )


class TestValidate:
    def test_example_is_valid(self, example):
        assert validate(example) == []

    def test_row_sum_defect_names_the_pair(self, example):
        bad = Mdp(
            example.states,
            1,
            example.actions,
            {**example.transitions, (1, "b"): {2: 0.5, 4: 0.4}},
            1,
            target={4},
        )
        problems = validate(bad)
        assert len(problems) == 1
        assert "(1, 'b')" in problems[0]

    def test_deadlock(self, example):
        acts = dict(example.actions)
        acts[3] = ()
        trans = {k: v for k, v in example.transitions.items() if k[0] != 3}
        problems = validate(Mdp(example.states, 1, acts, trans, 1, target={4}))
        assert any("deadlock" in p for p in problems)

    def test_compiled_rejects_invalid(self):
        m = Mdp((0,), 0, {0: ("a",)}, {(0, "a"): {0: 0.9}}, 1)
        with pytest.raises(InvalidInputError):
            m.compiled

    def test_unknown_successor_and_negative_horizon(self):
        m = Mdp((0,), 0, {0: ("a",)}, {(0, "a"): {7: 1.0}}, -1)
        problems = validate(m)
        assert any("unknown state 7" in p for p in problems)
        assert any("horizon" in p for p in problems)

    def test_cost_and_reward_are_exclusive(self):
        m = Mdp((0,), 0, {0: ("a",)}, {(0, "a"): {0: 1.0}}, 1, state_cost={0: 1.0}, sa_reward={(0, "a"): 1.0})
        assert any("at most one" in p for p in validate(m))


class TestInducedChain:
    def test_deterministic_action(self, example):
        pol = PolicyTable.stationary(example, {1: {"a": 1.0}})
        assert induce_chain(example, pol, 0).row(1) == {3: 1.0}

    def test_mixture(self, example):
        pol = PolicyTable.stationary(example, {1: {"a": 0.3, "b": 0.7}})
        row = induce_chain(example, pol, 0).row(1)
        assert row == pytest.approx({2: 0.42, 3: 0.30, 4: 0.28}, abs=1e-12)

    def test_single_action_row_unchanged(self, example):
        row = induce_chain(example, PolicyTable.uniform(example), 0).row(2)
        assert row == {2: 1.0}


class TestReachability:
    def test_example_with_terminal_values(self, example, example_terminal):
        v, pol = value_iteration_reachability(example, example_terminal)
        assert v.at(1, 0) == pytest.approx(0.5, abs=1e-12)
        assert pol.get(1, 0) == {"a": 1.0, "b": 0.0}

    def test_initial_in_target(self, example):
        m = Mdp(example.states, 4, example.actions, example.transitions, 3, target={4})
        v, _ = value_iteration_reachability(m)
        assert all(v.at(4, t) == 1.0 for t in range(4))

    def test_zero_horizon(self, example):
        m = Mdp(example.states, 1, example.actions, example.transitions, 0, target={4})
        v, _ = value_iteration_reachability(m)
        assert v.at(1, 0) == 0.0

    def test_empty_target_rejected(self, example):
        m = Mdp(example.states, 1, example.actions, example.transitions, 1)
        with pytest.raises(InvalidInputError):
            value_iteration_reachability(m)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(rng, 4, 2, int(rng.integers(1, 4)))
        v, pol = value_iteration_reachability(m)
        assert v.at(m.initial, 0) == pytest.approx(brute_force_best(m), abs=1e-12)
        assert evaluate_policy_expected(m, pol).at(m.initial, 0) == pytest.approx(v.at(m.initial, 0), abs=1e-12)


class TestExpectedCost:
    def test_sum_of_constants(self):
        m = Mdp((0,), 0, {0: ("a",)}, {(0, "a"): {0: 1.0}}, 3, state_cost={0: 1.0})
        v, _ = value_iteration_expected_cost(m)
        assert v.at(0, 0) == 3.0

    def test_dominated_action(self):
        # action costs are modelled by routing through a cost state
        m = Mdp(
            ("s", "c1", "c2", "g"),
            "s",
            {"s": ("cheap", "dear"), "c1": ("go",), "c2": ("go",), "g": ("stay",)},
            {
                ("s", "cheap"): {"c1": 1.0},
                ("s", "dear"): {"c2": 1.0},
                ("c1", "go"): {"g": 1.0},
                ("c2", "go"): {"g": 1.0},
                ("g", "stay"): {"g": 1.0},
            },
            3,
            target={"g"},
            state_cost={"s": 0.0, "c1": 1.0, "c2": 2.0, "g": 0.0},
        )
        v, pol = value_iteration_expected_cost(m)
        assert pol.get("s", 0)["cheap"] == 1.0
        assert v.at("s", 0) == 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_cost_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        base = random_mdp(rng, 5, 2, int(rng.integers(1, 4)))
        cost = {s: float(rng.uniform(0, 3)) for s in base.states}
        m = Mdp(base.states, base.initial, base.actions, base.transitions, base.horizon, target=base.target, state_cost=cost)
        v, _ = value_iteration_expected_cost(m)
        assert v.at(m.initial, 0) == pytest.approx(brute_force_best(m, maximize=False), abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_reward_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        base = random_mdp(rng, 4, 2, int(rng.integers(1, 4)))
        reward = {k: tuple(rng.normal(size=base.horizon)) for k in base.transitions}
        m = Mdp(base.states, base.initial, base.actions, base.transitions, base.horizon, target=base.target, sa_reward=reward)
        v, _ = value_iteration_expected_cost(m)
        assert v.at(m.initial, 0) == pytest.approx(brute_force_best(m), abs=1e-10)


def test_first_best_breaks_ties_to_lowest_index():
    q = np.array([[3.0, 3.0 + 1e-15, 2.0], [1.0, 5.0, 5.0]])
    assert first_best(q).tolist() == [0, 1]
    assert first_best(q, maximize=False).tolist() == [2, 0]


class TestSimulate:
    def test_deterministic_chain(self):
        m = chain()
        pol = PolicyTable.uniform(m)
        rep = simulate(m, pol, 50, seed=3)
        assert np.all(rep.costs == rep.costs[0])
        assert rep.costs.var() == 0.0
        assert rep.costs[0] == evaluate_policy_expected(m, pol).at(0, 0)
        assert rep.success_count == 50 and rep.crash_count == 0

    def test_reach_frequency(self, example):
        pol = PolicyTable.stationary(example, {1: {"a": 0.3, "b": 0.7}})
        rep = simulate(example, pol, 100_000, seed=11)
        assert rep.reach_frequency == pytest.approx(0.28, abs=0.01)

    def test_same_seed_same_report(self, example):
        pol = PolicyTable.uniform(example)
        a, b = simulate(example, pol, 500, 5), simulate(example, pol, 500, 5)
        assert np.array_equal(a.costs, b.costs)
        assert np.array_equal(a.crashed, b.crashed) and np.array_equal(a.reached, b.reached)

    def test_crash_bookkeeping(self):
        m = Mdp(
            (0, 1, 2),
            0,
            {0: ("a",), 1: ("a",), 2: ("a",)},
            {(0, "a"): {1: 0.5, 2: 0.5}, (1, "a"): {2: 1.0}, (2, "a"): {2: 1.0}},
            3,
            target={2},
            state_cost={0: 1.0, 1: 10.0, 2: 0.0},
            bad={1},
        )
        rep = simulate(m, PolicyTable.uniform(m), 2000, seed=0)
        assert rep.crash_count + int((~rep.crashed).sum()) == rep.runs
        # crashed runs still reach the target here, but never count toward the mean
        assert rep.mean_cost_success == 1.0
        assert 800 < rep.crash_count < 1200

    def test_policy_mismatch(self, example):
        other = chain()
        with pytest.raises(InvalidInputError):
            simulate(example, PolicyTable.uniform(other), 10, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_reachability_values_are_probabilities(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, 10, 3, 6)
    v, pol = value_iteration_reachability(m)
    assert np.all((v.values >= 0) & (v.values <= 1 + 1e-12))
    tgt = [m.compiled.index[s] for s in m.target]
    assert np.all(v.values[tgt] == 1.0)
    for t in range(m.horizon):
        for s in m.states:
            assert sum(induce_chain(m, pol, t).row(s).values()) == pytest.approx(1.0, abs=1e-9)
