import itertools

import numpy as np
import pytest

from cptmdp.scenarios import EXAMPLE_TERMINAL, example_mdp


@pytest.fixture
def example():
    return example_mdp(1)


@pytest.fixture
def example_terminal():
    return dict(EXAMPLE_TERMINAL)


def naive_policy_value(m, choice, terminal=None):
    """Plain-dict evaluation of a deterministic time-indexed policy.

    ``choice[t][s]`` is an action. Independent of the compiled solver code.
    """
    T = m.horizon
    if m.mode == "reach":
        v = {s: (1.0 if s in m.target else 0.0) for s in m.states}
    else:
        v = {s: 0.0 for s in m.states}
    if terminal:
        v.update(terminal)
    for t in range(T - 1, -1, -1):
        nv = {}
        for s in m.states:
            if s in m.target:
                nv[s] = 1.0 if m.mode == "reach" else v_T(m, s, terminal)
                continue
            a = choice[t][s]
            cont = sum(p * v[s2] for s2, p in m.transitions[(s, a)].items())
            if m.mode == "cost":
                cont += m.state_cost[s]
            elif m.mode == "reward":
                cont += m.sa_reward[(s, a)][t]
            nv[s] = cont
        v = nv
    return v


def v_T(m, s, terminal):
    return float((terminal or {}).get(s, 0.0))


def brute_force_best(m, terminal=None, maximize=True):
    """Optimal initial value by enumerating every deterministic time-indexed policy."""
    per_stage = list(itertools.product(*[m.actions[s] for s in m.states]))
    best = None
    for plan in itertools.product(per_stage, repeat=m.horizon):
        choice = [dict(zip(m.states, stage)) for stage in plan]
        val = naive_policy_value(m, choice, terminal)[m.initial]
        if best is None or (val > best if maximize else val < best):
            best = val
    return best


def simplex_grid_max(f, step=1e-3):
    """Max of f over a 2-action simplex sampled at ``step`` spacing."""
    xs = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    return max(f(np.array([x, 1.0 - x])) for x in xs)
