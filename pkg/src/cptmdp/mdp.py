"""Finite-horizon MDP data model, risk-neutral dynamic programming and rollouts.

States and actions are arbitrary hashable ids. Every array-valued quantity is
indexed by the position of a state in ``Mdp.states`` and of an action in
``Mdp.actions[state]``; that order is also the tie-breaking order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Hashable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import InvalidInputError

State = Hashable
Action = Hashable

PROB_TOL = 1e-9
TIE_RTOL = 1e-12


def tie_tolerance(best) -> np.ndarray:
    """Values within this distance of the best count as ties."""
    return TIE_RTOL * np.maximum(1.0, np.abs(best))


def first_best(q: np.ndarray, *, maximize: bool = True) -> np.ndarray:
    """Row-wise index of the first entry tied (within rounding) with the best one."""
    q = np.asarray(q, dtype=float)
    if not maximize:
        q = -q
    best = q.max(axis=-1, keepdims=True)
    return np.argmax(q >= best - tie_tolerance(best), axis=-1)


@dataclass(frozen=True)
class Mdp:
    """A finite MDP with horizon and one of three objective models.

    ``target`` is used by reachability and also acts as an absorbing terminal
    set in the cost and reward models. ``bad`` marks crash states for
    simulation reporting only. ``sa_reward`` maps ``(state, action)`` to a
    tuple of per-time rewards of length ``horizon``; a scalar is broadcast.
    """

    states: tuple
    initial: Any
    actions: Mapping[State, tuple]
    transitions: Mapping[tuple, Mapping[State, float]]
    horizon: int
    target: frozenset = frozenset()
    state_cost: Mapping[State, float] | None = None
    sa_reward: Mapping[tuple, tuple] | None = None
    bad: frozenset = frozenset()

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "states", tuple(self.states))
        set_(self, "actions", {s: tuple(a) for s, a in self.actions.items()})
        set_(self, "transitions", {k: dict(v) for k, v in self.transitions.items()})
        set_(self, "target", frozenset(self.target))
        set_(self, "bad", frozenset(self.bad))
        if self.state_cost is not None:
            set_(self, "state_cost", {s: float(c) for s, c in self.state_cost.items()})
        if self.sa_reward is not None:
            rewards = {}
            for key, r in self.sa_reward.items():
                if np.ndim(r) == 0:
                    rewards[key] = (float(r),) * self.horizon
                else:
                    rewards[key] = tuple(float(x) for x in r)
            set_(self, "sa_reward", rewards)

    @property
    def mode(self) -> str:
        if self.state_cost is not None:
            return "cost"
        if self.sa_reward is not None:
            return "reward"
        return "reach"

    def index(self, state) -> int:
        return self.compiled.index[state]

    def successors(self, state) -> list:
        """S(s): states reachable in one step under some enabled action."""
        c = self.compiled
        return [self.states[j] for j in c.local(c.index[state])[0]]

    @cached_property
    def compiled(self) -> "CompiledMdp":
        problems = validate(self)
        if problems:
            raise InvalidInputError("invalid MDP: " + "; ".join(problems[:5]))
        return CompiledMdp(self)


class CompiledMdp:
    """Index-based view of a validated :class:`Mdp` used by the solvers."""

    def __init__(self, m: Mdp):
        self.n = n = len(m.states)
        self.horizon = m.horizon
        self.index = {s: i for i, s in enumerate(m.states)}
        n_act = np.array([len(m.actions[s]) for s in m.states], dtype=np.int64)
        self.n_actions = n_act
        self.offsets = np.concatenate([[0], np.cumsum(n_act)])
        self.n_rows = int(self.offsets[-1])
        self.max_actions = int(n_act.max()) if n else 0
        self.row_state = np.repeat(np.arange(n), n_act)
        self.row_local = np.arange(self.n_rows) - self.offsets[self.row_state]

        rows, cols, vals = [], [], []
        r = 0
        for s in m.states:
            for a in m.actions[s]:
                for s2, p in m.transitions[(s, a)].items():
                    if p != 0.0:
                        rows.append(r)
                        cols.append(self.index[s2])
                        vals.append(float(p))
                r += 1
        self.P = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, n))
        self.P.sort_indices()

        self.target_mask = np.zeros(n, dtype=bool)
        for s in m.target:
            self.target_mask[self.index[s]] = True
        self.bad_mask = np.zeros(n, dtype=bool)
        for s in m.bad:
            self.bad_mask[self.index[s]] = True

        self.cost = None
        if m.state_cost is not None:
            self.cost = np.array([m.state_cost[s] for s in m.states], dtype=float)
        self.reward = None
        if m.sa_reward is not None:
            self.reward = np.array(
                [m.sa_reward[(s, a)] for s in m.states for a in m.actions[s]],
                dtype=float,
            ).reshape(self.n_rows, m.horizon)
        self._local = {}

    def rows_of(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def local(self, i: int):
        """(successor indices, matrix P[succ, action]) for state index ``i``."""
        hit = self._local.get(i)
        if hit is None:
            block = self.P[self.rows_of(i)]
            succ = np.unique(block.indices)
            hit = (succ, np.asarray(block[:, succ].todense()).T)
            self._local[i] = hit
        return hit

    def pad_rows(self, row_values: np.ndarray, fill: float) -> np.ndarray:
        """Scatter a per-row vector into an (n, max_actions) array."""
        out = np.full((self.n, self.max_actions), fill)
        out[self.row_state, self.row_local] = row_values
        return out


def validate(m: Mdp) -> list[str]:
    """Return a description of every violated model invariant (empty if valid)."""
    problems = []
    if not isinstance(m.horizon, (int, np.integer)) or m.horizon < 0:
        problems.append(f"horizon must be a nonnegative integer, got {m.horizon!r}")
    known = set(m.states)
    if len(known) != len(m.states):
        problems.append("duplicate state ids")
    if m.initial not in known:
        problems.append(f"initial state {m.initial!r} is not a state")
    for s in sorted(set(m.target) - known, key=repr):
        problems.append(f"target state {s!r} is not a state")
    for s in sorted(set(m.bad) - known, key=repr):
        problems.append(f"bad state {s!r} is not a state")
    for s in m.states:
        acts = m.actions.get(s, ())
        if not acts:
            problems.append(f"state {s!r} has no enabled actions (deadlock)")
            continue
        if len(set(acts)) != len(acts):
            problems.append(f"state {s!r} lists an action twice")
        for a in acts:
            row = m.transitions.get((s, a))
            if row is None:
                problems.append(f"({s!r}, {a!r}) has no transition distribution")
                continue
            total = 0.0
            for s2, p in row.items():
                if s2 not in known:
                    problems.append(f"({s!r}, {a!r}) moves to unknown state {s2!r}")
                if not (isinstance(p, (int, float, np.floating)) and math.isfinite(p)):
                    problems.append(f"({s!r}, {a!r}, {s2!r}) probability {p!r} is not finite")
                    continue
                if p < 0.0 or p > 1.0:
                    problems.append(f"({s!r}, {a!r}, {s2!r}) probability {p} outside [0, 1]")
                total += p
            if abs(total - 1.0) > PROB_TOL:
                problems.append(f"({s!r}, {a!r}) probabilities sum to {total!r}, not 1")
    for key in m.transitions:
        s, a = key
        if s not in known or a not in m.actions.get(s, ()):
            problems.append(f"transition for ({s!r}, {a!r}) does not match an enabled action")
    if m.state_cost is not None and m.sa_reward is not None:
        problems.append("at most one of state_cost and sa_reward may be set")
    if m.state_cost is not None:
        for s in m.states:
            c = m.state_cost.get(s)
            if c is None:
                problems.append(f"state {s!r} has no cost")
            elif not (math.isfinite(c) and c >= 0.0):
                problems.append(f"state {s!r} cost {c} is not a nonnegative real")
    if m.sa_reward is not None:
        for s in m.states:
            for a in m.actions.get(s, ()):
                r = m.sa_reward.get((s, a))
                if r is None:
                    problems.append(f"({s!r}, {a!r}) has no reward")
                elif len(r) != m.horizon:
                    problems.append(f"({s!r}, {a!r}) has {len(r)} rewards for horizon {m.horizon}")
                elif not all(math.isfinite(x) for x in r):
                    problems.append(f"({s!r}, {a!r}) has a non-finite reward")
    return problems


@dataclass(frozen=True)
class PolicyTable:
    """Time-indexed randomized policy; ``probs[i][t, j]`` is sigma(s_i, t)(a_j)."""

    states: tuple
    actions: Mapping[State, tuple]
    probs: tuple

    @property
    def horizon(self) -> int:
        return self.probs[0].shape[0] if self.probs else 0

    def distribution(self, state, t: int) -> np.ndarray:
        return self.probs[self.states.index(state)][t]

    def get(self, state, t: int) -> dict:
        return dict(zip(self.actions[state], self.distribution(state, t).tolist()))

    @classmethod
    def from_arrays(cls, m: Mdp, probs: Sequence[np.ndarray]) -> "PolicyTable":
        return cls(m.states, dict(m.actions), tuple(np.asarray(p, dtype=float) for p in probs))

    @classmethod
    def uniform(cls, m: Mdp) -> "PolicyTable":
        return cls.from_arrays(
            m, [np.full((m.horizon, len(m.actions[s])), 1.0 / len(m.actions[s])) for s in m.states]
        )

    @classmethod
    def deterministic(cls, m: Mdp, choice: np.ndarray) -> "PolicyTable":
        """Build from an (n_states, T) array of local action indices."""
        probs = []
        for i, s in enumerate(m.states):
            p = np.zeros((m.horizon, len(m.actions[s])))
            p[np.arange(m.horizon), choice[i]] = 1.0
            probs.append(p)
        return cls.from_arrays(m, probs)

    @classmethod
    def stationary(cls, m: Mdp, mapping: Mapping[State, Mapping[Action, float]]) -> "PolicyTable":
        """Same distribution at every time; states missing from ``mapping`` are uniform."""
        probs = []
        for s in m.states:
            acts = m.actions[s]
            if s in mapping:
                row = np.array([float(mapping[s].get(a, 0.0)) for a in acts])
            else:
                row = np.full(len(acts), 1.0 / len(acts))
            probs.append(np.tile(row, (m.horizon, 1)))
        return cls.from_arrays(m, probs)


def check_policy(m: Mdp, pol: PolicyTable) -> None:
    """Raise :class:`InvalidInputError` unless ``pol`` is a valid policy for ``m``."""
    if tuple(pol.states) != tuple(m.states):
        raise InvalidInputError("policy states do not match the MDP states")
    for i, s in enumerate(m.states):
        if tuple(pol.actions[s]) != tuple(m.actions[s]):
            raise InvalidInputError(f"policy actions at state {s!r} do not match Act(s)")
        p = pol.probs[i]
        if p.shape != (m.horizon, len(m.actions[s])):
            raise InvalidInputError(f"policy at state {s!r} has shape {p.shape}")
        if np.any(p < -PROB_TOL) or np.any(np.abs(p.sum(axis=1) - 1.0) > PROB_TOL):
            raise InvalidInputError(f"policy at state {s!r} is not a distribution at every time")


@dataclass(frozen=True)
class ValueTable:
    """``values[i, t]`` for state index i and t in 0..T."""

    states: tuple
    values: np.ndarray

    def at(self, state, t: int) -> float:
        return float(self.values[self.states.index(state), t])

    def column(self, t: int) -> dict:
        return dict(zip(self.states, self.values[:, t].tolist()))


@dataclass(frozen=True)
class InducedChain:
    states: tuple
    initial: Any
    matrix: sparse.csr_matrix

    def row(self, state) -> dict:
        r = self.matrix.getrow(self.states.index(state))
        return {self.states[j]: float(v) for j, v in zip(r.indices, r.data) if v != 0.0}


def induce_chain(m: Mdp, pol: PolicyTable, t: int) -> InducedChain:
    """Markov chain obtained by averaging action rows under sigma(., t)."""
    check_policy(m, pol)
    if not 0 <= t < m.horizon:
        raise InvalidInputError(f"time {t} outside 0..{m.horizon - 1}")
    c = m.compiled
    weights = np.concatenate([p[t] for p in pol.probs])
    mix = sparse.csr_matrix(
        (weights, (c.row_state, np.arange(c.n_rows))), shape=(c.n, c.n_rows)
    )
    return InducedChain(m.states, m.initial, (mix @ c.P).tocsr())


def _terminal_vector(m: Mdp, terminal: Mapping | None, default: np.ndarray) -> np.ndarray:
    v = default.astype(float).copy()
    if terminal is not None:
        c = m.compiled
        for s, x in terminal.items():
            v[c.index[s]] = float(x)
    return v


def value_iteration_reachability(m: Mdp, terminal: Mapping | None = None):
    """Maximal probability of reaching ``m.target`` within the horizon.

    Target states are absorbing and pinned at 1 for t < T. ``terminal``
    overrides selected entries of p_T. Ties go to the lowest action index.
    """
    c = m.compiled
    if not m.target:
        raise InvalidInputError("reachability needs a nonempty target set")
    T = m.horizon
    values = np.zeros((c.n, T + 1))
    values[:, T] = _terminal_vector(m, terminal, c.target_mask)
    choice = np.zeros((c.n, T), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        q = c.pad_rows(c.P @ values[:, t + 1], -np.inf)
        choice[:, t] = first_best(q)
        values[:, t] = q[np.arange(c.n), choice[:, t]]
        values[c.target_mask, t] = 1.0
        choice[c.target_mask, t] = 0
    return ValueTable(m.states, values), PolicyTable.deterministic(m, choice)


def value_iteration_expected_cost(m: Mdp, terminal: Mapping | None = None):
    """Risk-neutral backward induction for the cost (minimize) or reward (maximize) model.

    Target states stop accumulation: their value is pinned to the terminal
    value (0 unless overridden) at every stage.
    """
    c = m.compiled
    if m.mode == "reach":
        raise InvalidInputError("expected-cost value iteration needs state_cost or sa_reward")
    T = m.horizon
    values = np.zeros((c.n, T + 1))
    values[:, T] = _terminal_vector(m, terminal, np.zeros(c.n))
    choice = np.zeros((c.n, T), dtype=np.int64)
    rows = np.arange(c.n)
    for t in range(T - 1, -1, -1):
        cont = c.P @ values[:, t + 1]
        if m.mode == "cost":
            q = c.pad_rows(cont, np.inf)
            choice[:, t] = first_best(q, maximize=False)
            values[:, t] = c.cost + q[rows, choice[:, t]]
        else:
            q = c.pad_rows(c.reward[:, t] + cont, -np.inf)
            choice[:, t] = first_best(q)
            values[:, t] = q[rows, choice[:, t]]
        values[c.target_mask, t] = values[c.target_mask, T]
        choice[c.target_mask, t] = 0
    return ValueTable(m.states, values), PolicyTable.deterministic(m, choice)


def evaluate_policy_expected(m: Mdp, pol: PolicyTable, terminal: Mapping | None = None) -> ValueTable:
    """Risk-neutral value of a fixed policy under the model's own objective.

    In reachability mode this is the probability of reaching the target.
    """
    check_policy(m, pol)
    c = m.compiled
    T = m.horizon
    values = np.zeros((c.n, T + 1))
    if m.mode == "reach":
        values[:, T] = _terminal_vector(m, terminal, c.target_mask)
    else:
        values[:, T] = _terminal_vector(m, terminal, np.zeros(c.n))
    for t in range(T - 1, -1, -1):
        weights = np.concatenate([p[t] for p in pol.probs])
        q = c.P @ values[:, t + 1]
        if m.mode == "reward":
            q = q + c.reward[:, t]
        v = np.add.reduceat(weights * q, c.offsets[:-1])
        if m.mode == "cost":
            v = v + c.cost
        values[:, t] = v
        values[c.target_mask, t] = 1.0 if m.mode == "reach" else values[c.target_mask, T]
    return ValueTable(m.states, values)


@dataclass(frozen=True)
class SimulationReport:
    """Outcome of seeded rollouts.

    A run is successful when it reaches the target without ever entering a
    bad state; ``mean_cost_success`` averages over those runs only.
    """

    runs: int
    seed: int
    costs: np.ndarray
    crashed: np.ndarray
    reached: np.ndarray
    generator: str = "numpy.random.PCG64"

    @property
    def crash_count(self) -> int:
        return int(self.crashed.sum())

    @property
    def success_count(self) -> int:
        return int(self.reached.sum())

    @property
    def clean_success_count(self) -> int:
        return int((self.reached & ~self.crashed).sum())

    @property
    def mean_cost_success(self) -> float:
        ok = self.reached & ~self.crashed
        return float(self.costs[ok].mean()) if ok.any() else math.nan

    @property
    def reach_frequency(self) -> float:
        return self.success_count / self.runs


def simulate(m: Mdp, pol: PolicyTable, runs: int, seed: int) -> SimulationReport:
    """Sample ``runs`` trajectories of length ``m.horizon`` under ``pol``.

    Sampling uses ``numpy.random.Generator(PCG64(seed))``. At every time step
    two vectors of ``runs`` uniforms are drawn, one for the action and one for
    the successor, for all runs whether active or not. Each is mapped by
    inverse CDF: actions in ``Act(s)`` order, successors in state order.
    Runs stop accumulating once they enter the target. Costs follow the model
    (state cost at the current state, or the state-action reward; zero in
    reachability mode). Crashes are recorded on first entry to a bad state.
    """
    check_policy(m, pol)
    if runs < 1:
        raise InvalidInputError("runs must be at least 1")
    c = m.compiled
    rng = np.random.Generator(np.random.PCG64(seed))
    T = m.horizon

    width = max(1, int(np.diff(c.P.indptr).max()))
    succ = np.zeros((c.n_rows, width), dtype=np.int64)
    cum_succ = np.ones((c.n_rows, width))
    for r in range(c.n_rows):
        lo, hi = c.P.indptr[r], c.P.indptr[r + 1]
        k = hi - lo
        succ[r, :k] = c.P.indices[lo:hi]
        succ[r, k:] = c.P.indices[hi - 1]
        cum_succ[r, :k] = np.cumsum(c.P.data[lo:hi])
    cum_succ[np.arange(c.n_rows), np.diff(c.P.indptr) - 1] = np.inf

    state = np.full(runs, c.index[m.initial], dtype=np.int64)
    costs = np.zeros(runs)
    crashed = c.bad_mask[state].copy()
    reached = c.target_mask[state].copy()
    active = ~reached
    for t in range(T):
        u_act = rng.random(runs)
        u_succ = rng.random(runs)
        cum_act = np.full((c.n, c.max_actions), np.inf)
        for i, p in enumerate(pol.probs):
            k = p.shape[1]
            cum_act[i, : k - 1] = np.cumsum(p[t])[: k - 1]
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = state[idx]
        local = (u_act[idx, None] >= cum_act[s]).sum(axis=1)
        local = np.minimum(local, c.n_actions[s] - 1)
        row = c.offsets[s] + local
        if c.cost is not None:
            costs[idx] += c.cost[s]
        elif c.reward is not None:
            costs[idx] += c.reward[row, t]
        j = (u_succ[idx, None] >= cum_succ[row]).sum(axis=1)
        nxt = succ[row, np.minimum(j, width - 1)]
        state[idx] = nxt
        crashed[idx] |= c.bad_mask[nxt]
        hit = c.target_mask[nxt]
        reached[idx] |= hit
        active[idx[hit]] = False
    return SimulationReport(runs, seed, costs, crashed, reached)
