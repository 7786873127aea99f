"""Benchmark models: the four-state example, gridworlds, ride sharing, random MDPs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import InvalidInputError
from .mdp import Mdp


def example_mdp(horizon: int = 1) -> Mdp:
    """Four states; from state 1, action a reaches 3 surely and b reaches 2 (0.6) or 4 (0.4)."""
    transitions = {
        (1, "a"): {3: 1.0},
        (1, "b"): {2: 0.6, 4: 0.4},
        (2, "stay"): {2: 1.0},
        (3, "stay"): {3: 1.0},
        (4, "stay"): {4: 1.0},
    }
    actions = {1: ("a", "b"), 2: ("stay",), 3: ("stay",), 4: ("stay",)}
    return Mdp((1, 2, 3, 4), 1, actions, transitions, horizon, target={4})


EXAMPLE_TERMINAL = {2: 0.2, 3: 0.5, 4: 0.9}

MOVES = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}


@dataclass(frozen=True)
class GridworldSpec:
    """A rectangular grid; cells are (row, col) and state ids are row * width + col."""

    width: int
    height: int
    obstacles: frozenset = frozenset()
    initial: tuple = (0, 0)
    goal: tuple | None = None
    slip: float = 0.2
    move_cost: float = 1.0
    obstacle_cost: float = 50.0
    horizon: int = 100

    def __post_init__(self):
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        object.__setattr__(self, "initial", tuple(self.initial))
        goal = (self.height - 1, self.width - 1) if self.goal is None else tuple(self.goal)
        object.__setattr__(self, "goal", goal)

    def problems(self) -> list[str]:
        out = []
        if self.width < 1 or self.height < 1:
            out.append("grid dimensions must be positive")
        if not 0.0 <= self.slip <= 1.0:
            out.append(f"slip {self.slip} outside [0, 1]")
        if self.move_cost <= 0 or self.obstacle_cost <= 0:
            out.append("costs must be positive")
        if self.horizon < 1:
            out.append("horizon must be positive")
        for name, cell in [("initial", self.initial), ("goal", self.goal), *[("obstacle", o) for o in self.obstacles]]:
            if not self.in_bounds(cell):
                out.append(f"{name} cell {cell} out of bounds")
        if self.initial in self.obstacles:
            out.append("initial cell is an obstacle")
        if self.goal in self.obstacles:
            out.append("goal cell is an obstacle")
        return out

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def state_id(self, cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, state_id: int) -> tuple:
        return divmod(state_id, self.width)

    @classmethod
    def random(cls, width, height, n_obstacles, seed, **kwargs) -> "GridworldSpec":
        """Obstacles drawn uniformly (seeded) from the cells other than start and goal."""
        base = cls(width, height, **kwargs)
        free = [
            (r, c)
            for r in range(height)
            for c in range(width)
            if (r, c) not in (base.initial, base.goal)
        ]
        if n_obstacles > len(free):
            raise InvalidInputError("more obstacles than free cells")
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(free), size=n_obstacles, replace=False)
        return replace(base, obstacles=frozenset(free[j] for j in sorted(pick)))


def _cell_row(spec: GridworldSpec, cell, action) -> dict:
    dr, dc = MOVES[action]
    intended = (cell[0] + dr, cell[1] + dc)
    row: dict = {}

    def add(target, p):
        if p > 0:
            sid = spec.state_id(target)
            row[sid] = row.get(sid, 0.0) + p

    add(intended if spec.in_bounds(intended) else cell, spec.slip)
    others = []
    for a, (r2, c2) in MOVES.items():
        if a == action:
            continue
        nb = (cell[0] + r2, cell[1] + c2)
        if spec.in_bounds(nb):
            others.append(nb)
    if others:
        for nb in others:
            add(nb, (1.0 - spec.slip) / len(others))
    else:
        add(cell, 1.0 - spec.slip)
    return row


def build_gridworld(spec: GridworldSpec) -> Mdp:
    """Four-action gridworld in the state-cost model.

    The intended move succeeds with probability ``slip``; the rest is spread
    evenly over the other in-bounds neighbours. Moves into a wall stay put.
    Obstacles cost ``obstacle_cost`` and are crash states but not absorbing.
    The goal is the absorbing, zero-cost target.
    """
    problems = spec.problems()
    if problems:
        raise InvalidInputError("invalid gridworld: " + "; ".join(problems))
    states = tuple(range(spec.width * spec.height))
    acts = tuple(MOVES)
    actions, transitions, cost = {}, {}, {}
    goal = spec.state_id(spec.goal)
    for sid in states:
        cell = spec.cell(sid)
        actions[sid] = acts
        for a in acts:
            transitions[(sid, a)] = {sid: 1.0} if sid == goal else _cell_row(spec, cell, a)
        if sid == goal:
            cost[sid] = 0.0
        elif cell in spec.obstacles:
            cost[sid] = spec.obstacle_cost
        else:
            cost[sid] = spec.move_cost
    return Mdp(
        states,
        spec.state_id(spec.initial),
        actions,
        transitions,
        spec.horizon,
        target={goal},
        state_cost=cost,
        bad={spec.state_id(o) for o in spec.obstacles},
    )


@dataclass(frozen=True)
class RideshareSpec:
    """Passenger model: states 0-3 are price levels, state 4 means a ride was taken.

    Waiting pays ``wait_reward``; riding at time t from state s pays
    ``satisfaction_0 - satisfaction_decay * t - multiplier[s] * fare`` with
    fare = base + per_mile * miles + per_minute * minutes.
    """

    multipliers: tuple = (1.0, 1.4, 1.8, 2.2)
    wait_matrix: tuple = ()
    wait_reward: float = 0.0
    satisfaction_0: float = 0.0
    satisfaction_decay: float = 0.0
    miles: float = 5.0
    minutes: float = 15.0
    price_base: float = 1.15
    price_mile: float = 1.02
    price_minute: float = 0.22
    horizon: int = 5

    @classmethod
    def default(cls) -> "RideshareSpec":
        doc = json.loads(resources.files("cptmdp.data").joinpath("rideshare_default.json").read_text())
        doc["multipliers"] = tuple(doc["multipliers"])
        doc["wait_matrix"] = tuple(tuple(r) for r in doc["wait_matrix"])
        return cls(**doc)

    @property
    def fare(self) -> float:
        return self.price_base + self.price_mile * self.miles + self.price_minute * self.minutes

    def ride_reward(self, state: int, t: int) -> float:
        return self.satisfaction_0 - self.satisfaction_decay * t - self.multipliers[state] * self.fare

    def problems(self) -> list[str]:
        out = []
        k = len(self.multipliers)
        if len(self.wait_matrix) != k or any(len(r) != k for r in self.wait_matrix):
            out.append(f"wait matrix must be {k}x{k}")
        else:
            for i, r in enumerate(self.wait_matrix):
                if any(p < 0 for p in r) or abs(sum(r) - 1.0) > 1e-9:
                    out.append(f"wait matrix row {i} is not a distribution")
        if self.horizon < 1:
            out.append("horizon must be positive")
        return out


RIDE_TAKEN = 4
WAIT, RIDE = 0, 1


def build_rideshare(spec: RideshareSpec | None = None) -> Mdp:
    spec = spec or RideshareSpec.default()
    problems = spec.problems()
    if problems:
        raise InvalidInputError("invalid ride-share spec: " + "; ".join(problems))
    k = len(spec.multipliers)
    done = k
    states = tuple(range(k + 1))
    actions = {s: (WAIT, RIDE) for s in states}
    transitions, reward = {}, {}
    T = spec.horizon
    for s in range(k):
        transitions[(s, WAIT)] = {j: float(p) for j, p in enumerate(spec.wait_matrix[s]) if p > 0}
        transitions[(s, RIDE)] = {done: 1.0}
        reward[(s, WAIT)] = tuple(spec.wait_reward for _ in range(T))
        reward[(s, RIDE)] = tuple(spec.ride_reward(s, t) for t in range(T))
    for a in (WAIT, RIDE):
        transitions[(done, a)] = {done: 1.0}
        reward[(done, a)] = (0.0,) * T
    return Mdp(states, 0, actions, transitions, T, target={done}, sa_reward=reward)


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    max_actions: int,
    horizon: int,
    *,
    max_successors: int = 4,
    target_fraction: float = 0.2,
) -> Mdp:
    """Random reachability MDP with sparse Dirichlet rows and a nonempty target."""
    states = tuple(range(n_states))
    actions, transitions = {}, {}
    for s in states:
        k = int(rng.integers(1, max_actions + 1))
        actions[s] = tuple(range(k))
        for a in range(k):
            n_succ = int(rng.integers(1, min(n_states, max_successors) + 1))
            succ = rng.choice(n_states, size=n_succ, replace=False)
            p = rng.dirichlet(np.ones(n_succ))
            p[-1] = 1.0 - p[:-1].sum()
            transitions[(s, a)] = {int(j): float(x) for j, x in zip(succ, p)}
    n_target = max(1, int(round(target_fraction * n_states)))
    target = {int(j) for j in rng.choice(n_states, size=n_target, replace=False)}
    initial = int(rng.integers(n_states))
    return Mdp(states, initial, actions, transitions, horizon, target=target)
