"""Backward induction under a CPT measure, one CCP stage solve per (state, time)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .ccp import CcpTrace, build_stage_objective, ccp_solve_stage, default_starts
from .cpt import Identity, UtilitySpec, eval_utility
from .errors import InvalidInputError, NumericalFailure
from .mdp import Mdp, PolicyTable, ValueTable, check_policy
from .posy import Posynomial

MODES = ("reach", "cost", "reward")


@dataclass(frozen=True)
class SynthesisConfig:
    """How each stage is posed and solved.

    ``mode`` is ``reach`` (maximize weighted reachability), ``cost`` (minimize
    the weighted state cost, C(s) added to every successor value) or
    ``reward`` (maximize, identity utility only, reward enters affinely).
    """

    mode: str = "reach"
    weighting: Posynomial = field(default_factory=Posynomial.identity)
    utility: UtilitySpec = Identity()
    tol: float = 1e-6
    max_iter: int = 50
    inner_tol: float = 1e-8
    inner_max_iter: int = 500
    max_vertex_starts: int = 8
    warm_start: bool = True
    keep_traces: bool = False


class SynthesisResult(NamedTuple):
    policy: PolicyTable
    values: ValueTable
    traces: dict


def check_config(m: Mdp, cfg: SynthesisConfig) -> None:
    if cfg.mode not in MODES:
        raise InvalidInputError(f"unknown synthesis mode {cfg.mode!r}")
    if cfg.mode == "reach" and not m.target:
        raise InvalidInputError("reachability synthesis needs a nonempty target set")
    if cfg.mode == "cost" and m.state_cost is None:
        raise InvalidInputError("cost mode needs state costs on the model")
    if cfg.mode == "reward":
        if m.sa_reward is None:
            raise InvalidInputError("reward mode needs state-action rewards on the model")
        if not isinstance(cfg.utility, Identity):
            raise InvalidInputError("reward mode is only tractable with the identity utility")


def _initial_values(m: Mdp, cfg: SynthesisConfig, terminal: Mapping | None) -> np.ndarray:
    c = m.compiled
    values = np.zeros((c.n, m.horizon + 1))
    if cfg.mode == "reach":
        values[:, -1] = c.target_mask.astype(float)
    if terminal is not None:
        for s, v in terminal.items():
            values[c.index[s], -1] = float(v)
    return values


def _pinned_value(m: Mdp, cfg: SynthesisConfig, values: np.ndarray, i: int) -> float:
    if cfg.mode == "reach":
        return float(eval_utility(cfg.utility, 1.0))
    return float(values[i, -1])


def stage_problem(m: Mdp, cfg: SynthesisConfig, state, t: int, next_values: np.ndarray):
    """The DC stage problem for ``state`` at time ``t`` under ``cfg``."""
    c = m.compiled
    i = c.index[state]
    if cfg.mode == "reach":
        return build_stage_objective(state, next_values, m, cfg.weighting, cfg.utility)
    if cfg.mode == "cost":
        return build_stage_objective(
            state, next_values, m, cfg.weighting, cfg.utility, offset=c.cost[i], sense=-1
        )
    rewards = c.reward[c.rows_of(i), t]
    return build_stage_objective(
        state, next_values, m, cfg.weighting, cfg.utility, linear=cfg.weighting.total * rewards
    )


def _with_context(exc, state, t):
    return type(exc)(f"stage (state {state!r}, t={t}): {exc}")


def synthesize(m: Mdp, cfg: SynthesisConfig, terminal: Mapping | None = None) -> SynthesisResult:
    """Locally optimal time-indexed policy for the CPT measure in ``cfg``.

    Returns ``(policy, values, traces)``; traces are keyed by (state, t) and
    only kept when ``cfg.keep_traces`` is set. ``terminal`` overrides entries
    of the value at time T.
    """
    check_config(m, cfg)
    c = m.compiled
    T = m.horizon
    values = _initial_values(m, cfg, terminal)
    probs = [np.zeros((T, int(k))) for k in c.n_actions]
    previous: list[np.ndarray | None] = [None] * c.n
    traces = {}
    for t in range(T - 1, -1, -1):
        nxt = values[:, t + 1]
        for i, s in enumerate(m.states):
            if c.target_mask[i]:
                values[i, t] = _pinned_value(m, cfg, values, i)
                probs[i][t, 0] = 1.0
                continue
            try:
                prob = stage_problem(m, cfg, s, t, nxt)
                starts = default_starts(prob.n_actions, cfg.max_vertex_starts)
                if cfg.warm_start and previous[i] is not None:
                    starts.append(previous[i])
                sigma, f, trace = ccp_solve_stage(
                    prob,
                    starts,
                    cfg.tol,
                    cfg.max_iter,
                    inner_tol=cfg.inner_tol,
                    inner_max_iter=cfg.inner_max_iter,
                )
            except (InvalidInputError, NumericalFailure) as exc:
                raise _with_context(exc, s, t) from exc
            sigma = np.maximum(sigma, 0.0)
            sigma /= sigma.sum()
            probs[i][t] = sigma
            previous[i] = sigma
            values[i, t] = f
            if cfg.keep_traces:
                traces[(s, t)] = trace
    return SynthesisResult(PolicyTable.from_arrays(m, probs), ValueTable(m.states, values), traces)


def evaluate_policy_cpt(
    m: Mdp, pol: PolicyTable, cfg: SynthesisConfig, terminal: Mapping | None = None
) -> ValueTable:
    """Stagewise CPT value of a fixed policy, using the same stage objectives."""
    check_config(m, cfg)
    check_policy(m, pol)
    c = m.compiled
    values = _initial_values(m, cfg, terminal)
    for t in range(m.horizon - 1, -1, -1):
        nxt = values[:, t + 1]
        for i, s in enumerate(m.states):
            if c.target_mask[i]:
                values[i, t] = _pinned_value(m, cfg, values, i)
                continue
            prob = stage_problem(m, cfg, s, t, nxt)
            values[i, t] = prob.value(pol.probs[i][t])
    return ValueTable(m.states, values)
