"""JSON model documents and CSV result tables.

Model documents key states and actions by their string form; ids are restored
from the ``states`` and ``actions`` lists, so integer ids survive a round
trip. Probabilities are written as decimal strings (``repr`` of the float),
which reproduces the binary value exactly on load.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cpt import Identity, PosynomialApprox, PowerGain, PowerLoss, Prelec, TverskyKahneman
from .errors import InvalidInputError, ModelParseError
from .mdp import Mdp, PolicyTable, SimulationReport, ValueTable
from .posy import Posynomial

FORMAT_VERSION = 1


@dataclass
class ModelFile:
    mdp: Mdp
    weighting: object | None = None
    utility: object | None = None
    solver: dict = field(default_factory=dict)
    mode: str | None = None
    terminal: dict | None = None


def _num(x) -> str:
    return repr(float(x))


def weighting_to_json(w) -> dict:
    if isinstance(w, Identity):
        return {"kind": "identity"}
    if isinstance(w, Prelec):
        return {"kind": "prelec", "params": {"beta": _num(w.beta), "eta": _num(w.eta)}}
    if isinstance(w, TverskyKahneman):
        return {"kind": "tk", "params": {"eta": _num(w.eta)}}
    if isinstance(w, PosynomialApprox):
        return {"kind": "posynomial", "terms": w.posynomial.to_json()}
    if isinstance(w, Posynomial):
        return {"kind": "posynomial", "terms": w.to_json()}
    raise InvalidInputError(f"cannot serialize weighting {w!r}")


def weighting_from_json(doc, where="weighting"):
    kind = _get(doc, "kind", where)
    params = doc.get("params", {})
    try:
        if kind == "identity":
            return Identity()
        if kind == "prelec":
            return Prelec(float(params.get("beta", 0.5)), float(params.get("eta", 0.9)))
        if kind == "tk":
            return TverskyKahneman(float(params.get("eta", 0.61)))
        if kind == "posynomial":
            return PosynomialApprox(Posynomial.from_json(_get(doc, "terms", where), f"{where}.terms"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelParseError):
            raise
        raise ModelParseError(str(exc), field=where) from exc
    raise ModelParseError(f"unknown weighting kind {kind!r}", field=f"{where}.kind")


def utility_to_json(u) -> dict:
    if isinstance(u, Identity):
        return {"kind": "identity"}
    if isinstance(u, PowerGain):
        return {"kind": "power", "params": {"m": _num(u.m)}}
    if isinstance(u, PowerLoss):
        return {"kind": "power-loss", "params": {"lam": _num(u.lam), "m": _num(u.m)}}
    raise InvalidInputError(f"cannot serialize utility {u!r}")


def utility_from_json(doc, where="utility"):
    kind = _get(doc, "kind", where)
    params = doc.get("params", {})
    try:
        if kind == "identity":
            return Identity()
        if kind == "power":
            return PowerGain(float(params.get("m", 0.88)))
        if kind == "power-loss":
            return PowerLoss(float(params.get("lam", 2.25)), float(params.get("m", 0.88)))
    except (TypeError, ValueError) as exc:
        raise ModelParseError(str(exc), field=where) from exc
    raise ModelParseError(f"unknown utility kind {kind!r}", field=f"{where}.kind")


def mdp_to_json(m: Mdp) -> dict:
    doc = {
        "format": FORMAT_VERSION,
        "states": list(m.states),
        "initial": m.initial,
        "horizon": m.horizon,
        "actions": {str(s): list(m.actions[s]) for s in m.states},
        "transitions": {
            str(s): {
                str(a): {str(s2): _num(p) for s2, p in m.transitions[(s, a)].items()}
                for a in m.actions[s]
            }
            for s in m.states
        },
        "target": [s for s in m.states if s in m.target],
    }
    if m.bad:
        doc["bad"] = [s for s in m.states if s in m.bad]
    if m.state_cost is not None:
        doc["state_cost"] = {str(s): _num(m.state_cost[s]) for s in m.states}
    if m.sa_reward is not None:
        doc["sa_reward"] = {
            str(s): {str(a): [_num(r) for r in m.sa_reward[(s, a)]] for a in m.actions[s]}
            for s in m.states
        }
    return doc


def _get(doc, key, where):
    if not isinstance(doc, dict):
        raise ModelParseError("expected an object", field=where)
    if key not in doc:
        raise ModelParseError(f"missing key {key!r}", field=where)
    return doc[key]


def _float(x, where) -> float:
    if isinstance(x, bool):
        raise ModelParseError(f"expected a number, got {x!r}", field=where)
    try:
        return float(x)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"expected a number, got {x!r}", field=where) from exc


def _lookup(table: dict, key: str, where: str):
    if key not in table:
        raise ModelParseError(f"unknown id {key!r}", field=where)
    return table[key]


def mdp_from_json(doc) -> Mdp:
    states = _get(doc, "states", "$")
    if not isinstance(states, list):
        raise ModelParseError("states must be a list", field="states")
    by_name = {str(s): s for s in states}
    if len(by_name) != len(states):
        raise ModelParseError("state ids must have distinct string forms", field="states")
    horizon = _get(doc, "horizon", "$")
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ModelParseError("horizon must be an integer", field="horizon")
    raw_actions = _get(doc, "actions", "$")
    actions = {}
    for key, acts in raw_actions.items():
        s = _lookup(by_name, key, f"actions.{key}")
        if not isinstance(acts, list):
            raise ModelParseError("action list expected", field=f"actions.{key}")
        actions[s] = tuple(acts)
    transitions = {}
    for key, rows in _get(doc, "transitions", "$").items():
        s = _lookup(by_name, key, f"transitions.{key}")
        act_names = {str(a): a for a in actions.get(s, ())}
        for akey, row in rows.items():
            a = _lookup(act_names, akey, f"transitions.{key}.{akey}")
            transitions[(s, a)] = {
                _lookup(by_name, k2, f"transitions.{key}.{akey}.{k2}"): _float(p, f"transitions.{key}.{akey}.{k2}")
                for k2, p in row.items()
            }
    initial = _get(doc, "initial", "$")
    if str(initial) in by_name:
        initial = by_name[str(initial)]
    target = {_lookup(by_name, str(s), "target") for s in doc.get("target", [])}
    bad = {_lookup(by_name, str(s), "bad") for s in doc.get("bad", [])}
    state_cost = None
    if doc.get("state_cost") is not None:
        state_cost = {
            _lookup(by_name, k, f"state_cost.{k}"): _float(v, f"state_cost.{k}")
            for k, v in doc["state_cost"].items()
        }
    sa_reward = None
    if doc.get("sa_reward") is not None:
        sa_reward = {}
        for key, rows in doc["sa_reward"].items():
            s = _lookup(by_name, key, f"sa_reward.{key}")
            act_names = {str(a): a for a in actions.get(s, ())}
            for akey, r in rows.items():
                a = _lookup(act_names, akey, f"sa_reward.{key}.{akey}")
                where = f"sa_reward.{key}.{akey}"
                if isinstance(r, list):
                    sa_reward[(s, a)] = tuple(_float(x, where) for x in r)
                else:
                    sa_reward[(s, a)] = tuple(_float(r, where) for _ in range(horizon))
    return Mdp(
        tuple(states),
        initial,
        actions,
        transitions,
        horizon,
        target=target,
        state_cost=state_cost,
        sa_reward=sa_reward,
        bad=bad,
    )


def model_to_json(model: ModelFile) -> dict:
    doc = mdp_to_json(model.mdp)
    if model.mode is not None:
        doc["mode"] = model.mode
    if model.weighting is not None:
        doc["weighting"] = weighting_to_json(model.weighting)
    if model.utility is not None:
        doc["utility"] = utility_to_json(model.utility)
    if model.solver:
        doc["solver"] = dict(model.solver)
    if model.terminal is not None:
        doc["terminal"] = {str(s): _num(v) for s, v in model.terminal.items()}
    return doc


def parse_model(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict):
        raise ModelParseError("model document must be a JSON object", line=1, column=1)
    m = mdp_from_json(doc)
    by_name = {str(s): s for s in m.states}
    terminal = None
    if doc.get("terminal") is not None:
        terminal = {
            _lookup(by_name, k, f"terminal.{k}"): _float(v, f"terminal.{k}") for k, v in doc["terminal"].items()
        }
    mode = doc.get("mode")
    if mode is not None and mode not in ("reach", "cost", "reward"):
        raise ModelParseError(f"unknown mode {mode!r}", field="mode")
    return ModelFile(
        mdp=m,
        weighting=weighting_from_json(doc["weighting"]) if "weighting" in doc else None,
        utility=utility_from_json(doc["utility"]) if "utility" in doc else None,
        solver=dict(doc.get("solver", {})),
        mode=mode,
        terminal=terminal,
    )


def load_model(path) -> ModelFile:
    return parse_model(Path(path).read_text())


def save_model(model, path) -> None:
    """Write an :class:`Mdp` or :class:`ModelFile` as a JSON model document."""
    if isinstance(model, Mdp):
        model = ModelFile(model)
    Path(path).write_text(json.dumps(model_to_json(model), indent=1) + "\n")


def _writer(path):
    f = open(path, "w", newline="")
    return f, csv.writer(f, lineterminator="\n")


def write_policy_csv(pol: PolicyTable, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["state", "t", "action", "prob"])
        for i, s in enumerate(pol.states):
            for t in range(pol.horizon):
                for j, a in enumerate(pol.actions[s]):
                    w.writerow([s, t, a, repr(float(pol.probs[i][t, j]))])


def read_policy_csv(m: Mdp, path) -> PolicyTable:
    by_name = {str(s): i for i, s in enumerate(m.states)}
    probs = [np.zeros((m.horizon, len(m.actions[s]))) for s in m.states]
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.DictReader(f), start=2):
            try:
                i = by_name[row["state"]]
                s = m.states[i]
                j = [str(a) for a in m.actions[s]].index(row["action"])
                probs[i][int(row["t"]), j] = float(row["prob"])
            except (KeyError, ValueError, IndexError) as exc:
                raise ModelParseError(f"bad policy row: {exc}", line=lineno) from exc
    return PolicyTable.from_arrays(m, probs)


def write_values_csv(values: ValueTable, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["state", "t", "value"])
        for i, s in enumerate(values.states):
            for t in range(values.values.shape[1]):
                w.writerow([s, t, repr(float(values.values[i, t]))])


def write_trace_csv(traces: dict, path) -> None:
    """One row per CCP round of the winning start of every stage solve."""
    f, w = _writer(path)
    with f:
        w.writerow(["state", "t", "round", "objective"])
        for (s, t), tr in traces.items():
            for start, rnd, obj in zip(tr.start, tr.round, tr.objective):
                if start == tr.best_start:
                    w.writerow([s, t, rnd, repr(obj)])


def write_simulation_csv(rep: SimulationReport, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["run", "cost", "crashed", "reached"])
        for k in range(rep.runs):
            w.writerow([k, repr(float(rep.costs[k])), int(rep.crashed[k]), int(rep.reached[k])])


def write_rows_csv(header, rows, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])
