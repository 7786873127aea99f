"""Command-line entry point: ``cptmdp <command> [options]``.

Every command writes its tables (and, unless ``--no-plot``, PNG figures) into
``--out`` and prints a one-line JSON summary on stdout. Failures print a
one-line JSON error on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import modelio, scenarios
from .cpt import Identity, PosynomialApprox, PowerGain, PowerLoss, Prelec, TverskyKahneman, eval_weighting
from .errors import DomainError, InvalidInputError, ModelParseError, NumericalFailure
from .mdp import (
    evaluate_policy_expected,
    simulate,
    validate,
    value_iteration_expected_cost,
    value_iteration_reachability,
)
from .posy import Posynomial, default_basis, evaluation_grid, fit_polynomial_baseline, fit_posynomial, report_for
from .synthesis import SynthesisConfig, evaluate_policy_cpt, synthesize

EXIT_INPUT = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, EXIT_INPUT)


def _fail(kind, message, code, **extra):
    doc = {"error": kind, "message": str(message)}
    doc.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(doc), file=sys.stderr)
    sys.exit(code)


def _emit(doc):
    print(json.dumps(doc, default=float))


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"expected comma-separated numbers, got {text!r}") from exc


def _cell(text):
    vals = [int(x) for x in text.split(",")]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected ROW,COL")
    return tuple(vals)


# -- option groups -----------------------------------------------------------


def _add_weighting_opts(p, *, positional=False):
    g = p.add_argument_group("weighting")
    kinds = ["identity", "prelec", "tk", "file", "published"]
    if positional:
        g.add_argument("weighting", choices=kinds[:3] + ["published"], help="weighting function to fit")
    else:
        g.add_argument("--weighting", choices=kinds, help="overrides the model's weighting")
    g.add_argument("--weighting-file", help="posynomial JSON (output of fit-weighting) for --weighting file")
    g.add_argument("--beta", type=float, default=0.5, help="Prelec beta")
    g.add_argument("--eta", type=float, default=None, help="Prelec or Tversky-Kahneman curvature")
    g.add_argument("--basis", type=_floats, default=None, help="comma-separated exponents")
    g.add_argument("--normalize", action="store_true", help="rescale fitted coefficients to sum to 1")


def _add_utility_opts(p):
    g = p.add_argument_group("utility")
    g.add_argument("--utility", choices=["identity", "power", "power-loss"], help="overrides the model's utility")
    g.add_argument("--power", type=float, default=0.88, help="utility exponent m")
    g.add_argument("--loss-aversion", type=float, default=2.25, help="lambda for power-loss")


def _add_solver_opts(p):
    g = p.add_argument_group("solver")
    g.add_argument("--mode", choices=["reach", "cost", "reward"])
    g.add_argument("--tol", type=float, default=None, help="CCP stopping tolerance")
    g.add_argument("--max-iter", type=int, default=None, help="CCP rounds per start")
    g.add_argument("--starts", type=int, default=None, help="maximum vertex starts per stage")


def _add_io_opts(p, *, model=True):
    if model:
        p.add_argument("--model", required=True, help="JSON model document")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--no-plot", action="store_true", help="skip PNG figures")


# -- resolution of model + flags ---------------------------------------------


def _target_spec(args):
    if args.weighting == "prelec":
        return Prelec(args.beta, 0.9 if args.eta is None else args.eta)
    if args.weighting == "tk":
        return TverskyKahneman(0.61 if args.eta is None else args.eta)
    return Identity()


def _posynomial_from_file(path):
    doc = json.loads(Path(path).read_text())
    w = modelio.weighting_from_json(doc)
    if not isinstance(w, PosynomialApprox):
        raise InvalidInputError(f"{path} does not hold a posynomial weighting")
    return w.posynomial


def _resolve_weighting(args, model: modelio.ModelFile) -> Posynomial:
    kind = args.weighting
    if kind is None:
        w = model.weighting
        if w is None or isinstance(w, Identity):
            return Posynomial.identity()
        if isinstance(w, PosynomialApprox):
            return w.posynomial
        p, _ = fit_posynomial(w, args.basis, normalize=args.normalize)
        return p
    if kind == "identity":
        return Posynomial.identity()
    if kind == "published":
        return Posynomial.published()
    if kind == "file":
        if not args.weighting_file:
            raise InvalidInputError("--weighting file needs --weighting-file PATH")
        return _posynomial_from_file(args.weighting_file)
    p, _ = fit_posynomial(_target_spec(args), args.basis, normalize=args.normalize)
    return p


def _resolve_utility(args, model: modelio.ModelFile):
    if args.utility is None:
        return model.utility or Identity()
    if args.utility == "power":
        return PowerGain(args.power)
    if args.utility == "power-loss":
        return PowerLoss(args.loss_aversion, args.power)
    return Identity()


def _load(args) -> modelio.ModelFile:
    model = modelio.load_model(args.model)
    problems = validate(model.mdp)
    if problems:
        raise InvalidInputError("invalid model: " + "; ".join(problems))
    return model


def _config(args, model, *, keep_traces=False) -> SynthesisConfig:
    solver = model.solver
    mode = args.mode or model.mode or model.mdp.mode
    kw = {}
    for key, flag in (("tol", args.tol), ("max_iter", args.max_iter), ("max_vertex_starts", args.starts)):
        src = "starts" if key == "max_vertex_starts" else key
        if flag is not None:
            kw[key] = flag
        elif src in solver:
            kw[key] = type(SynthesisConfig.__dataclass_fields__[key].default)(solver[src])
    return SynthesisConfig(
        mode=mode,
        weighting=_resolve_weighting(args, model),
        utility=_resolve_utility(args, model),
        keep_traces=keep_traces,
        **kw,
    )


def _neutral(model, mode):
    m, terminal = model.mdp, model.terminal
    if mode == "reach":
        return value_iteration_reachability(m, terminal)
    return value_iteration_expected_cost(m, terminal)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------


def cmd_fit_weighting(args):
    out = _outdir(args)
    if args.weighting == "published":
        target = Prelec(args.beta, 0.9 if args.eta is None else args.eta)
        p = Posynomial.published()
        report = report_for(target, p, "published coefficients")
    else:
        target = _target_spec(args)
        p, report = fit_posynomial(target, args.basis or default_basis(), normalize=args.normalize)
    k = evaluation_grid()
    w = eval_weighting(target, k)
    approx = p(k)
    modelio.write_rows_csv(
        ["k", "target", "approx", "error"],
        ((float(a), float(b), float(c), float(c - b)) for a, b, c in zip(k, w, approx)),
        out / "weighting_curve.csv",
    )
    _, base = fit_polynomial_baseline(target, args.baseline_degree)
    doc = {"kind": "posynomial", "terms": p.to_json(), "report": report.as_dict()}
    (out / "posynomial.json").write_text(json.dumps(doc, indent=1) + "\n")
    if not args.no_plot:
        from .plotting import plot_weighting_fit

        series, _ = fit_polynomial_baseline(target, args.baseline_degree)
        plot_weighting_fit(
            k, w, approx, out / "weighting_fit.png",
            baselines={f"degree-{args.baseline_degree} polynomial": series(k)},
            title=report.target,
        )
    summary = report.as_dict()
    summary["baseline_degree"] = args.baseline_degree
    summary["baseline_max_abs_error"] = base.max_abs_error
    summary["terms"] = p.to_json()
    _emit(summary)


def cmd_synthesize(args):
    model = _load(args)
    cfg = _config(args, model, keep_traces=args.trace)
    out = _outdir(args)
    t0 = time.perf_counter()
    res = synthesize(model.mdp, cfg, model.terminal)
    elapsed = time.perf_counter() - t0
    modelio.write_policy_csv(res.policy, out / "policy.csv")
    modelio.write_values_csv(res.values, out / "values.csv")
    if args.trace:
        modelio.write_trace_csv(res.traces, out / "trace.csv")
    m = model.mdp
    if not args.no_plot and m.sa_reward is not None and len(m.states) == 5:
        _maybe_ride_plot(m, res.policy, out)
    _emit(
        {
            "mode": cfg.mode,
            "initial_state": m.initial,
            "initial_value": res.values.at(m.initial, 0),
            "initial_policy": {str(a): p for a, p in res.policy.get(m.initial, 0).items()},
            "seconds": round(elapsed, 3),
        }
    )


def _maybe_ride_plot(m, pol, out):
    """Ride-share models get the ride-probability table as a figure."""
    if set(m.states) != {0, 1, 2, 3, 4} or m.actions[0] != (scenarios.WAIT, scenarios.RIDE):
        return
    from .plotting import plot_ride_table

    table = [[pol.probs[s][t, 1] for s in range(4)] for t in range(m.horizon)]
    mult = scenarios.RideshareSpec.default().multipliers
    plot_ride_table(table, mult, out / "ride_table.png")


def cmd_evaluate(args):
    model = _load(args)
    cfg = _config(args, model)
    out = _outdir(args)
    m = model.mdp
    pol = modelio.read_policy_csv(m, args.policy)
    cpt = evaluate_policy_cpt(m, pol, cfg, model.terminal)
    expected = evaluate_policy_expected(m, pol, model.terminal)
    modelio.write_values_csv(cpt, out / "values_cpt.csv")
    modelio.write_values_csv(expected, out / "values_expected.csv")
    _emit(
        {
            "mode": cfg.mode,
            "initial_state": m.initial,
            "cpt_value": cpt.at(m.initial, 0),
            "expected_value": expected.at(m.initial, 0),
        }
    )


def cmd_simulate(args):
    model = _load(args)
    out = _outdir(args)
    m = model.mdp
    pol = modelio.read_policy_csv(m, args.policy)
    rep = simulate(m, pol, args.runs, args.seed)
    modelio.write_simulation_csv(rep, out / "simulation.csv")
    _emit(_sim_summary(rep))


def _sim_summary(rep):
    mean = rep.mean_cost_success
    return {
        "runs": rep.runs,
        "seed": rep.seed,
        "generator": rep.generator,
        "crash_count": rep.crash_count,
        "success_count": rep.success_count,
        "reach_probability": rep.reach_frequency,
        "mean_cost_success": None if np.isnan(mean) else mean,
    }


def cmd_compare(args):
    model = _load(args)
    cfg = _config(args, model)
    out = _outdir(args)
    m = model.mdp
    v_n, pol_n = _neutral(model, cfg.mode)
    res = synthesize(m, cfg, model.terminal)
    rows = []
    for name, pol, values in (("risk-neutral", pol_n, v_n), ("cpt", res.policy, res.values)):
        modelio.write_policy_csv(pol, out / f"policy_{name}.csv")
        rep = simulate(m, pol, args.runs, args.seed)
        modelio.write_simulation_csv(rep, out / f"simulation_{name}.csv")
        row = {"pipeline": name, **_sim_summary(rep), "initial_value": values.at(m.initial, 0)}
        rows.append(row)
    header = ["pipeline", "mean_cost_success", "crash_count", "reach_probability", "success_count", "runs", "seed", "initial_value"]
    modelio.write_rows_csv(header, ([r[h] for h in header] for r in rows), out / "compare.csv")
    if not args.no_plot:
        from .plotting import plot_compare

        plot_compare([{**r, "mean_cost_success": r["mean_cost_success"] or 0.0} for r in rows], out / "compare.png")
    same = all(np.array_equal(a, b) for a, b in zip(pol_n.probs, res.policy.probs))
    _emit({"mode": cfg.mode, "identical_policies": same, "rows": rows})


def cmd_make_model(args):
    kind = args.scenario
    terminal = None
    if kind == "example":
        m = scenarios.example_mdp(args.horizon or 1)
        if not args.no_terminal:
            terminal = dict(scenarios.EXAMPLE_TERMINAL)
    elif kind == "gridworld":
        kw = dict(
            slip=args.slip,
            obstacle_cost=args.obstacle_cost,
            horizon=args.horizon or 30,
            initial=args.start,
            goal=args.goal,
        )
        spec = scenarios.GridworldSpec.random(args.width, args.height, args.obstacles, args.layout_seed, **kw)
        m = scenarios.build_gridworld(spec)
    elif kind == "rideshare":
        spec = scenarios.RideshareSpec.default()
        if args.horizon:
            from dataclasses import replace

            spec = replace(spec, horizon=args.horizon)
        m = scenarios.build_rideshare(spec)
    else:
        rng = np.random.default_rng(args.layout_seed)
        m = scenarios.random_mdp(rng, args.states, args.actions, args.horizon or 5)
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    modelio.save_model(modelio.ModelFile(m, terminal=terminal), path)
    _emit({"scenario": kind, "path": str(path), "states": len(m.states), "horizon": m.horizon})


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cptmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit-weighting", help="fit a posynomial to a weighting function")
    _add_weighting_opts(p, positional=True)
    p.add_argument("--baseline-degree", type=int, default=7, help="degree of the polynomial baseline")
    _add_io_opts(p, model=False)
    p.set_defaults(func=cmd_fit_weighting)

    p = sub.add_parser("synthesize", help="synthesize a CPT policy")
    _add_io_opts(p)
    _add_solver_opts(p)
    _add_weighting_opts(p)
    _add_utility_opts(p)
    p.add_argument("--trace", action="store_true", help="also write the CCP objective trace")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="CPT and expected value of a policy file")
    _add_io_opts(p)
    p.add_argument("--policy", required=True, help="policy CSV")
    _add_solver_opts(p)
    _add_weighting_opts(p)
    _add_utility_opts(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="seeded rollouts of a policy file")
    _add_io_opts(p)
    p.add_argument("--policy", required=True, help="policy CSV")
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="risk-neutral against CPT on one model, shared seed")
    _add_io_opts(p)
    _add_solver_opts(p)
    _add_weighting_opts(p)
    _add_utility_opts(p)
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("make-model", help="write a scenario model document")
    p.add_argument("scenario", choices=["example", "gridworld", "rideshare", "random"])
    p.add_argument("--output", required=True, help="path of the JSON document")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--no-terminal", action="store_true", help="example: omit the terminal values 0.2/0.5/0.9")
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--height", type=int, default=10)
    p.add_argument("--obstacles", type=int, default=12)
    p.add_argument("--layout-seed", type=int, default=0, help="seed for obstacle placement or random models")
    p.add_argument("--slip", type=float, default=0.2)
    p.add_argument("--obstacle-cost", type=float, default=50.0)
    p.add_argument("--start", type=_cell, default=(0, 0), help="ROW,COL")
    p.add_argument("--goal", type=_cell, default=None, help="ROW,COL (default: far corner)")
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--actions", type=int, default=3)
    p.set_defaults(func=cmd_make_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ModelParseError as exc:
        _fail("ModelParseError", exc, EXIT_INPUT, line=exc.line, column=exc.column, field=exc.field)
    except (InvalidInputError, DomainError) as exc:
        _fail(type(exc).__name__, exc, EXIT_INPUT)
    except NumericalFailure as exc:
        _fail("NumericalFailure", exc, EXIT_NUMERIC)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(type(exc).__name__, exc, EXIT_INPUT)
    return 0


if __name__ == "__main__":
    sys.exit(main())
