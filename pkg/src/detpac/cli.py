"""Command line: detpac {gen,lb,flow,run,bench,gaps}."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .flow import demand_from_keys, extract_policy_cover, min_flow
from .harness import ExperimentConfig, load_instance, run_batch, write_csv
from .instances import ALIASES, KINDS, generate, theorem1_lower_bound
from .learner import DEFAULT_BUDGET, RULES, BudgetExceeded, run_eprl
from .mdp import compute_gaps


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind, self.code = kind, code


def _emit(obj, out: str | None) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


def cmd_gen(args) -> None:
    params = {}
    for name in ("S", "A", "H", "gap", "branching", "density", "seed", "m", "best"):
        val = getattr(args, name)
        if val is not None:
            params[name] = val
    if args.means is not None:
        params["means"] = [float(x) for x in args.means.split(",")]
    if args.reward_kind == "gaussian":
        params["reward_kind"] = "gaussian"
        params["sigma2"] = args.sigma2
    try:
        mdp = generate(args.kind, **params)
    except (TypeError, KeyError) as e:
        raise CliError("validation", f"bad parameters for {args.kind}: {e}", 2) from None
    _emit(mdp.to_dict(), args.out)


def cmd_lb(args) -> None:
    mdp = load_instance(args.instance)
    reports = {}
    for s2 in (1.0, 0.25):
        rep = theorem1_lower_bound(mdp, args.eps, args.delta, s2)
        reports[f"sigma2={s2:g}"] = rep.to_dict(mdp) | {"sandwich_holds": rep.sandwich_holds()}
    _emit(reports, args.out)


def cmd_flow(args) -> None:
    mdp = load_instance(args.instance)
    if args.demand is None:
        c = np.ones(mdp.n_arcs)
    else:
        c = demand_from_keys(mdp, json.loads(Path(args.demand).read_text()))
    flow, cut = min_flow(mdp, c)
    out = {"phi_star": flow.value,
           "cut_value": float(c[cut.forward_arcs(mdp)].sum()),
           "flow": {mdp.arc_key(a): float(f) for a, f in enumerate(flow.values)},
           "cut": [f"{mdp.node_stage[u] + 1}/{mdp.node_state[u]}" for u in np.flatnonzero(cut.nodes)],
           "cut_arcs": [mdp.arc_key(a) for a in cut.forward_arcs(mdp)]}
    if flow.is_integral():
        out["cover"] = [p.to_dict(mdp) for p in extract_policy_cover(mdp, flow)]
    _emit(out, args.out)


def cmd_run(args) -> None:
    mdp = load_instance(args.instance)
    try:
        res = run_eprl(mdp, args.rule, args.eps, args.delta, args.seed, args.budget,
                       args.elim_period)
    except BudgetExceeded as e:
        _emit(e.result.to_dict(mdp), args.out)
        raise CliError("budget-exceeded", str(e), 4) from None
    _emit(res.to_dict(mdp), args.out)


def cmd_bench(args) -> None:
    rules = RULES if args.rule == "all" else (args.rule,)
    config = ExperimentConfig(args.instance, rules, args.eps, args.delta, args.trials,
                              args.seed, args.budget, args.elim_period, args.out, args.summary)
    try:
        config.validate()
    except ValueError as e:
        raise CliError("validation", str(e), 2) from None
    results, summaries = run_batch(config)
    rows = [r for rule in rules for r in results[rule]]
    if args.out is None or args.out == "-":
        write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    summary = [s.to_dict() for s in summaries]
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2) + "\n")
    else:
        sys.stderr.write(json.dumps(summary) + "\n")


def cmd_gaps(args) -> None:
    mdp = load_instance(args.instance)
    g = compute_gaps(mdp, args.eps)
    _emit({"optimal_value": g.optimal_value,
           "unique_optimal_trajectory": g.unique_optimal,
           "min_gap": g.min_gap,
           "stage_min_gap": [_finite(x) for x in g.stage_min_gap],
           "arcs": {mdp.arc_key(a): {"value_gap": float(g.value_gap[a]),
                                     "return_gap": float(g.return_gap[a]),
                                     "normalized_return_gap": float(g.normalized_return_gap[a])}
                    for a in range(mdp.n_arcs)}}, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="detpac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--kind", choices=KINDS + tuple(ALIASES), required=True)
    g.add_argument("--S", type=int)
    g.add_argument("--A", type=int)
    g.add_argument("--H", type=int)
    g.add_argument("--gap", type=float)
    g.add_argument("--best", type=float)
    g.add_argument("--branching", type=int)
    g.add_argument("--density", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--means", help="comma separated arm means (bandit)")
    g.add_argument("--reward-kind", choices=("bernoulli", "gaussian"), default="bernoulli")
    g.add_argument("--sigma2", type=float, default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    def common(sp, learner=True):
        sp.add_argument("instance", help="instance JSON path or gen:<kind>:k=v,...")
        sp.add_argument("--eps", type=float, default=0.1)
        sp.add_argument("--delta", type=float, default=0.1)
        sp.add_argument("--out")
        if learner:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
            sp.add_argument("--elim-period", type=int, default=1)

    s = sub.add_parser("lb", help="instance lower bounds")
    common(s, learner=False)
    s.set_defaults(func=cmd_lb)

    s = sub.add_parser("flow", help="minimum flow, maximum cut and policy cover")
    s.add_argument("instance")
    s.add_argument("--demand", help='JSON map "h/state/action" -> demand (default: all ones)')
    s.add_argument("--out")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("run", help="one learner run")
    common(s)
    s.add_argument("--rule", choices=RULES, default="max-diameter")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", help="seeded batch of runs to CSV")
    common(s)
    s.add_argument("--rule", choices=RULES + ("all",), default="all")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--summary", help="write the batch summaries as JSON here")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gaps", help="gap table of an instance")
    s.add_argument("instance")
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gaps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except CliError as e:
        err, code = {"error": e.kind, "message": str(e)}, e.code
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        err, code = {"error": "validation", "message": str(e)}, 2
    except OSError as e:
        err, code = {"error": "io", "message": str(e)}, 3
    sys.stderr.write(json.dumps(err) + "\n")
    return code

if __name__ == "__main__":
    sys.exit(main())
