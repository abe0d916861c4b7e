"""Command-line entry point: ``dcnn <subcommand> [options]``.

Subcommands
-----------
node-class      multi-trial node classification (thirds protocol by default)
graph-class     multi-trial graph classification
learning-curve  one report per training fraction (10%/10% validation/test)
hop-sweep       one report per diffusion depth
stats           Welch / one-sample t tests on saved reports

Failures exit with status 1 and print a JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .training import TrainConfig


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _common(p, hops_type=int, hops_default=2):
    p.add_argument("--dataset", required=True,
                   help="dataset directory or synthetic:<kind>:<n>[:noise=<s>]")
    p.add_argument("--model", default="dcnn", choices=ex.MODELS)
    p.add_argument("--hops", type=hops_type, default=hops_default)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for report files")
    p.add_argument("--config", help="JSON file of TrainConfig overrides")


def build_parser():
    parser = argparse.ArgumentParser(prog="dcnn", description=__doc__.split("\n")[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("node-class", help="node classification trials")
    _common(p)
    p.add_argument("--protocol", default="thirds", choices=("thirds", "learning-curve"))
    p.add_argument("--fraction", type=float, default=1.0)

    p = sub.add_parser("graph-class", help="graph classification trials")
    _common(p)
    p.add_argument("--protocol", default="thirds", choices=("thirds", "learning-curve"))
    p.add_argument("--fraction", type=float, default=1.0)

    p = sub.add_parser("learning-curve", help="accuracy versus training fraction")
    _common(p)
    p.add_argument("--fractions", type=_float_list,
                   default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])

    p = sub.add_parser("hop-sweep", help="accuracy versus diffusion depth")
    _common(p, hops_type=_int_list, hops_default=[0, 1, 2, 3, 4, 5])

    p = sub.add_parser("stats", help="t tests on saved report files")
    p.add_argument("--a", required=True, help="report JSON of the candidate model")
    p.add_argument("--b", help="report JSON of the comparison model (Welch test)")
    p.add_argument("--mu0", type=float, help="reference value (one-sample test)")
    p.add_argument("--metric", default="accuracy", choices=ex.METRICS)
    p.add_argument("--two-tailed", action="store_true")
    p.add_argument("--out", help="write the result JSON here as well")
    return parser


def _experiment_config(args, **extra):
    train = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    return ex.ExperimentConfig(dataset=args.dataset, model=args.model,
                               trials=args.trials, seed=args.seed, train=train,
                               out=args.out, **extra)


def _emit(text, out, filename):
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / filename).write_text(text)


def _summarize(report):
    return {m: {"mean": report.mean(m), "ci95": report.ci(m)} for m in ex.METRICS}


def run(args):
    if args.command in ("node-class", "graph-class"):
        config = _experiment_config(args, hops=args.hops, protocol=args.protocol,
                                    fraction=args.fraction)
        runner = ex.run_node_trials if args.command == "node-class" else ex.run_graph_trials
        report = runner(config)
        if args.out:
            ex.write_report(report, args.out)
        return {"trials": report.trials, "failed": len(report.failed),
                **_summarize(report)}

    if args.command == "learning-curve":
        config = _experiment_config(args, hops=args.hops)
        rows = ex.run_learning_curve(config, args.fractions)
        if args.out:
            for frac, report in rows:
                ex.write_report(report, args.out, f"fraction_{frac:g}")
            _emit(ex.summary_csv(rows, "fraction"), args.out, "learning_curve.csv")
        return {f"{frac:g}": _summarize(r) for frac, r in rows}

    if args.command == "hop-sweep":
        config = _experiment_config(args)
        rows = ex.hop_sweep(config, args.hops)
        if args.out:
            for h, report in rows:
                ex.write_report(report, args.out, f"hops_{h}")
            _emit(ex.wide_csv(rows, "hops"), args.out, "hop_sweep.csv")
        return {str(h): _summarize(r) for h, r in rows}

    if args.command == "stats":
        a = ex.TrialReport.load(args.a).values(args.metric)
        one_tailed = not args.two_tailed
        if args.b is not None:
            b = ex.TrialReport.load(args.b).values(args.metric)
            res = ex.welch_t_test(a, b, one_tailed)
            kind = "welch"
        elif args.mu0 is not None:
            res = ex.one_sample_t_test(a, args.mu0, one_tailed)
            kind = "one-sample"
        else:
            raise ValueError("stats needs --b or --mu0")
        result = {"test": kind, "metric": args.metric, "one_tailed": one_tailed,
                  "statistic": res.statistic, "df": res.df, "pvalue": res.pvalue}
        _emit(json.dumps(result, indent=2, sort_keys=True) + "\n", args.out, "stats.json")
        return result
    raise ValueError(f"unknown command {args.command}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc),
                  "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, allow_nan=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
