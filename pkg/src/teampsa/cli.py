"""Command-line front end: ``teampsa {simulate,montecarlo,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric abort,
3 I/O error. ``PSA_LOG`` sets the log level (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import bundled_scenario, config_digest, parse_config
from .errors import ConfigError, DomainError, TrialError
from .harness import CRITERIA, aggregate, rank_models, run_montecarlo, run_trial
from .output import dump_json, read_trial_csv, render_csv, sha256_file
from .simulate import SAMPLER_VERSION

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("teampsa")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="teampsa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one trial and write its per-step CSV")
    s.add_argument("--config", required=True, metavar="PATH")
    s.add_argument("--trial", type=int, default=0, metavar="N")
    s.add_argument("--model", metavar="NAME", help="default: every model in the library")
    s.add_argument("--seed", type=int, metavar="N", help="override the master seed")
    s.add_argument("--out", metavar="PATH", help="CSV file (default: stdout)")

    m = sub.add_parser("montecarlo", help="run all trials and write aggregate outputs")
    m.add_argument("--config", required=True, metavar="PATH")
    m.add_argument("--out", required=True, metavar="DIR")
    m.add_argument("--threads", type=int, default=1, metavar="N")
    m.add_argument("--seed", type=int, metavar="N", help="override the master seed")

    r = sub.add_parser("report", help="re-aggregate per-trial outputs and rank models")
    r.add_argument("--in", dest="indir", required=True, metavar="DIR")
    r.add_argument("--criterion", choices=sorted(CRITERIA), default="d_mpb_bar")
    r.add_argument("--out", metavar="PATH", help="JSON file (default: stdout)")
    return p


def _load_config(args):
    path = Path(args.config)
    if not path.exists() and not path.parent.parts:
        bundled = bundled_scenario(path.name)
        if bundled.is_file():
            path = bundled
    config = parse_config(path)
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        config = replace(config, seed=args.seed)
    return config


def cmd_simulate(args):
    config = _load_config(args)
    if args.model is not None and args.model not in config.library.names:
        raise UsageError(f"unknown model {args.model!r}; "
                         f"available: {config.library.names}")
    if args.trial < 0:
        raise UsageError("--trial must be >= 0")
    models = None if args.model is None else [args.model]
    result = run_trial(config, args.trial, models=models)
    text = render_csv(config.n_agents, result.all_curves(), trial=args.trial)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _rankings(report):
    out = {}
    for crit in sorted(CRITERIA):
        rk = rank_models(report, crit)
        out[crit] = {"order": rk.order, "scores": rk.scores, "ties": rk.ties}
    return out


def build_summary(config, report):
    return {
        "tool": "teampsa",
        "version": __version__,
        "sampler": SAMPLER_VERSION,
        "config_digest": report.config_digest,
        "seed": int(config.seed),
        "models": list(report.models),
        "true_model": config.library.true_model.name,
        "n_agents": report.n_agents,
        "n_hor": report.n_hor,
        "n_mc": int(config.n_mc),
        "n_trials": report.n_trials,
        "burn_in": report.burn_in,
        "failed_trials": report.failed,
        "metrics": report.summary(),
        "rankings": _rankings(report) if len(report.models) > 1 else {},
    }


def cmd_montecarlo(args):
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    config = _load_config(args)
    started = datetime.now(timezone.utc).isoformat()
    report = run_montecarlo(config, threads=args.threads, keep_trials=True)

    out = Path(args.out)
    trials_dir = out / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for tid in sorted(report.trial_curves):
        path = trials_dir / f"trial_{tid:04d}.csv"
        path.write_text(render_csv(config.n_agents, report.trial_curves[tid], trial=tid))
        written.append(path)
    agg = out / "aggregate.csv"
    agg.write_text(render_csv(config.n_agents, report.curves))
    summary = out / "summary.json"
    summary.write_text(dump_json(build_summary(config, report)))
    written = [agg, summary] + written

    manifest = {
        "tool": "teampsa",
        "version": __version__,
        "config_digest": report.config_digest,
        "config_path": str(args.config),
        "seed": int(config.seed),
        "threads": args.threads,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "files": {str(p.relative_to(out)): sha256_file(p) for p in written},
    }
    (out / "manifest.json").write_text(dump_json(manifest))
    log.info("wrote %d files to %s", len(written) + 1, out)
    if report.failed:
        for f in report.failed:
            print(f"numeric abort: {f['error']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args):
    indir = Path(args.indir)
    meta = json.loads((indir / "summary.json").read_text())
    files = sorted((indir / "trials").glob("trial_*.csv"))
    if not files:
        raise OSError(f"no per-trial tables under {indir / 'trials'}")
    trial_curves = dict(read_trial_csv(f) for f in files)
    report = aggregate(trial_curves, meta["models"], meta["n_agents"], meta["n_hor"],
                       meta["burn_in"], meta["config_digest"], meta.get("failed_trials", []))
    rk = rank_models(report, args.criterion)
    doc = {
        "criterion": rk.criterion,
        "ranking": rk.order,
        "scores": rk.scores,
        "ties": rk.ties,
        "n_trials": report.n_trials,
        "burn_in": report.burn_in,
        "config_digest": report.config_digest,
    }
    text = dump_json(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "report": cmd_report}


def main(argv=None):
    level = os.environ.get("PSA_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrialError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
