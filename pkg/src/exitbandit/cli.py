"""Command-line harness: ``exitbandit {simulate,replay,sweep,stats,bound}``.

Every command is a pure function of its config and input files. Results go to
``--out`` as ``trajectories.csv``, ``summary.csv`` and ``metadata.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import yaml

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .core import ExitBanditError, build_loss_vector, optimal_exit, reward_gaps
from .environment import TraceParseError, empirical_gammas, open_trace
from .evaluation import (
    ReplaySource,
    aggregate_trials,
    categorize,
    per_exit_accuracy,
    run_trials,
    theorem_bound,
    trial_seeds,
)

log = logging.getLogger("exitbandit")

TRAJECTORY_COLUMNS = ("policy", "trial", "round", "chosen_exit", "cumulative_regret")
SUMMARY_COLUMNS = ("policy", "round", "mean_regret", "ci_halfwidth")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3, 4


def _fmt(x: float) -> str:
    return repr(float(x))


def _floats(values) -> list:
    return [float(v) for v in values]


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {k: getattr(args, k) for k in ("seed", "trials", "rounds")
               if getattr(args, k, None) is not None}
    if not changes:
        return cfg
    cfg = replace(cfg, **changes)
    cfg.validate()
    return cfg


def _write_outputs(out_dir: str, traj_rows: list, summary_rows: list, metadata: dict,
                   prefix_columns: Sequence[str] = ()) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("trajectories.csv", "summary.csv", "metadata.json")}
    with open(paths["trajectories.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((*prefix_columns, *TRAJECTORY_COLUMNS))
        w.writerows(traj_rows)
    with open(paths["summary.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((*prefix_columns, *SUMMARY_COLUMNS))
        w.writerows(summary_rows)
    with open(paths["metadata.json"], "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def _rows_for(label: str, trajectories, prefix=()) -> tuple[list, list]:
    traj_rows = []
    for trial, tr in enumerate(trajectories):
        for t, (k, r) in enumerate(zip(tr.chosen_exits.tolist(), tr.cumulative_regret.tolist()),
                                   start=1):
            traj_rows.append((*prefix, label, trial, t, k, _fmt(r)))
    summary = aggregate_trials(trajectories, label)
    summary_rows = [(*prefix, label, t, _fmt(m), _fmt(c))
                    for t, (m, c) in enumerate(zip(summary.mean.tolist(),
                                                   summary.ci_halfwidth.tolist()), start=1)]
    return traj_rows, summary_rows


def _metadata(command: str, cfg: ExperimentConfig, profile, losses, loss_source: str,
              extra: Optional[dict] = None) -> dict:
    meta = {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "trial_seeds": trial_seeds(cfg.seed, cfg.trials),
        "profile": {"layers": list(profile.layer_positions), "costs": _floats(profile.costs)},
        "loss_source": loss_source,
        "gammas": _floats(losses.gammas),
        "losses": _floats(losses.losses),
        "optimal_exit": optimal_exit(losses),
        "gaps": _floats(reward_gaps(losses)),
    }
    meta.update(extra or {})
    return meta


def _run_policies(cfg, profile, source, losses, parallelism, prefix=()):
    traj_rows, summary_rows, finals = [], [], {}
    for kind in cfg.policy_kinds():
        log.info("running %s: %d trials x %d rounds", kind.label, cfg.trials, cfg.rounds)
        trajs = run_trials(profile, kind, source, losses, cfg.rounds, cfg.trials,
                           cfg.seed, parallelism)
        t_rows, s_rows = _rows_for(kind.label, trajs, prefix)
        traj_rows += t_rows
        summary_rows += s_rows
        finals[kind.label] = float(aggregate_trials(trajs).mean[-1])
    return traj_rows, summary_rows, finals


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, parallelism: int = 1) -> dict:
    if cfg.environment is None:
        raise ConfigError(["simulate needs an 'environment' section"])
    profile, spec = cfg.build_profile(), cfg.build_spec()
    losses = build_loss_vector(spec.gammas, profile)
    traj_rows, summary_rows, finals = _run_policies(cfg, profile, spec, losses, parallelism)
    meta = _metadata("simulate", cfg, profile, losses, "spec_gammas",
                     {"final_mean_regret": finals})
    return _write_outputs(out_dir, traj_rows, summary_rows, meta)


def cmd_replay(cfg: ExperimentConfig, out_dir: str, parallelism: int = 1) -> dict:
    if cfg.trace is None:
        raise ConfigError(["replay needs a 'trace' path"])
    profile = cfg.build_profile()
    trace = open_trace(cfg.trace_path())
    losses = build_loss_vector(empirical_gammas(trace), profile)
    source = ReplaySource(trace, shuffle=cfg.shuffle)
    traj_rows, summary_rows, finals = _run_policies(cfg, profile, source, losses, parallelism)
    meta = _metadata("replay", cfg, profile, losses, "empirical_gammas",
                     {"final_mean_regret": finals, "trace_records": len(trace)})
    return _write_outputs(out_dir, traj_rows, summary_rows, meta)


def cmd_sweep(cfg: ExperimentConfig, out_dir: str, parallelism: int = 1) -> dict:
    if cfg.environment is None:
        raise ConfigError(["sweep needs an 'environment' section"])
    profile, spec = cfg.build_profile(), cfg.build_spec()
    # one target loss vector for every violation rate
    losses = build_loss_vector(spec.gammas, profile)
    traj_rows, summary_rows, finals = [], [], {}
    for eps in cfg.epsilons:
        eps_spec = replace(spec, violation_rate=float(eps))
        t, s, f = _run_policies(cfg, profile, eps_spec, losses, parallelism,
                                prefix=(_fmt(eps),))
        traj_rows += t
        summary_rows += s
        finals[_fmt(eps)] = f
    meta = _metadata("sweep", cfg, profile, losses, "spec_gammas",
                     {"final_mean_regret": finals,
                      "effective_gammas": {_fmt(e): _floats(replace(spec, violation_rate=float(e))
                                                            .effective_gammas())
                                           for e in cfg.epsilons}})
    return _write_outputs(out_dir, traj_rows, summary_rows, meta, prefix_columns=("epsilon",))


def stats_report(trace) -> dict:
    counts = categorize(trace)
    return {
        "records": counts.total,
        "counts": counts.as_dict(),
        "percentages": counts.percentages(),
        "exit_accuracy": _floats(per_exit_accuracy(trace)),
    }


def format_stats(report: dict) -> str:
    lines = [f"records: {report['records']}", "category        count   percent"]
    for name, count in report["counts"].items():
        lines.append(f"{name:<14} {count:>6}   {report['percentages'][name]:6.2f}%")
    lines.append("exit accuracy:")
    for k, acc in enumerate(report["exit_accuracy"], start=1):
        lines.append(f"  exit {k}: {100 * acc:6.2f}%")
    return "\n".join(lines)


def cmd_stats(trace_path: str, out_dir: Optional[str] = None) -> dict:
    report = stats_report(open_trace(trace_path))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


def cmd_bound(cfg: ExperimentConfig, rounds: Optional[int] = None) -> dict:
    profile = cfg.build_profile()
    if cfg.environment is not None:
        losses = build_loss_vector(cfg.build_spec().gammas, profile)
    else:
        losses = build_loss_vector(empirical_gammas(open_trace(cfg.trace_path())), profile)
    n = rounds or cfg.rounds
    return {"rounds": n, "optimal_exit": optimal_exit(losses),
            "gaps": _floats(reward_gaps(losses)), "bound": theorem_bound(losses, n)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exitbandit",
                                     description="Unsupervised exit selection for multi-exit cascades.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--parallelism", type=int, default=1)
        return p

    experiment("simulate", "run policies on a synthetic environment")
    experiment("replay", "run policies on a recorded trace")
    experiment("sweep", "regret across violation rates")

    p = sub.add_parser("stats", help="joint-prediction categories of a labeled trace")
    p.add_argument("trace", nargs="?")
    p.add_argument("--trace", dest="trace_opt")
    p.add_argument("--out")

    p = sub.add_parser("bound", help="regret bound for the configured instance")
    p.add_argument("--config", required=True)
    p.add_argument("--rounds", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "stats":
            path = args.trace or args.trace_opt
            if not path:
                raise ConfigError(["stats needs a trace path"])
            print(format_stats(cmd_stats(path, args.out)))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "bound":
            print(json.dumps(cmd_bound(cfg, args.rounds), indent=2))
            return EXIT_OK
        cfg = _apply_overrides(cfg, args)
        if args.parallelism < 1:
            raise ConfigError([f"parallelism must be >= 1, got {args.parallelism}"])
        run = {"simulate": cmd_simulate, "replay": cmd_replay, "sweep": cmd_sweep}[args.command]
        paths = run(cfg, args.out, args.parallelism)
        for p in paths.values():
            print(p)
        return EXIT_OK
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceParseError as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ExitBanditError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
