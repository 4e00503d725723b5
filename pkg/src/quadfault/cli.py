"""Command line entry point: train / eval / sweep / schedule-trace / compare / plot.

Every run gets a directory (timestamped under $QUADFAULT_OUTPUT_ROOT unless
--output-dir is given) holding the effective config that produced it, so any
result can be replayed from its own artifacts. Flags override config-file
values; unknown flags are rejected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime
from pathlib import Path

from . import configio, curriculum, evaluation
from .agent import PPOConfig
from .simulator import SimConfig
from .training import TrainConfig, train

OUTPUT_ROOT_VAR = "QUADFAULT_OUTPUT_ROOT"


def _run_dir(args, subcommand: str) -> Path:
    if getattr(args, "output_dir", None):
        path = Path(args.output_dir)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        path = root / f"{subcommand}-{stamp}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(out_dir: Path, sections: dict) -> None:
    configio.write_config(out_dir / "effective.cfg", sections)


def _load_sections(args) -> dict:
    if getattr(args, "config", None):
        return configio.read_config(args.config)
    return {}


# ----------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    sections = _load_sections(args)
    config = TrainConfig.from_sections(sections)
    overrides = {
        "mode": args.mode, "seed": args.seed, "total_env_steps": args.total_env_steps,
        "num_workers": args.num_workers, "checkpoint_every": args.checkpoint_every,
        "fixed_k": args.fixed_k, "curriculum_m": args.curriculum_m,
        "g_threshold": args.g_threshold,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if args.train_interval_clamp is not None:
        lo, hi = args.train_interval_clamp
        config.train_interval_clamp = (lo, hi)
    if config.mode not in curriculum.MODES:
        raise SystemExit(f"unknown mode {config.mode!r}; choose from {curriculum.MODES}")
    out_dir = _run_dir(args, f"train-{config.mode}")
    config.output_dir = str(out_dir)
    result = train(config, resume_from=args.resume_from)
    summary_rows = [r for r in result.run_log.rows if r["mean_return"] != ""]
    if summary_rows:
        last = summary_rows[-1]
        print(f"done: {last['env_steps']} env steps, last mean return "
              f"{last['mean_return']:.2f}; artifacts in {out_dir}")
    return 0


def _condition_from_args(args) -> evaluation.EvalCondition:
    seeds = tuple(args.seeds)
    if args.condition == "plain":
        return evaluation.plain_condition(trials=args.trials, seeds=seeds)
    if args.condition == "broken":
        return evaluation.broken_condition(trials=args.trials, seeds=seeds)
    raise SystemExit(f"unknown condition {args.condition!r}")


def cmd_eval(args) -> int:
    condition = _condition_from_args(args)
    report = evaluation.evaluate_checkpoint(args.checkpoint, condition,
                                            policy_name=args.policy_name)
    out_dir = _run_dir(args, f"eval-{condition.name}")
    report.write_trials_csv(out_dir / "trials.csv")
    evaluation.write_summary_csv(out_dir / "summary.csv", [report])
    (out_dir / "report.json").write_text(json.dumps(report.to_payload(), sort_keys=True))
    _echo_config(out_dir, {"eval": {
        "checkpoint": args.checkpoint, "condition": condition.name,
        "trials": condition.trials, "seeds": list(condition.seeds),
        "policy_name": report.policy,
    }})
    s = report.summary()
    print(f"{report.policy} on {condition.name}: reward {s['mean_reward']:.2f} "
          f"(se {s['se_reward']:.2f}), distance {s['mean_distance']:.3f} "
          f"(se {s['se_distance']:.3f}); artifacts in {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    condition = evaluation.k_sweep_condition(args.k_grid, trials=args.trials,
                                             seeds=tuple(args.seeds))
    report = evaluation.evaluate_checkpoint(args.checkpoint, condition,
                                            policy_name=args.policy_name)
    out_dir = _run_dir(args, "sweep")
    report.write_trials_csv(out_dir / "trials.csv")
    (out_dir / "report.json").write_text(json.dumps(report.to_payload(), sort_keys=True))
    with open(out_dir / "curve.csv", "w") as fh:
        fh.write("k,mean_reward,se_reward,mean_distance,se_distance\n")
        for point in report.per_k_curve():
            fh.write(f"{point['k']},{point['mean_reward']},{point['se_reward']},"
                     f"{point['mean_distance']},{point['se_distance']}\n")
    evaluation.plot_k_curves(out_dir / "curve.png", [report])
    _echo_config(out_dir, {"sweep": {
        "checkpoint": args.checkpoint, "k_grid": list(args.k_grid),
        "trials": condition.trials, "seeds": list(condition.seeds),
    }})
    print(f"sweep over {len(args.k_grid)} k values -> {out_dir}")
    return 0


def cmd_schedule_trace(args) -> int:
    rows = curriculum.stateless_schedule(args.mode, args.total_steps,
                                         lcdr_N=args.lcdr_n, k_max=args.k_max,
                                         fixed_k=args.fixed_k)
    out = Path(args.out) if args.out else None
    if out is None:
        out_dir = _run_dir(args, f"schedule-{args.mode}")
        out = out_dir / "schedule.csv"
        _echo_config(out_dir, {"schedule_trace": {
            "mode": args.mode, "total_steps": args.total_steps,
            "lcdr_N": args.lcdr_n, "k_max": args.k_max,
        }})
    curriculum.write_trace_csv(out, rows)
    print(f"{len(rows)} stages -> {out}")
    return 0


def _load_reports(paths) -> list[evaluation.EvalReport]:
    reports = []
    for path in paths:
        payload = json.loads(Path(path).read_text())
        reports.append(evaluation.EvalReport.from_payload(payload))
    return reports


def cmd_compare(args) -> int:
    reports = _load_reports(args.reports)
    table = evaluation.compare(reports)
    out_dir = _run_dir(args, "compare")
    table.write_csv(out_dir / "comparison.csv")
    evaluation.write_summary_csv(out_dir / "summary.csv", reports)
    for metric in ("reward", "distance"):
        evaluation.plot_comparison(out_dir / f"comparison_{metric}.png", reports,
                                   metric=metric)
    _echo_config(out_dir, {"compare": {"reports": list(args.reports)}})
    for entry in table.entries:
        print(f"  #{entry['rank_reward']} {entry['policy']}: reward "
              f"{entry['mean_reward']:.2f}, distance {entry['mean_distance']:.3f}")
    print(f"artifacts in {out_dir}")
    return 0


def cmd_plot(args) -> int:
    reports = _load_reports(args.reports)
    out_dir = _run_dir(args, "plot")
    if reports[0].condition.kind == "grid":
        for metric in ("reward", "distance"):
            evaluation.plot_k_curves(out_dir / f"curve_{metric}.png", reports, metric)
    else:
        for metric in ("reward", "distance"):
            evaluation.plot_comparison(out_dir / f"bars_{metric}.png", reports, metric)
    _echo_config(out_dir, {"plot": {"reports": list(args.reports)}})
    print(f"plots in {out_dir}")
    return 0


# ----------------------------------------------------------------------
# argument parsing

def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part != ""]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part != ""]


def _float_pair(text: str) -> tuple[float, float]:
    parts = _float_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return (parts[0], parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadfault",
        description="Fault-tolerant quadruped locomotion lab: train policies under "
                    "failure-coefficient curricula and reproduce the evaluation "
                    "protocols.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="train a policy under a curriculum mode")
    p.add_argument("--config", help="sectioned key=value config file")
    p.add_argument("--mode", choices=curriculum.MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--total-env-steps", dest="total_env_steps", type=int)
    p.add_argument("--num-workers", dest="num_workers", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--fixed-k", dest="fixed_k", type=float)
    p.add_argument("--curriculum-m", dest="curriculum_m", type=int)
    p.add_argument("--g-threshold", dest="g_threshold", type=float)
    p.add_argument("--train-interval-clamp", dest="train_interval_clamp",
                   type=_float_pair, metavar="LO,HI")
    p.add_argument("--resume-from", dest="resume_from")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on plain/broken")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--condition", default="plain", choices=("plain", "broken"))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seeds", type=_int_list, default=list(evaluation.DEFAULT_SEEDS))
    p.add_argument("--policy-name", dest="policy_name")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="per-k reward/distance curves")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k-grid", dest="k_grid", type=_float_list, required=True,
                   metavar="K0,K1,...")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seeds", type=_int_list, default=[0, 1])
    p.add_argument("--policy-name", dest="policy_name")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("schedule-trace",
                       help="export a precomputable curriculum schedule")
    p.add_argument("--mode", required=True,
                   choices=[m for m in curriculum.MODES
                            if m not in curriculum.ADAPTIVE_MODES])
    p.add_argument("--total-steps", dest="total_steps", type=int, required=True)
    p.add_argument("--lcdr-n", dest="lcdr_n", type=int, default=11)
    p.add_argument("--k-max", dest="k_max", type=float, default=1.5)
    p.add_argument("--fixed-k", dest="fixed_k", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_schedule_trace)

    p = sub.add_parser("compare", help="rank evaluation reports on one condition")
    p.add_argument("--reports", nargs="+", required=True,
                   help="report.json files from eval/sweep runs")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="re-render plots from report files")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_plot)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return 2
        return int(exc.code or 0)
    except (OSError, ValueError, KeyError, configio.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
