"""Command-line entry point.

Each scenario subcommand writes its data files into ``--out`` and only
progress lines to standard error. Exit status: 0 success, 1 usage error,
2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment, files, qnet
from .config import ConfigError, format_config, parse_config
from .ensemble import correlation_scores, correlation_table, select_intervals


EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


log = logging.getLogger("advjam")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (same as --set seed=N)")
    p.add_argument("--preset", choices=("full", "desk"), help="duration preset")
    p.add_argument("--out", type=Path, default=Path(out_default), help="output directory")
    p.add_argument("--victim", type=Path, help="trained victim snapshot; skips victim training")
    p.add_argument("--progress", type=int, default=10000, metavar="SLOTS",
                   help="progress line every SLOTS slots (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advjam", description="Jamming attack and ensemble defense simulator.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("baseline", help="train victims, then test with no attacker")
    _common(p, "runs/baseline")
    p = sub.add_parser("attack", help="frozen victims against a jammer")
    _common(p, "runs/attack")
    p.add_argument("--attacker", choices=("none", "random", "ideal", "dqn"))
    p = sub.add_parser("retrain", help="attack, then central retraining until collapse or the end")
    _common(p, "runs/retrain")
    p = sub.add_parser("ensemble", help="retraining followed by the ensemble defense")
    _common(p, "runs/ensemble")
    p = sub.add_parser("analyze-ensemble", help="select an ensemble from saved transition matrices")
    p.add_argument("matrices", type=Path, help="matrices.csv from a retrain or ensemble run")
    p.add_argument("--n-ensemble", type=int, default=8)
    p.add_argument("--exclude-after", type=int, help="last eligible interval")
    p.add_argument("--out", type=Path, help="scores CSV (default: beside the matrices)")
    sub.add_parser("verify", help="run the invariant self-checks")
    return parser


def _config(args):
    overrides = list(args.overrides)
    if args.preset is not None:
        overrides.insert(0, f"preset={args.preset}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "attacker", None) is not None:
        overrides.append(f"attacker={args.attacker}")
    return parse_config(args.config, overrides)


def _write_common(result: experiment.ScenarioResult, out: Path, from_slot: int) -> None:
    cfg = result.config
    files.emit_trace(result.trace, out / "trace.csv", cfg.ma_window)
    files.emit_histogram(result.trace.histogram(cfg.hist_bin_width, from_slot), out / "histogram.csv")
    files.save_snapshot(result.victim_params, out / "victim.snap", slot=result.boundaries.get("end", -1))
    if result.attacker_params is not None:
        files.save_snapshot(result.attacker_params, out / "attacker.snap")
    manifest = result.manifest()
    manifest["histogram_from_slot"] = from_slot
    files.write_manifest(manifest, out / "manifest.json")
    files.atomic_write(out / "config.txt", format_config(cfg))


def _run_scenario(args) -> int:
    cfg = _config(args)
    victim = None
    if args.victim is not None:
        victim, _, _ = files.load_snapshot(args.victim)
    out: Path = args.out
    log.info("%s: seed %d, preset %s, writing to %s", args.command, cfg.seed, cfg.preset, out)
    every = args.progress
    if args.command == "baseline":
        result = experiment.scenario_baseline(cfg, every)
        _write_common(result, out, result.boundaries["test"])
    elif args.command == "attack":
        result = experiment.scenario_attack(cfg, victim, every)
        _write_common(result, out, min(cfg.t_attack_start + cfg.attacker_t_train, len(result.trace) - 1))
    else:
        if args.command == "retrain":
            result = experiment.scenario_retrain_collapse(cfg, victim, every)
            from_slot = result.boundaries["retrain"]
        else:
            result = experiment.scenario_ensemble(cfg, victim, every)
            from_slot = result.boundaries["ensemble"]
        _write_common(result, out, from_slot)
        lib = result.library
        files.emit_matrices(lib.matrices, out / "matrices.csv")
        files.emit_correlation_table(lib.intervals, correlation_table(lib.matrices), out / "correlations.csv")
        for snap in lib.snapshots:
            files.save_snapshot(snap.params, out / "snapshots" / f"interval_{snap.interval:03d}.snap",
                                snap.interval)
        if result.schedule is not None:
            scores = correlation_scores(
                [m for m in lib.matrices if m.interval <= result.exclude_after])
            eligible = [n for n in lib.intervals if n <= result.exclude_after]
            files.emit_scores(eligible, scores, result.schedule.intervals, out / "scores.csv")
    tail = result.trace.sum_rate[-min(len(result.trace), cfg.ma_window):]
    log.info("%s done: %d slots, final moving average %.3f", args.command, len(result.trace), tail.mean())
    return EXIT_OK


def _analyze(args) -> int:
    matrices = files.read_matrices(args.matrices)
    intervals = [m.interval for m in matrices]
    exclude = args.exclude_after if args.exclude_after is not None else max(intervals)
    chosen = select_intervals(matrices, intervals, args.n_ensemble, exclude)
    eligible = [m for m in matrices if m.interval <= exclude]
    scores = correlation_scores(eligible)
    out = args.out or args.matrices.with_name("scores.csv")
    files.emit_scores([m.interval for m in eligible], scores, chosen, out)
    log.info("selected intervals %s; scores written to %s", " ".join(map(str, chosen)), out)
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_all
    failed = 0
    for name, ok, detail in run_all():
        log.info("%-26s %s  %s", name, "ok  " if ok else "FAIL", detail)
        failed += not ok
    return EXIT_OK if not failed else EXIT_RUNTIME


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "analyze-ensemble":
            return _analyze(args)
        if args.command == "verify":
            return _verify(args)
        return _run_scenario(args)
    except ConfigError as err:
        print(f"advjam: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (qnet.TrainingDivergence, qnet.SnapshotFormatError, files.OutputError, OSError,
            ValueError, FloatingPointError) as err:
        print(f"advjam: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
