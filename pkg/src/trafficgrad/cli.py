"""Command line interface.

    trafficgrad validate <file>
    trafficgrad simulate <scenario> --seed N --out DIR
    trafficgrad baseline <scenario> --seed N --cache-dir DIR
    trafficgrad train-ddpg <scenario> [--config F] [--seed N] [--trials N]
                           [--episodes N] [--out DIR] [--workers N]
    trafficgrad train-qlearn <scenario> ...
    trafficgrad random-baseline <scenario> ...
    trafficgrad compare <run-dir> <run-dir> ... --out DIR

A <scenario> is either a builtin name (network-a, network-b) or a JSON
scenario file.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .harness import BaselineCache, ExperimentConfig, compare, run_experiment
from .microsim import Simulation
from .netgraph import ScenarioError, load_scenario, resolve_scenario


def _cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.file)
    except ScenarioError as exc:
        print(f"INVALID: {exc}")
        return 1
    print(f"OK: {sc.name}: {len(sc.sections)} sections, {len(sc.intersections)} "
          f"intersections, {sc.n_phases} phases, {sc.n_detectors} detectors, "
          f"{len(sc.demand)} demand entries")
    return 0


def _cmd_simulate(args) -> int:
    sc = resolve_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = Simulation(sc, args.seed)
    path = out_dir / f"simulate_{sc.name}_seed{args.seed}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clock", "detector_id", "count", "speed_score", "occupancy"])
        for _ in range(sc.episode_steps_per_run):
            obs = sim.run_episode_step()
            for d, det in enumerate(sc.detectors):
                w.writerow([repr(obs.clock), det.id, int(obs.counts[d]),
                            repr(float(obs.speed_scores[d])),
                            repr(float(obs.occupancy[d]))])
    print(f"wrote {path} ({sim.entered} vehicles entered, {sim.exited} exited)")
    return 0


def _cmd_baseline(args) -> int:
    sc = resolve_scenario(args.scenario)
    cache = BaselineCache(args.cache_dir)
    scores, counts = cache.get(sc, args.seed)
    print(f"baseline for {sc.name} seed {args.seed}: {scores.shape[0]} episode steps, "
          f"{scores.shape[1]} detectors, mean speed score {scores.mean():.4f}, "
          f"total count {int(counts.sum())}")
    if args.cache_dir:
        print(f"cached under {args.cache_dir}")
    return 0


def _experiment_config(args, algorithm: str) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    cfg.algorithm = algorithm
    cfg.scenario = args.scenario
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.episodes is not None:
        cfg.episodes = args.episodes
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.cache_dir is not None:
        cfg.cache_dir = args.cache_dir
    return cfg


def _cmd_train(args, algorithm: str) -> int:
    cfg = _experiment_config(args, algorithm)
    summary = run_experiment(cfg)
    ok = len(summary.trial_rewards)
    print(f"{algorithm}: {ok}/{cfg.trials} trials finished, artifacts in {cfg.out_dir}")
    if summary.failed_trials:
        print(f"failed trials: {summary.failed_trials}")
    if summary.best_per_trial:
        best = max(summary.best_per_trial)
        print(f"best episode mean reward: {best:.5f}")
    return 0 if ok else 1


def _cmd_compare(args) -> int:
    table = compare(args.runs, args.out)
    width = max(len(r["run"]) for r in table) + 2
    print(f"{'run'.ljust(width)}best_episode_mean_reward")
    for row in table:
        print(f"{row['run'].ljust(width)}{row['best_episode_mean_reward']:.5f}")
    print(f"wrote {args.out}/comparison.svg and comparison.csv")
    return 0


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="builtin name (network-a, network-b) or file")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel trial workers")
    p.add_argument("--cache-dir", help="shared baseline cache directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficgrad",
                                     description="traffic light timing workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("file")

    p = sub.add_parser("simulate", help="uncontrolled run, per-step detector CSV")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    p = sub.add_parser("baseline", help="compute (and cache) a baseline trace")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir")

    for name in ("train-ddpg", "train-qlearn", "random-baseline"):
        p = sub.add_parser(name, help=f"run {name.replace('-', ' ')} trials")
        _add_experiment_args(p)

    p = sub.add_parser("compare", help="compare finished run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="comparison")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "baseline":
        return _cmd_baseline(args)
    if args.command == "train-ddpg":
        return _cmd_train(args, "ddpg")
    if args.command == "train-qlearn":
        return _cmd_train(args, "qlearn")
    if args.command == "random-baseline":
        return _cmd_train(args, "random")
    if args.command == "compare":
        return _cmd_compare(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
