"""Experiment orchestration: baselines, rewards, trials, artifacts.

The reward for a controlled run differences each detector's speed score
against the score recorded at the same episode step of an uncontrolled run
with the same seed (the baseline), weighted by the detector's vehicle count
and scaled by a constant factor. Baselines are cached on disk keyed by
(scenario hash, seed) so repeated trials and competing algorithms share
them.

`run_experiment` runs independent trials of one algorithm (ddpg | qlearn |
random) with per-episode seeds derived from the master seed, writes one
directory per trial (training_log.csv, timing.csv, status.json,
checkpoints) plus a cross-trial aggregate.csv and an SVG reward curve.
`compare` overlays the aggregates of several runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from filelock import FileLock

from .control import PhaseLayout, durations_from_multipliers, durations_from_raw, \
    layout_from_scenario
from .ddpg import DdpgConfig, DivergenceError
from .microsim import Simulation
from .netgraph import Scenario, resolve_scenario
from .qlearn import QlearnConfig
from .svgplot import Curve, write_chart

REWARD_SCALE = 1.0 / 50.0

LOG_COLUMNS = ["episode", "mean_reward", "actor_grad_norm", "critic_grad_norm", "gamma"]


class SchemaError(ValueError):
    """A CSV artifact misses an expected column."""


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels, independent of platform."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def reward_vector(counts: np.ndarray, scores: np.ndarray, baseline_scores: np.ndarray,
                  alpha: float = REWARD_SCALE) -> np.ndarray:
    """Per-detector reward: alpha * count * (score - baseline score).

    Counts weight busy detectors up and make empty ones reward-neutral; the
    raw count (not a share of the total) keeps rewards comparable across
    steps with different traffic volumes.
    """
    counts = np.asarray(counts, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    baseline_scores = np.asarray(baseline_scores, dtype=np.float64)
    if counts.shape != scores.shape or scores.shape != baseline_scores.shape:
        raise ValueError("detector sets of observation and baseline do not match")
    return alpha * counts * (scores - baseline_scores)


def compute_baseline(scenario: Scenario, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uncontrolled run (base signal plan, no agent): per episode step and
    detector, (speed score, count)."""
    sim = Simulation(scenario, seed)
    steps = scenario.episode_steps_per_run
    scores = np.empty((steps, scenario.n_detectors))
    counts = np.empty((steps, scenario.n_detectors), dtype=np.int64)
    for k in range(steps):
        obs = sim.run_episode_step()
        scores[k] = obs.speed_scores
        counts[k] = obs.counts
    return scores, counts


class BaselineCache:
    """Two-level (memory, disk) cache of uncontrolled traces.

    Disk entries are written atomically under a file lock so parallel
    trials can share one cache directory.
    """

    def __init__(self, cache_dir: str | None):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._mem: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}

    def get(self, scenario: Scenario, seed: int) -> tuple[np.ndarray, np.ndarray]:
        key = (scenario.scenario_hash(), int(seed))
        if key in self._mem:
            return self._mem[key]
        path = self.cache_dir / f"{key[0]}_{key[1]}.npz" if self.cache_dir else None
        if path is not None and path.exists():
            with np.load(path) as data:
                trace = (data["scores"], data["counts"])
        else:
            trace = compute_baseline(scenario, seed)
            if path is not None:
                with FileLock(str(path) + ".lock"):
                    if not path.exists():
                        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
                        os.close(fd)
                        with open(tmp, "wb") as fh:
                            np.savez(fh, scores=trace[0], counts=trace[1])
                        os.replace(tmp, path)
        self._mem[key] = trace
        return trace


# ---------------------------------------------------------------------------
# simple agents

def random_agent_step(layout: PhaseLayout, rng: np.random.Generator) -> np.ndarray:
    """Uniform [0, 1] multipliers pushed through the shared cycle-preserving
    transform."""
    return durations_from_multipliers(rng.random(layout.n_phases), layout)


def run_random_trial(scenario: Scenario, episodes: int, master_seed: int, trial: int,
                     baseline_cache: BaselineCache,
                     alpha: float = REWARD_SCALE) -> list[dict]:
    layout = layout_from_scenario(scenario)
    rng = np.random.default_rng(derive_seed(master_seed, trial, "random-agent"))
    rows = []
    for ep in range(episodes):
        t0 = time.perf_counter()
        seed_ep = derive_seed(master_seed, trial, ep)
        base_scores, _ = baseline_cache.get(scenario, seed_ep)
        sim = Simulation(scenario, seed_ep)
        step_rewards = []
        for k in range(scenario.episode_steps_per_run):
            sim.apply_phase_durations(random_agent_step(layout, rng))
            obs = sim.run_episode_step()
            r = reward_vector(obs.counts, obs.speed_scores, base_scores[k], alpha)
            step_rewards.append(float(r.mean()))
        rows.append({
            "episode": ep,
            "mean_reward": float(np.mean(step_rewards)),
            "actor_grad_norm": "",
            "critic_grad_norm": "",
            "gamma": "",
            "wall_time": time.perf_counter() - t0,
        })
    return rows


def run_identity_control(scenario: Scenario, seed: int,
                         baseline_cache: BaselineCache | None = None,
                         alpha: float = REWARD_SCALE) -> np.ndarray:
    """Close the loop with a group-constant (do-nothing) action every step
    and return the (steps, detectors) reward matrix versus the same-seed
    baseline. All-zero rewards are the strongest end-to-end check of the
    simulator/transform/baseline plumbing."""
    if baseline_cache is None:
        baseline_cache = BaselineCache(None)
    layout = layout_from_scenario(scenario)
    base_scores, _ = baseline_cache.get(scenario, seed)
    sim = Simulation(scenario, seed)
    raw = np.zeros(layout.n_phases)
    out = np.empty_like(base_scores)
    for k in range(scenario.episode_steps_per_run):
        sim.apply_phase_durations(durations_from_raw(raw, layout))
        obs = sim.run_episode_step()
        out[k] = reward_vector(obs.counts, obs.speed_scores, base_scores[k], alpha)
    return out


# ---------------------------------------------------------------------------
# experiment runner

@dataclass
class ExperimentConfig:
    scenario: str = "network-a"       # builtin name or scenario file path
    algorithm: str = "ddpg"           # ddpg | qlearn | random
    episodes: int = 200
    trials: int = 1
    master_seed: int = 0
    out_dir: str = "runs/experiment"
    workers: int = 1
    cache_dir: str | None = None      # default: <out_dir>/baseline_cache
    alpha: float = REWARD_SCALE
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    qlearn: QlearnConfig = field(default_factory=QlearnConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        ddpg_doc = doc.pop("ddpg", {}) or {}
        qlearn_doc = doc.pop("qlearn", {}) or {}
        for sub in (ddpg_doc, qlearn_doc):
            for key in ("actor_hidden", "critic_hidden", "detector_weights"):
                if sub.get(key) is not None:
                    sub[key] = tuple(sub[key])
        cfg = cls(**doc)
        cfg.ddpg = DdpgConfig(**ddpg_doc)
        cfg.qlearn = QlearnConfig(**qlearn_doc)
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrialSummary:
    episodes: list[int]
    trial_rewards: list[list[float]]    # per successful trial
    best_per_trial: list[float]
    agg_mean: list[float]
    agg_max: list[float]
    agg_min: list[float]
    failed_trials: list[int]


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_training_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([_fmt_cell(row[c]) for c in LOG_COLUMNS])


def write_timing(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "wall_time"])
        for row in rows:
            w.writerow([row["episode"], f"{row['wall_time']:.3f}"])


def _run_trial(config: ExperimentConfig, scenario: Scenario, trial: int,
               out_dir: Path) -> list[dict]:
    cache_dir = config.cache_dir or str(Path(config.out_dir) / "baseline_cache")
    cache = BaselineCache(cache_dir)
    trial_dir = out_dir / f"trial_{trial:03d}"
    trial_dir.mkdir(parents=True, exist_ok=True)
    if config.algorithm == "ddpg":
        from . import ddpg
        rows = ddpg.train(scenario, config.ddpg, config.episodes, config.master_seed,
                          trial, cache, checkpoint_dir=str(trial_dir / "checkpoints"),
                          alpha=config.alpha)
    elif config.algorithm == "qlearn":
        from . import qlearn
        rows = qlearn.train(scenario, config.qlearn, config.episodes, config.master_seed,
                            trial, cache, alpha=config.alpha)
    elif config.algorithm == "random":
        rows = run_random_trial(scenario, config.episodes, config.master_seed, trial,
                                cache, alpha=config.alpha)
    else:
        raise ValueError(f"unknown algorithm {config.algorithm!r}")
    write_training_log(trial_dir / "training_log.csv", rows)
    write_timing(trial_dir / "timing.csv", rows)
    with open(trial_dir / "status.json", "w", encoding="utf-8") as fh:
        json.dump({"status": "ok", "episodes": len(rows)}, fh)
    return rows


def _run_trial_entry(config_doc: dict, trial: int) -> tuple[int, list[dict] | None, str]:
    config = ExperimentConfig.from_dict(config_doc)
    scenario = resolve_scenario(config.scenario)
    out_dir = Path(config.out_dir)
    try:
        rows = _run_trial(config, scenario, trial, out_dir)
        return trial, rows, ""
    except Exception as exc:  # record the fault, let other trials run
        trial_dir = out_dir / f"trial_{trial:03d}"
        trial_dir.mkdir(parents=True, exist_ok=True)
        partial = getattr(exc, "log", None)
        if partial:
            write_training_log(trial_dir / "training_log.csv", partial)
        with open(trial_dir / "status.json", "w", encoding="utf-8") as fh:
            json.dump({"status": "error", "error": f"{type(exc).__name__}: {exc}"}, fh)
        return trial, None, str(exc)


def aggregate_rewards(trial_rewards: list[list[float]]) -> tuple[list, list, list, list]:
    if not trial_rewards:
        return [], [], [], []
    n_ep = min(len(tr) for tr in trial_rewards)
    episodes = list(range(n_ep))
    mat = np.array([tr[:n_ep] for tr in trial_rewards])
    return (episodes, mat.mean(axis=0).tolist(), mat.max(axis=0).tolist(),
            mat.min(axis=0).tolist())


def write_aggregate(path: Path, episodes, agg_mean, agg_max, agg_min) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "mean", "max", "min"])
        for e, m, hi, lo in zip(episodes, agg_mean, agg_max, agg_min):
            w.writerow([e, repr(m), repr(hi), repr(lo)])


def run_experiment(config: ExperimentConfig,
                   scenario: Scenario | None = None) -> TrialSummary:
    """Run `config.trials` independent trials and write all artifacts."""
    if scenario is None:
        scenario = resolve_scenario(config.scenario)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)

    results: dict[int, list[dict] | None] = {}
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_trial_entry, config.to_dict(), t)
                       for t in range(config.trials)]
            for fut in futures:
                trial, rows, _ = fut.result()
                results[trial] = rows
    else:
        for t in range(config.trials):
            trial, rows, _ = _run_trial_entry(config.to_dict(), t)
            results[trial] = rows

    trial_rewards = []
    best_per_trial = []
    failed = []
    for t in range(config.trials):
        rows = results[t]
        if rows is None:
            failed.append(t)
            continue
        rewards = [float(r["mean_reward"]) for r in rows]
        trial_rewards.append(rewards)
        best_per_trial.append(max(rewards) if rewards else float("nan"))

    episodes, agg_mean, agg_max, agg_min = aggregate_rewards(trial_rewards)
    write_aggregate(out_dir / "aggregate.csv", episodes, agg_mean, agg_max, agg_min)
    curves = []
    if episodes:
        curves = [
            Curve(f"{config.algorithm} mean", [float(e) for e in episodes], agg_mean),
            Curve("max over trials", [float(e) for e in episodes], agg_max, dash="4,3",
                  width=1.2),
            Curve("min over trials", [float(e) for e in episodes], agg_min, dash="4,3",
                  width=1.2),
        ]
    write_chart(str(out_dir / "reward_curve.svg"), curves,
                f"{config.algorithm} on {scenario.name} "
                f"({len(trial_rewards)} trials x {config.episodes} episodes)")
    return TrialSummary(episodes, trial_rewards, best_per_trial,
                        agg_mean, agg_max, agg_min, failed)


# ---------------------------------------------------------------------------
# comparison across runs

def read_aggregate(run_dir: str) -> dict[str, list[float]]:
    path = Path(run_dir) / "aggregate.csv"
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for needed in ("episode", "mean", "max", "min"):
            if needed not in cols:
                raise SchemaError(f"{path}: missing column {needed!r}")
        out: dict[str, list[float]] = {c: [] for c in ("episode", "mean", "max", "min")}
        for row in reader:
            for c in out:
                out[c].append(float(row[c]))
    return out


def compare(run_dirs: list[str], out_dir: str) -> list[dict]:
    """Overlay the aggregate curves of several runs and tabulate each run's
    best-episode mean reward (best across trials). Returns the table rows."""
    if len(run_dirs) < 2:
        raise ValueError("need at least two run directories")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = []
    table = []
    for i, rd in enumerate(run_dirs):
        agg = read_aggregate(rd)
        label = _run_label(rd)
        curves.append(Curve(label, agg["episode"], agg["mean"],
                            color=_color(i)))
        best = max(agg["max"]) if agg["max"] else float("nan")
        table.append({"run": label, "dir": str(rd), "best_episode_mean_reward": best})
    write_chart(str(out / "comparison.svg"), curves, "Algorithm performance comparison")
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "dir", "best_episode_mean_reward"])
        for row in table:
            w.writerow([row["run"], row["dir"], repr(row["best_episode_mean_reward"])])
    return table


def _run_label(run_dir: str) -> str:
    cfg_path = Path(run_dir) / "config.json"
    if cfg_path.exists():
        with open(cfg_path, "r", encoding="utf-8") as fh:
            return json.load(fh).get("algorithm", Path(run_dir).name)
    return Path(run_dir).name


def _color(i: int) -> str:
    from .svgplot import PALETTE
    return PALETTE[i % len(PALETTE)]
