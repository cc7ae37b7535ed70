"""Multi-agent tabular Q-learning baseline.

One independent agent per traffic-light phase. Each agent watches the few
detectors nearest to its intersection, discretizes the difference between
the current speed scores and the uncontrolled baseline into four fixed bins,
and picks a timing multiplier from {0.2, 0.5, 1.0, 2.0, 3.5} by epsilon-
greedy lookup in its own table. The per-phase multipliers are renormalized
by the shared cycle-preserving transform before hitting the simulator, and
each agent learns from the mean reward over its own detector subset. Agents
never communicate, though their detector subsets may overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
import time

import numpy as np

from .control import PhaseLayout, durations_from_multipliers, layout_from_scenario
from .microsim import Simulation
from .netgraph import Scenario

ACTION_RATIOS = (0.2, 0.5, 1.0, 2.0, 3.5)
# score-delta bins; a boundary value falls in the lower bin
BIN_EDGES = np.array([-0.2, -0.001, 0.02])
N_BINS = 4


@dataclass
class QlearnConfig:
    alpha_q: float = 0.1
    gamma_q: float = 0.9
    eps_start: float = 0.3
    eps_end: float = 0.05
    k_detectors: int = 2


def bin_delta(delta):
    """Map score deltas in [-1, 1] to bin indices 0..3."""
    return np.searchsorted(BIN_EDGES, delta, side="left")


class PhaseAgent:
    """Tabular controller of a single phase."""

    def __init__(self, phase_index: int, detector_indices: list[int]):
        self.phase_index = phase_index
        self.detectors = list(detector_indices)
        self.k = len(self.detectors)
        self.q = np.zeros((N_BINS ** self.k, len(ACTION_RATIOS)))
        self.state = self.encode(np.zeros(self.k))
        self.last_action = 0

    def encode(self, deltas: np.ndarray) -> int:
        """Base-4 positional code of the binned deltas; the first detector
        is the lowest digit."""
        bins = bin_delta(np.asarray(deltas))
        return int(sum(int(b) * N_BINS ** j for j, b in enumerate(bins)))


def encode_state(agent: PhaseAgent, scores: np.ndarray, baseline: np.ndarray) -> int:
    """Discretize (score - baseline) over the agent's detectors."""
    if max(agent.detectors, default=-1) >= len(scores):
        raise IndexError("observation does not cover the agent's detectors")
    deltas = np.asarray(scores)[agent.detectors] - np.asarray(baseline)[agent.detectors]
    return agent.encode(deltas)


def choose_action(agent: PhaseAgent, state: int, rng: np.random.Generator,
                  eps: float) -> int:
    """Epsilon-greedy action index; greedy ties break to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(0, len(ACTION_RATIOS)))
    return int(np.argmax(agent.q[state]))


def q_update(q: np.ndarray, s: int, a: int, r: float, s2: int,
             alpha: float, gamma: float) -> None:
    """One-step Q-learning update, in place."""
    q[s, a] += alpha * (r + gamma * float(q[s2].max()) - q[s, a])


def nearest_detectors(scenario: Scenario, k: int) -> list[list[int]]:
    """For every phase (layout order), the k detectors closest to its
    intersection, by driving distance to or from the intersection node.
    Detectors sitting on one of the phase's own approach sections win ties,
    so each phase watches the traffic it actually serves."""
    import networkx as nx

    g = nx.DiGraph()
    for s in scenario.sections:
        g.add_edge(s.from_node, s.to_node, weight=s.length)
    dist_to = {}
    dist_from = {}
    for inter in scenario.intersections:
        node = scenario.section(inter.phases[0].movements[0][0]).to_node
        dist_to[inter.id] = nx.single_source_dijkstra_path_length(
            g.reverse(copy=False), node, weight="weight")
        dist_from[inter.id] = nx.single_source_dijkstra_path_length(
            g, node, weight="weight")

    out: list[list[int]] = []
    for inter in scenario.intersections:
        for phase in inter.phases:
            approach_secs = {m[0] for m in phase.movements}
            scored = []
            for di, det in enumerate(scenario.detectors):
                sec = scenario.section(det.section)
                upstream = dist_to[inter.id].get(sec.to_node)
                downstream = dist_from[inter.id].get(sec.from_node)
                cands = []
                if upstream is not None:
                    cands.append((sec.length - det.position) + upstream)
                if downstream is not None:
                    cands.append(det.position + downstream)
                if cands:
                    on_approach = 0 if det.section in approach_secs else 1
                    scored.append((on_approach, min(cands), di))
            scored.sort()
            out.append([di for _, _, di in scored[:k]])
    return out


def make_agents(scenario: Scenario, k: int) -> list[PhaseAgent]:
    subsets = nearest_detectors(scenario, k)
    return [PhaseAgent(i, subset) for i, subset in enumerate(subsets)]


def run_multiagent_episode(scenario: Scenario, agents: list[PhaseAgent],
                           layout: PhaseLayout, seed: int,
                           base_scores: np.ndarray, rng: np.random.Generator,
                           eps: float, cfg: QlearnConfig,
                           alpha_reward: float = 1.0 / 50.0) -> float:
    """One closed-loop episode: every agent picks a multiplier for its phase,
    the shared transform re-imposes cycle preservation, and each agent
    updates from its own scalarized reward. Returns the episode mean reward
    (over steps and all detectors)."""
    from .harness import reward_vector

    sim = Simulation(scenario, seed)
    nd = scenario.n_detectors
    for ag in agents:
        ag.state = encode_state(ag, np.ones(nd), np.ones(nd))
    step_rewards = []
    for k in range(scenario.episode_steps_per_run):
        multipliers = np.empty(layout.n_phases)
        for ag in agents:
            ag.last_action = choose_action(ag, ag.state, rng, eps)
            multipliers[ag.phase_index] = ACTION_RATIOS[ag.last_action]
        sim.apply_phase_durations(durations_from_multipliers(multipliers, layout))
        obs = sim.run_episode_step()
        r = reward_vector(obs.counts, obs.speed_scores, base_scores[k], alpha_reward)
        step_rewards.append(float(r.mean()))
        for ag in agents:
            s2 = encode_state(ag, obs.speed_scores, base_scores[k])
            r_ag = float(r[ag.detectors].mean()) if ag.detectors else 0.0
            q_update(ag.q, ag.state, ag.last_action, r_ag, s2, cfg.alpha_q, cfg.gamma_q)
            ag.state = s2
    return float(np.mean(step_rewards))


def train(scenario: Scenario, config: QlearnConfig, episodes: int, master_seed: int,
          trial: int = 0, baseline_cache=None,
          alpha: float = 1.0 / 50.0) -> list[dict]:
    """Multi-episode training loop; same log schema as the gradient trainer
    with empty gradient-norm columns."""
    from .harness import BaselineCache, derive_seed

    layout = layout_from_scenario(scenario)
    if baseline_cache is None:
        baseline_cache = BaselineCache(None)
    agents = make_agents(scenario, config.k_detectors)
    rng = np.random.default_rng(derive_seed(master_seed, trial, "qlearn"))
    rows: list[dict] = []
    for ep in range(episodes):
        t0 = time.perf_counter()
        if episodes > 1:
            eps = config.eps_start + (config.eps_end - config.eps_start) * ep / (episodes - 1)
        else:
            eps = config.eps_start
        seed_ep = derive_seed(master_seed, trial, ep)
        base_scores, _ = baseline_cache.get(scenario, seed_ep)
        mean_reward = run_multiagent_episode(
            scenario, agents, layout, seed_ep, base_scores, rng, eps, config, alpha)
        rows.append({
            "episode": ep,
            "mean_reward": mean_reward,
            "actor_grad_norm": "",
            "critic_grad_norm": "",
            "gamma": config.gamma_q,
            "wall_time": time.perf_counter() - t0,
        })
    return rows
