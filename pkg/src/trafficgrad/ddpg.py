"""Deterministic policy-gradient trainer with per-detector rewards.

Actor and critic are plain dense networks (see `nn`). The critic regresses a
vector of Q-values, one per detector, against targets
``y = r + gamma * Q'(s', pi'(s'))`` computed element-wise with slowly blended
target copies of both networks; the actor ascends the (weighted) mean of the
critic's outputs through the critic's action-input gradient. Exploration
adds Ornstein-Uhlenbeck noise to the actor's raw output before the
cycle-preserving phase transform, so explored actions still respect every
intersection's cycle. The discount factor follows a triangle-wave schedule
over episodes, and both updates are clipped to a global gradient norm.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nn
from .control import durations_from_raw, layout_from_scenario
from .microsim import Simulation
from .netgraph import Scenario


class DivergenceError(RuntimeError):
    """A network parameter became non-finite; carries the partial log."""

    def __init__(self, message: str, log: list[dict] | None = None):
        super().__init__(message)
        self.log = log or []


@dataclass
class DdpgConfig:
    # plain SGD per the optimizer choice; rates sized for rewards on the
    # 0.01 scale, with the norm clip bounding every step
    actor_lr: float = 2e-2
    critic_lr: float = 5e-2
    grad_clip: float = 0.5
    tau: float = 0.001
    batch_size: int = 64
    replay_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    gamma_max: float = 0.9
    gamma_period: int = 50
    actor_hidden: tuple[int, ...] | None = None   # None: (4*nd, 2*nd)
    critic_hidden: tuple[int, ...] | None = None  # None: (4*(nd+np), 2*(nd+np))
    detector_weights: tuple[float, ...] | None = None  # None: unweighted mean


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray


@dataclass
class Batch:
    states: np.ndarray       # (N, nd)
    actions: np.ndarray      # (N, np)
    rewards: np.ndarray      # (N, nd)
    next_states: np.ndarray  # (N, nd)


class ReplayBuffer:
    """Bounded FIFO of transitions with a uniform sampler."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.buf: deque[Transition] = deque(maxlen=capacity)
        self.rng = rng

    def __len__(self) -> int:
        return len(self.buf)

    def add(self, t: Transition) -> None:
        for arr in (t.state, t.action, t.reward, t.next_state):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite value in transition")
        self.buf.append(t)

    def sample(self, batch_size: int) -> Batch:
        if len(self.buf) < batch_size:
            raise ValueError("not enough transitions to sample")
        idx = self.rng.integers(0, len(self.buf), size=batch_size)
        items = [self.buf[int(i)] for i in idx]
        return Batch(
            states=np.stack([t.state for t in items]),
            actions=np.stack([t.action for t in items]),
            rewards=np.stack([t.reward for t in items]),
            next_states=np.stack([t.next_state for t in items]),
        )


class OUNoise:
    """Ornstein-Uhlenbeck process, one dimension per phase."""

    def __init__(self, n: int, theta: float = 0.15, sigma: float = 0.2,
                 mu: float = 0.0, dt: float = 1.0,
                 rng: np.random.Generator | None = None):
        self.n, self.theta, self.sigma, self.mu, self.dt = n, theta, sigma, mu, dt
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.x = np.full(n, mu, dtype=np.float64)

    def reset(self) -> None:
        self.x = np.full(self.n, self.mu, dtype=np.float64)

    def sample(self) -> np.ndarray:
        self.x = (self.x + self.theta * (self.mu - self.x) * self.dt
                  + self.sigma * np.sqrt(self.dt) * self.rng.normal(size=self.n))
        return self.x.copy()


@dataclass(frozen=True)
class GammaSchedule:
    """Triangle wave from 0 up to gamma_max and back, per episode index."""

    gamma_max: float = 0.9
    period: int = 50

    def value(self, episode: int) -> float:
        if self.period <= 0:
            return self.gamma_max
        phase = episode % self.period
        return self.gamma_max * (1.0 - abs(2.0 * phase / self.period - 1.0))


HEAD_INIT_SCALE = 3e-3  # tiny uniform init for both output layers


def build_actor(nd: int, n_phases: int, rng: np.random.Generator,
                hidden: tuple[int, ...] | None = None) -> nn.Mlp:
    """Dense stack ending in a nonnegative raw output per phase: widening
    then narrowing leaky-ReLU layers, batch normalization, ReLU head.

    The head gets tiny uniform weights and bias 1, so the initial policy is
    near group-constant (the do-nothing action) with the ReLU safely away
    from its dead zone.
    """
    hidden = hidden if hidden is not None else (4 * nd, 2 * nd)
    layers: list = []
    w = nd
    for h in hidden:
        layers.append(nn.Dense(w, h, "leaky_relu", rng))
        w = h
    layers.append(nn.Dense(w, n_phases, "leaky_relu", rng))
    layers.append(nn.BatchNorm(n_phases))
    head = nn.Dense(n_phases, n_phases, "relu", rng)
    head.W = rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, size=head.W.shape)
    head.b = np.ones(n_phases)
    layers.append(head)
    return nn.Mlp(layers)


def build_critic(nd: int, n_phases: int, rng: np.random.Generator,
                 hidden: tuple[int, ...] | None = None) -> nn.Mlp:
    """Dense stack from (state, action) to one Q-value per detector.

    The linear output layer starts near zero so early bootstrap targets are
    dominated by observed rewards rather than the random initial Q-scale.
    """
    m = nd + n_phases
    hidden = hidden if hidden is not None else (4 * m, 2 * m)
    layers: list = []
    w = m
    for h in hidden:
        layers.append(nn.Dense(w, h, "leaky_relu", rng))
        w = h
    out = nn.Dense(w, nd, "linear", rng)
    out.W = rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, size=out.W.shape)
    layers.append(out)
    return nn.Mlp(layers)


@dataclass
class AgentNets:
    actor: nn.Mlp
    critic: nn.Mlp
    target_actor: nn.Mlp
    target_critic: nn.Mlp
    tau: float
    nd: int
    n_actions: int

    @classmethod
    def create(cls, nd: int, n_phases: int, config: DdpgConfig,
               rng: np.random.Generator) -> "AgentNets":
        actor = build_actor(nd, n_phases, rng, config.actor_hidden)
        critic = build_critic(nd, n_phases, rng, config.critic_hidden)
        return cls(actor=actor, critic=critic,
                   target_actor=actor.copy(), target_critic=critic.copy(),
                   tau=config.tau, nd=nd, n_actions=n_phases)

    def all_finite(self) -> bool:
        for net in (self.actor, self.critic, self.target_actor, self.target_critic):
            for arrs in net.state():
                for a in arrs:
                    if not np.all(np.isfinite(a)):
                        return False
        return True


def select_action(actor: nn.Mlp, state: np.ndarray,
                  noise: OUNoise | None = None) -> np.ndarray:
    """Actor forward in eval mode plus exploration noise on the raw output
    (before the phase transform, so noisy actions keep the cycles)."""
    out = nn.forward(actor, np.asarray(state, dtype=np.float64)[None, :])[0]
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"actor produced non-finite action: {out!r} "
                              f"for state {np.asarray(state)!r}")
    if noise is not None:
        out = out + noise.sample()
    return out


def critic_targets(batch: Batch, target_actor: nn.Mlp, target_critic: nn.Mlp,
                   gamma: float) -> np.ndarray:
    """y = r + gamma * Q'(s', pi'(s')), element-wise per detector."""
    a2 = nn.forward(target_actor, batch.next_states)
    q2 = nn.forward(target_critic, np.concatenate([batch.next_states, a2], axis=1))
    return batch.rewards + gamma * q2


def update_critic(nets: AgentNets, batch: Batch, gamma: float,
                  lr: float = 1e-3, clip: float = 0.5):
    """One clipped SGD step on the summed-over-detectors squared error."""
    y = critic_targets(batch, nets.target_actor, nets.target_critic, gamma)
    n = batch.states.shape[0]
    q, caches = nn.forward(nets.critic, np.concatenate([batch.states, batch.actions], axis=1),
                           train=True)
    diff = q - y
    loss = float((diff * diff).sum() / n)
    grads, _ = nn.backward(nets.critic, caches, 2.0 * diff / n)
    grads = nn.clip_grad_norm(grads, clip)
    report = nn.grad_report(grads)
    nn.sgd_step(nets.critic, grads, lr)
    return loss, report


def update_actor(nets: AgentNets, batch: Batch, lr: float = 1e-4, clip: float = 0.5,
                 detector_weights: np.ndarray | None = None) -> nn.GradReport:
    """Ascend the batch mean of the critic's per-detector outputs at
    a = pi(s), implemented as descent on its negation; the critic itself is
    left untouched."""
    n = batch.states.shape[0]
    if detector_weights is None:
        w = np.full(nets.nd, 1.0 / nets.nd)
    else:
        w = np.asarray(detector_weights, dtype=np.float64)
        w = w / w.sum()
    actions, a_caches = nn.forward(nets.actor, batch.states, train=True)
    _, q_caches = nn.forward(nets.critic,
                             np.concatenate([batch.states, actions], axis=1), train=True)
    dq = np.tile(-w / n, (n, 1))
    _, d_input = nn.backward(nets.critic, q_caches, dq)  # critic grads discarded
    d_action = d_input[:, nets.nd:]
    grads, _ = nn.backward(nets.actor, a_caches, d_action)
    grads = nn.clip_grad_norm(grads, clip)
    report = nn.grad_report(grads)
    nn.sgd_step(nets.actor, grads, lr)
    return report


def soft_update(target: nn.Mlp, online: nn.Mlp, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, over all state arrays
    (parameters and batch-norm running statistics)."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    t_state, o_state = target.state(), online.state()
    if len(t_state) != len(o_state):
        raise ValueError("network layer counts differ")
    for t_arrs, o_arrs in zip(t_state, o_state):
        for t, o in zip(t_arrs, o_arrs):
            if t.shape != o.shape:
                raise ValueError("network shapes differ")
            t *= (1.0 - tau)
            t += tau * o


def train(scenario: Scenario, config: DdpgConfig, episodes: int, master_seed: int,
          trial: int = 0, baseline_cache=None, checkpoint_dir: str | None = None,
          alpha: float = 1.0 / 50.0) -> list[dict]:
    """Full training run on one scenario; returns one log row per episode.

    Every episode gets a fresh simulation seed derived from
    (master_seed, trial, episode); rewards difference detector speed scores
    against the cached same-seed uncontrolled run. Aborts with
    DivergenceError (carrying the partial log) if any parameter goes
    non-finite.
    """
    from .harness import BaselineCache, derive_seed, reward_vector

    layout = layout_from_scenario(scenario)
    nd = scenario.n_detectors
    if baseline_cache is None:
        baseline_cache = BaselineCache(None)
    nets = AgentNets.create(
        nd, layout.n_phases, config,
        np.random.default_rng(derive_seed(master_seed, trial, "ddpg-init")))
    noise = OUNoise(layout.n_phases, config.ou_theta, config.ou_sigma, config.ou_mu,
                    rng=np.random.default_rng(derive_seed(master_seed, trial, "ddpg-noise")))
    buffer = ReplayBuffer(config.replay_capacity,
                          np.random.default_rng(derive_seed(master_seed, trial, "ddpg-replay")))
    schedule = GammaSchedule(config.gamma_max, config.gamma_period)
    weights = (np.asarray(config.detector_weights, dtype=np.float64)
               if config.detector_weights is not None else None)

    def _checkpoint(tag: str) -> None:
        if checkpoint_dir is None:
            return
        import os
        os.makedirs(checkpoint_dir, exist_ok=True)
        for name, net in (("actor", nets.actor), ("critic", nets.critic),
                          ("target_actor", nets.target_actor),
                          ("target_critic", nets.target_critic)):
            nn.save_checkpoint(net, f"{checkpoint_dir}/{name}_{tag}.npz")

    _checkpoint("init")
    rows: list[dict] = []
    steps_per_episode = scenario.episode_steps_per_run

    for ep in range(episodes):
        t0 = time.perf_counter()
        gamma = schedule.value(ep)
        seed_ep = derive_seed(master_seed, trial, ep)
        base_scores, _ = baseline_cache.get(scenario, seed_ep)
        sim = Simulation(scenario, seed_ep)
        noise.reset()
        s = np.ones(nd)
        step_rewards: list[float] = []
        a_norms: list[float] = []
        c_norms: list[float] = []
        for k in range(steps_per_episode):
            raw = select_action(nets.actor, s, noise)
            sim.apply_phase_durations(durations_from_raw(raw, layout))
            obs = sim.run_episode_step()
            r = reward_vector(obs.counts, obs.speed_scores, base_scores[k], alpha)
            buffer.add(Transition(s, raw, r, obs.speed_scores.copy()))
            step_rewards.append(float(r.mean()))
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size)
                _, c_rep = update_critic(nets, batch, gamma, config.critic_lr,
                                         config.grad_clip)
                a_rep = update_actor(nets, batch, config.actor_lr, config.grad_clip,
                                     weights)
                soft_update(nets.target_critic, nets.critic, config.tau)
                soft_update(nets.target_actor, nets.actor, config.tau)
                a_norms.append(a_rep.global_norm)
                c_norms.append(c_rep.global_norm)
            s = obs.speed_scores
        if not nets.all_finite():
            _checkpoint(f"diverged_ep{ep}")
            raise DivergenceError(f"non-finite parameter after episode {ep}", rows)
        rows.append({
            "episode": ep,
            "mean_reward": float(np.mean(step_rewards)),
            "actor_grad_norm": float(np.mean(a_norms)) if a_norms else 0.0,
            "critic_grad_norm": float(np.mean(c_norms)) if c_norms else 0.0,
            "gamma": gamma,
            "wall_time": time.perf_counter() - t0,
        })
    if episodes > 0:
        _checkpoint("final")
    return rows
