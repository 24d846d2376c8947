"""Training loop against a live environment server.

One client session drives episodes; transitions go to replay; one
gradient update per environment step after warmup. Episodes the grid
aborts (infeasible acceptance) terminate early and count with the reward
accumulated so far.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import AGENTS
from .client import EnvClient, EpisodeFault
from .nets import actor_deterministic_numpy, export_actor_weights
from .replay import ReplayBuffer


class DivergenceError(Exception):
    """Non-finite loss; training aborted with the log retained."""


@dataclass
class TrainerConfig:
    algorithm: str = "sac"
    hidden: tuple[int, int] = (256, 256)
    learning_rate: float = 3e-4
    replay_capacity: int = 500_000
    batch_size: int = 256
    discount: float = 0.99
    episodes: int = 200
    seed: int = 0
    scenario_id: str = ""
    host: str = "127.0.0.1"
    port: int = 0
    warmup_steps: int = 500
    updates_per_step: int = 1

    def __post_init__(self):
        if self.algorithm not in AGENTS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.replay_capacity <= 0 or self.batch_size <= 0 or self.episodes <= 0:
            raise ValueError("capacities and episode counts must be positive")


@dataclass
class TrainingLog:
    episode_rewards: list[float] = field(default_factory=list)
    actor_losses: list[float] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    episode_steps: list[int] = field(default_factory=list)
    wall_seconds: float = 0.0

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "reward", "actor_loss", "critic_loss", "alpha"])
            for i, r in enumerate(self.episode_rewards):
                w.writerow([i + 1, f"{r:.6f}", f"{self.actor_losses[i]:.6f}",
                            f"{self.critic_losses[i]:.6f}", f"{self.alphas[i]:.6f}"])


@dataclass
class TrainResult:
    agent: object
    log: TrainingLog
    feature_order: list[str]
    obs_dim: int
    action_dim: int

    def export_weights(self, path: str | Path) -> None:
        export_actor_weights(self.agent.actor, self.feature_order, path)

    def deterministic_action(self, obs: np.ndarray) -> np.ndarray:
        return actor_deterministic_numpy(self.agent.actor, obs)


def train(cfg: TrainerConfig, client: EnvClient | None = None,
          progress=None) -> TrainResult:
    """Run the full training schedule over one env session."""
    own_client = client is None
    if own_client:
        client = EnvClient(cfg.host, cfg.port)
    try:
        obs = client.reset(cfg.scenario_id, cfg.seed * 100_003)
        hs = client.handshake
        agent = AGENTS[cfg.algorithm](hs.obs_dim, hs.action_dim,
                                      hidden=tuple(cfg.hidden),
                                      lr=cfg.learning_rate, gamma=cfg.discount,
                                      seed=cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        buf = ReplayBuffer(cfg.replay_capacity, hs.obs_dim, hs.action_dim,
                           rng=np.random.default_rng(cfg.seed + 1))
        log = TrainingLog()
        total_steps = 0
        t0 = time.time()
        for episode in range(cfg.episodes):
            if episode > 0:
                obs = client.reset(cfg.scenario_id, cfg.seed * 100_003 + episode)
            ep_reward, ep_steps = 0.0, 0
            losses = {"actor_loss": 0.0, "critic_loss": 0.0, "alpha": 0.0}
            n_upd = 0
            done = False
            while not done:
                if total_steps < cfg.warmup_steps:
                    action = rng.uniform(0.0, 1.0, hs.action_dim)
                else:
                    action = agent.select_action(obs, explore=True)
                try:
                    next_obs, reward, done, _ = client.step(action)
                except EpisodeFault:
                    break
                buf.push(obs, action, reward, next_obs, done)
                obs = next_obs
                ep_reward += reward
                ep_steps += 1
                total_steps += 1
                if total_steps >= cfg.warmup_steps and len(buf) >= cfg.batch_size:
                    for _ in range(cfg.updates_per_step):
                        stats = agent.update(buf, cfg.batch_size)
                        if not all(math.isfinite(v) for v in stats.values()):
                            log.wall_seconds = time.time() - t0
                            raise DivergenceError(
                                f"non-finite loss at episode {episode + 1}: {stats}")
                        for k in losses:
                            losses[k] += stats[k]
                        n_upd += 1
            log.episode_rewards.append(ep_reward)
            log.episode_steps.append(ep_steps)
            scale = max(n_upd, 1)
            log.actor_losses.append(losses["actor_loss"] / scale)
            log.critic_losses.append(losses["critic_loss"] / scale)
            log.alphas.append(losses["alpha"] / scale if cfg.algorithm == "sac" else 0.0)
            if progress is not None:
                progress(episode + 1, ep_reward)
        log.wall_seconds = time.time() - t0
        return TrainResult(agent=agent, log=log, feature_order=hs.feature_order,
                           obs_dim=hs.obs_dim, action_dim=hs.action_dim)
    finally:
        if own_client:
            client.close()


@dataclass
class EvalReport:
    scenario_id: str
    cumulative_reward: float
    mean_kappa_mw: float
    curtailment_frequency_pct: float
    steps: int
    overlap_warning: str = ""


def evaluate_weights_actions(actor, client: EnvClient, scenario_id: str,
                             seed: int, train_scenario_id: str = "") -> EvalReport:
    """Drive one deterministic episode and aggregate the wire-side
    outcomes. Warns (in the report) when evaluating on the scenario that
    was trained on."""
    warning = ""
    if train_scenario_id and scenario_id == train_scenario_id:
        warning = (f"evaluation scenario {scenario_id!r} overlaps the training "
                   "scenario; results are not held-out")
    obs = client.reset(scenario_id, seed)
    total, kappas = 0.0, []
    done = False
    while not done:
        action = actor_deterministic_numpy(actor, obs)
        try:
            obs, reward, done, info = client.step(action)
        except EpisodeFault:
            break
        total += reward
        kappas.append(float(info.get("kappa", 0.0)))
    k = np.asarray(kappas)
    return EvalReport(
        scenario_id=scenario_id,
        cumulative_reward=total,
        mean_kappa_mw=float(k.mean()) if len(k) else 0.0,
        curtailment_frequency_pct=100.0 * float(np.mean(k > 0)) if len(k) else 0.0,
        steps=len(k),
        overlap_warning=warning)
