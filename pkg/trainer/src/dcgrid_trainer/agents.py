"""Off-policy agents: SAC (primary), TD3 and DDPG (comparison baselines).

All three share the network sizes and optimizer settings from the
configuration so comparisons isolate the algorithm itself.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
from torch import nn

from .nets import Critic, DeterministicActor, GaussianActor, squash01
from .replay import ReplayBuffer


def _soft_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for tp, sp in zip(target.parameters(), source.parameters()):
            tp.mul_(1 - tau).add_(tau * sp)


class SacAgent:
    """Soft actor-critic with twin critics and auto-tuned entropy."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(256, 256),
                 lr=3e-4, gamma=0.99, tau=0.005, seed=0):
        torch.manual_seed(seed)
        self.gamma, self.tau = gamma, tau
        self.actor = GaussianActor(obs_dim, action_dim, hidden)
        self.q1 = Critic(obs_dim, action_dim, hidden)
        self.q2 = Critic(obs_dim, action_dim, hidden)
        self.q1_t = copy.deepcopy(self.q1)
        self.q2_t = copy.deepcopy(self.q2)
        self.pi_opt = torch.optim.Adam(self.actor.parameters(), lr=lr)
        self.q_opt = torch.optim.Adam(
            list(self.q1.parameters()) + list(self.q2.parameters()), lr=lr)
        self.log_alpha = torch.zeros(1, requires_grad=True)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=lr)
        self.target_entropy = -float(action_dim)

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.exp().detach())

    def select_action(self, obs: np.ndarray, explore: bool = True) -> np.ndarray:
        t = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            if explore:
                action, _ = self.actor.sample(t)
            else:
                action = self.actor.deterministic(t)
        return action.squeeze(0).numpy().astype(np.float64)

    def update(self, buf: ReplayBuffer, batch: int) -> dict:
        obs, act, rew, nxt, done = (torch.as_tensor(x) for x in buf.sample(batch))
        rew = rew.unsqueeze(-1)
        done = done.unsqueeze(-1)
        alpha = self.log_alpha.exp().detach()
        with torch.no_grad():
            next_a, next_logp = self.actor.sample(nxt)
            target_q = torch.min(self.q1_t(nxt, next_a), self.q2_t(nxt, next_a))
            target = rew + self.gamma * (1 - done) * (target_q - alpha * next_logp)
        q1 = self.q1(obs, act)
        q2 = self.q2(obs, act)
        critic_loss = nn.functional.mse_loss(q1, target) + \
            nn.functional.mse_loss(q2, target)
        self.q_opt.zero_grad()
        critic_loss.backward()
        self.q_opt.step()

        new_a, logp = self.actor.sample(obs)
        q_new = torch.min(self.q1(obs, new_a), self.q2(obs, new_a))
        actor_loss = (alpha * logp - q_new).mean()
        self.pi_opt.zero_grad()
        actor_loss.backward()
        self.pi_opt.step()

        alpha_loss = -(self.log_alpha.exp() *
                       (logp.detach() + self.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        _soft_update(self.q1_t, self.q1, self.tau)
        _soft_update(self.q2_t, self.q2, self.tau)
        return {"critic_loss": float(critic_loss.detach()),
                "actor_loss": float(actor_loss.detach()), "alpha": self.alpha}


class Td3Agent:
    """Twin-delayed DDPG with target policy smoothing."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(256, 256),
                 lr=3e-4, gamma=0.99, tau=0.005, seed=0,
                 policy_noise=0.1, noise_clip=0.25, policy_delay=2,
                 explore_noise=0.1):
        torch.manual_seed(seed)
        self.gamma, self.tau = gamma, tau
        self.policy_noise, self.noise_clip = policy_noise, noise_clip
        self.policy_delay, self.explore_noise = policy_delay, explore_noise
        self.actor = DeterministicActor(obs_dim, action_dim, hidden)
        self.actor_t = copy.deepcopy(self.actor)
        self.q1 = Critic(obs_dim, action_dim, hidden)
        self.q2 = Critic(obs_dim, action_dim, hidden)
        self.q1_t = copy.deepcopy(self.q1)
        self.q2_t = copy.deepcopy(self.q2)
        self.pi_opt = torch.optim.Adam(self.actor.parameters(), lr=lr)
        self.q_opt = torch.optim.Adam(
            list(self.q1.parameters()) + list(self.q2.parameters()), lr=lr)
        self._updates = 0
        self._rng = np.random.default_rng(seed)
        self._last_actor_loss = 0.0

    def select_action(self, obs: np.ndarray, explore: bool = True) -> np.ndarray:
        t = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            a = self.actor(t).squeeze(0).numpy().astype(np.float64)
        if explore:
            a = np.clip(a + self._rng.normal(0, self.explore_noise, a.shape), 0, 1)
        return a

    def update(self, buf: ReplayBuffer, batch: int) -> dict:
        obs, act, rew, nxt, done = (torch.as_tensor(x) for x in buf.sample(batch))
        rew = rew.unsqueeze(-1)
        done = done.unsqueeze(-1)
        with torch.no_grad():
            noise = (torch.randn_like(act) * self.policy_noise).clamp(
                -self.noise_clip, self.noise_clip)
            next_a = (self.actor_t(nxt) + noise).clamp(0.0, 1.0)
            target_q = torch.min(self.q1_t(nxt, next_a), self.q2_t(nxt, next_a))
            target = rew + self.gamma * (1 - done) * target_q
        critic_loss = nn.functional.mse_loss(self.q1(obs, act), target) + \
            nn.functional.mse_loss(self.q2(obs, act), target)
        self.q_opt.zero_grad()
        critic_loss.backward()
        self.q_opt.step()

        self._updates += 1
        if self._updates % self.policy_delay == 0:
            actor_loss = -self.q1(obs, self.actor(obs)).mean()
            self.pi_opt.zero_grad()
            actor_loss.backward()
            self.pi_opt.step()
            self._last_actor_loss = float(actor_loss.detach())
            _soft_update(self.actor_t, self.actor, self.tau)
            _soft_update(self.q1_t, self.q1, self.tau)
            _soft_update(self.q2_t, self.q2, self.tau)
        return {"critic_loss": float(critic_loss.detach()),
                "actor_loss": self._last_actor_loss, "alpha": 0.0}


class DdpgAgent(Td3Agent):
    """Single-critic, no smoothing, undelayed: the classic baseline."""

    def __init__(self, *args, **kw):
        kw.setdefault("policy_delay", 1)
        super().__init__(*args, **kw)

    def update(self, buf: ReplayBuffer, batch: int) -> dict:
        obs, act, rew, nxt, done = (torch.as_tensor(x) for x in buf.sample(batch))
        rew = rew.unsqueeze(-1)
        done = done.unsqueeze(-1)
        with torch.no_grad():
            target = rew + self.gamma * (1 - done) * self.q1_t(nxt, self.actor_t(nxt))
        critic_loss = nn.functional.mse_loss(self.q1(obs, act), target)
        self.q_opt.zero_grad()
        critic_loss.backward()
        self.q_opt.step()
        actor_loss = -self.q1(obs, self.actor(obs)).mean()
        self.pi_opt.zero_grad()
        actor_loss.backward()
        self.pi_opt.step()
        self._last_actor_loss = float(actor_loss.detach())
        _soft_update(self.actor_t, self.actor, self.tau)
        _soft_update(self.q1_t, self.q1, self.tau)
        return {"critic_loss": float(critic_loss.detach()),
                "actor_loss": self._last_actor_loss, "alpha": 0.0}


AGENTS = {"sac": SacAgent, "td3": Td3Agent, "ddpg": DdpgAgent}
