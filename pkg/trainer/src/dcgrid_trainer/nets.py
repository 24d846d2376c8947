"""Actor and critic networks plus the portable weights export.

The actor's deterministic path (squashed mean) is what gets exported;
the JSON layout matches the evaluator contract on the simulator side:
ordered dense layers with activation tags and a tanh01 output squash.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


def mlp(sizes, out_dim):
    layers = []
    prev = sizes[0]
    for width in sizes[1:]:
        layers += [nn.Linear(prev, width), nn.ReLU()]
        prev = width
    layers.append(nn.Linear(prev, out_dim))
    return nn.Sequential(*layers)


def squash01(u: torch.Tensor) -> torch.Tensor:
    return (torch.tanh(u) + 1.0) / 2.0


class GaussianActor(nn.Module):
    """Squashed-Gaussian policy over [0,1]^action_dim."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(256, 256)):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Linear(obs_dim, hidden[0]), nn.ReLU(),
            nn.Linear(hidden[0], hidden[1]), nn.ReLU())
        self.mean_head = nn.Linear(hidden[1], action_dim)
        self.log_std_head = nn.Linear(hidden[1], action_dim)

    def forward(self, obs: torch.Tensor):
        h = self.trunk(obs)
        return self.mean_head(h), self.log_std_head(h).clamp(LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, obs: torch.Tensor):
        mean, log_std = self(obs)
        std = log_std.exp()
        dist = torch.distributions.Normal(mean, std)
        u = dist.rsample()
        action = squash01(u)
        # change of variables for a = (tanh(u)+1)/2
        log_prob = dist.log_prob(u) - torch.log((1 - torch.tanh(u).pow(2)) / 2 + 1e-8)
        return action, log_prob.sum(-1, keepdim=True)

    def deterministic(self, obs: torch.Tensor) -> torch.Tensor:
        mean, _ = self(obs)
        return squash01(mean)


class DeterministicActor(nn.Module):
    """tanh01-squashed deterministic policy (TD3 / DDPG)."""

    def __init__(self, obs_dim: int, action_dim: int, hidden=(256, 256)):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Linear(obs_dim, hidden[0]), nn.ReLU(),
            nn.Linear(hidden[0], hidden[1]), nn.ReLU())
        self.mean_head = nn.Linear(hidden[1], action_dim)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return squash01(self.mean_head(self.trunk(obs)))

    def deterministic(self, obs: torch.Tensor) -> torch.Tensor:
        return self(obs)


class Critic(nn.Module):
    def __init__(self, obs_dim: int, action_dim: int, hidden=(256, 256)):
        super().__init__()
        self.q = mlp([obs_dim + action_dim, *hidden], 1)

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.q(torch.cat([obs, action], dim=-1))


def export_actor_weights(actor, feature_order: list[str], path: str | Path,
                         version: int = 1) -> None:
    """Write the deterministic path (trunk + mean head) in the portable
    JSON contract."""
    linear_layers = [m for m in actor.trunk if isinstance(m, nn.Linear)]
    linear_layers.append(actor.mean_head)
    acts = ["relu"] * (len(linear_layers) - 1) + ["linear"]
    layers = []
    for lin, act in zip(linear_layers, acts):
        w = lin.weight.detach().cpu().double().numpy()
        b = lin.bias.detach().cpu().double().numpy()
        layers.append({"rows": w.shape[0], "cols": w.shape[1],
                       "w": w.ravel().tolist(), "b": b.tolist(), "act": act})
    obj = {"version": version, "layers": layers, "squash": "tanh01",
           "feature_order": list(feature_order)}
    Path(path).write_text(json.dumps(obj) + "\n")


def actor_deterministic_numpy(actor, obs: np.ndarray) -> np.ndarray:
    """The trainer's own deterministic action for an observation."""
    with torch.no_grad():
        t = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        return actor.deterministic(t).squeeze(0).numpy().astype(np.float64)
