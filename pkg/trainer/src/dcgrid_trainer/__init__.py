"""Off-policy training client for the co-simulation environment protocol."""

from .agents import AGENTS, DdpgAgent, SacAgent, Td3Agent
from .client import EnvClient, EpisodeFault, ProtocolError, spawn_server
from .replay import ReplayBuffer
from .train import (DivergenceError, EvalReport, TrainerConfig, TrainingLog,
                    TrainResult, evaluate_weights_actions, train)

__version__ = "0.1.0"
