"""Environment server: one protocol step per wire message.

Newline-delimited JSON, one request one reply. A training client resets
an episode (optionally sampling a window of a longer trace by seed) and
then drives it with 5-dimensional actions, receiving normalized features,
the reward, and the acceptance outcome. One client session at a time;
parallel training uses multiple server processes.
"""

from __future__ import annotations

import json
import socket
import sys

import numpy as np

from . import policies, simloop
from .plant import PlanningAction, PlantError
from .scenario import Scenario
from .tso import GridInfeasibleError

PROTOCOL_VERSION = 1


def _error(code: str, detail: str) -> str:
    return json.dumps({"type": "error", "code": code, "detail": detail})


class EnvServer:
    """Session state machine; transports feed it lines and write back
    exactly one reply per line."""

    def __init__(self, scenarios: dict[str, Scenario],
                 episode_steps: int | None = None):
        if not scenarios:
            raise ValueError("at least one scenario must be registered")
        self.scenarios = scenarios
        self.episode_steps = episode_steps
        self._engines: dict[tuple[str, int], simloop.EpisodeEngine] = {}
        self._active: simloop.EpisodeEngine | None = None
        self._norm: policies.ObsNorm | None = None

    # -- message handling ---------------------------------------------------

    def handle_line(self, line: str) -> str:
        line = line.strip()
        if not line:
            return _error("bad_json", "empty message")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return _error("bad_json", str(exc))
        if not isinstance(msg, dict) or "type" not in msg:
            return _error("missing_field", "message needs a 'type' field")
        if msg["type"] == "reset":
            return self._handle_reset(msg)
        if msg["type"] == "act":
            return self._handle_act(msg)
        return _error("bad_type", f"unknown message type {msg['type']!r}")

    def _handle_reset(self, msg: dict) -> str:
        for field in ("scenario_id", "seed"):
            if field not in msg:
                return _error("missing_field", f"reset needs {field!r}")
        sid = msg["scenario_id"]
        if sid not in self.scenarios:
            return _error("unknown_scenario",
                          f"{sid!r} not registered; have {sorted(self.scenarios)}")
        scenario = self.scenarios[sid]
        steps = self.episode_steps or scenario.trace.steps
        if steps > scenario.trace.steps:
            return _error("bad_horizon",
                          f"episode of {steps} steps exceeds trace of {scenario.trace.steps}")
        rng = np.random.default_rng(int(msg["seed"]))
        start = 0
        if scenario.trace.steps > steps:
            start = int(rng.integers(0, scenario.trace.steps - steps + 1))
        key = (sid, start)
        if key not in self._engines:
            self._engines[key] = simloop.EpisodeEngine(scenario, start, steps)
        self._active = self._engines[key]
        self._norm = policies.ObsNorm.for_scenario(
            scenario.aidc, steps, scenario.trace.dt_hours)
        obs = self._active.reset()
        return json.dumps({
            "type": "obs",
            "t": self._active.t,
            "features": self._features(obs),
            "obs_dim": policies.OBS_DIM,
            "action_dim": policies.ACTION_DIM,
            "feature_order": list(policies.FEATURE_ORDER),
            "horizon": steps,
            "window_start": start,
            "protocol": PROTOCOL_VERSION,
        })

    def _handle_act(self, msg: dict) -> str:
        if self._active is None:
            return _error("no_episode", "send reset first")
        if "action" not in msg:
            return _error("missing_field", "act needs 'action'")
        action_raw = msg["action"]
        if not isinstance(action_raw, list) or len(action_raw) != policies.ACTION_DIM:
            return _error("bad_action_dim",
                          f"action must have {policies.ACTION_DIM} entries")
        try:
            action = PlanningAction.from_array(np.clip(
                np.asarray(action_raw, dtype=float), 0.0, 1.0))
        except (TypeError, ValueError) as exc:
            return _error("bad_action", str(exc))
        try:
            obs, reward, done, info, _ = self._active.step(action)
        except (GridInfeasibleError, PlantError) as exc:
            self._active = None
            return _error("episode_infeasible", str(exc))
        reply = {
            "type": "step",
            "obs": {"t": min(self._active.t, self._active.horizon),
                    "features": self._features(obs)},
            "reward": reward,
            "done": done,
            "info": {"p_req": info["p_req"], "p_acc": info["p_acc"],
                     "kappa": info["kappa"], "mechanism": info["mechanism"]},
        }
        if done:
            self._active = None
        return json.dumps(reply)

    def _features(self, obs: policies.Observation) -> list[float]:
        return [float(v) for v in policies.normalize_observation(obs, self._norm)]


# -- transports --------------------------------------------------------------

def serve_stdio(server: EnvServer, infile=None, outfile=None) -> None:
    """Blocking loop over line-oriented file objects (defaults: stdio)."""
    infile = infile if infile is not None else sys.stdin
    outfile = outfile if outfile is not None else sys.stdout
    for line in infile:
        outfile.write(server.handle_line(line) + "\n")
        outfile.flush()


def serve_tcp(server: EnvServer, host: str = "127.0.0.1", port: int = 0,
              max_sessions: int | None = None, on_listening=None) -> None:
    """Accept one client at a time; a dropped connection discards the
    episode and the server waits for the next client."""
    sessions = 0
    with socket.create_server((host, port)) as sock:
        bound = sock.getsockname()[1]
        if on_listening is not None:
            on_listening(bound)
        else:
            print(f"env server listening on {host}:{bound}", flush=True)
        while max_sessions is None or sessions < max_sessions:
            conn, _ = sock.accept()
            sessions += 1
            with conn, conn.makefile("r", encoding="utf-8") as rf, \
                    conn.makefile("w", encoding="utf-8") as wf:
                try:
                    serve_stdio(server, rf, wf)
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    server._active = None
