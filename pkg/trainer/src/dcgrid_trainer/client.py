"""Environment protocol client: newline-delimited JSON over TCP or pipes.

The trainer knows nothing about grids or data centers; it sees feature
vectors, rewards, and a done flag. Observation and action dimensions come
from the reset handshake and are asserted, never assumed.
"""

from __future__ import annotations

import json
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, field

import numpy as np


class ProtocolError(Exception):
    """Server replied with an error or a malformed message."""

    def __init__(self, message: str, code: str = "", reply: dict | None = None):
        super().__init__(message)
        self.code = code
        self.reply = reply or {}


class EpisodeFault(ProtocolError):
    """The environment aborted the episode (grid-side infeasibility)."""


@dataclass
class Handshake:
    obs_dim: int
    action_dim: int
    horizon: int
    feature_order: list[str] = field(default_factory=list)
    window_start: int = 0


class EnvClient:
    """One live session against an environment server."""

    def __init__(self, host: str, port: int, timeout: float = 300.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rf = self._sock.makefile("r", encoding="utf-8")
        self._wf = self._sock.makefile("w", encoding="utf-8")
        self.handshake: Handshake | None = None

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _round_trip(self, msg: dict) -> dict:
        self._wf.write(json.dumps(msg) + "\n")
        self._wf.flush()
        line = self._rf.readline()
        if not line:
            raise ProtocolError("server closed the connection")
        reply = json.loads(line)
        if reply.get("type") == "error":
            cls = EpisodeFault if reply.get("code") == "episode_infeasible" else ProtocolError
            raise cls(f"server error {reply.get('code')}: {reply.get('detail')}",
                      code=reply.get("code", ""), reply=reply)
        return reply

    def reset(self, scenario_id: str, seed: int) -> np.ndarray:
        reply = self._round_trip({"type": "reset", "scenario_id": scenario_id,
                                  "seed": int(seed)})
        if reply.get("type") != "obs":
            raise ProtocolError(f"expected obs after reset, got {reply.get('type')}",
                                reply=reply)
        self.handshake = Handshake(
            obs_dim=int(reply["obs_dim"]),
            action_dim=int(reply["action_dim"]),
            horizon=int(reply.get("horizon", 0)),
            feature_order=list(reply.get("feature_order", [])),
            window_start=int(reply.get("window_start", 0)))
        obs = np.asarray(reply["features"], dtype=np.float64)
        if obs.shape != (self.handshake.obs_dim,):
            raise ProtocolError("feature vector length disagrees with obs_dim")
        return obs

    def step(self, action: np.ndarray):
        if self.handshake is None:
            raise ProtocolError("reset before stepping")
        action = np.asarray(action, dtype=float).ravel()
        if action.shape != (self.handshake.action_dim,):
            raise ProtocolError(f"action must have {self.handshake.action_dim} entries")
        reply = self._round_trip({"type": "act",
                                  "action": [float(a) for a in action]})
        if reply.get("type") != "step":
            raise ProtocolError(f"expected step reply, got {reply.get('type')}",
                                reply=reply)
        obs = np.asarray(reply["obs"]["features"], dtype=np.float64)
        return obs, float(reply["reward"]), bool(reply["done"]), reply.get("info", {})


@dataclass
class SpawnedServer:
    process: subprocess.Popen
    host: str
    port: int

    def client(self, **kw) -> EnvClient:
        return EnvClient(self.host, self.port, **kw)

    def stop(self) -> None:
        if self.process.poll() is None:
            self.process.terminate()
            try:
                self.process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.process.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def spawn_server(scenario_refs: list[str], episode_steps: int | None = None,
                 python: str = sys.executable, startup_timeout: float = 120.0
                 ) -> SpawnedServer:
    """Launch `dcgridsim serve-env` on an ephemeral port and wait for its
    listening banner."""
    cmd = [python, "-m", "dcgridsim.cli", "serve-env", "--port", "0"]
    for ref in scenario_refs:
        cmd += ["--scenario", ref]
    if episode_steps:
        cmd += ["--episode-steps", str(episode_steps)]
    proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                            text=True, bufsize=1)
    deadline = time.time() + startup_timeout
    banner = ""
    while time.time() < deadline:
        banner = proc.stdout.readline()
        if "listening on" in banner:
            break
        if proc.poll() is not None:
            raise ProtocolError(
                f"server exited during startup: {proc.stderr.read()[:500]}")
    else:
        proc.terminate()
        raise ProtocolError("server did not start in time")
    host_port = banner.rsplit(" ", 1)[-1].strip()
    host, port = host_port.rsplit(":", 1)
    return SpawnedServer(process=proc, host=host, port=int(port))
