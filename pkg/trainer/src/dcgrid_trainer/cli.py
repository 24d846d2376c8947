"""Trainer command line: train against a server, evaluate exported weights."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .client import EnvClient, spawn_server
from .train import TrainerConfig, evaluate_weights_actions, train


def _cmd_train(args) -> int:
    cfg = TrainerConfig(
        algorithm=args.algorithm, episodes=args.episodes, seed=args.seed,
        scenario_id=args.scenario_id, host=args.host, port=args.port,
        warmup_steps=args.warmup_steps, updates_per_step=args.updates_per_step)
    spawned = None
    try:
        if args.spawn:
            spawned = spawn_server(args.spawn, episode_steps=args.episode_steps)
            cfg.host, cfg.port = spawned.host, spawned.port

        def progress(ep, reward):
            if ep % max(1, args.episodes // 20) == 0:
                print(f"episode {ep}/{args.episodes}: reward {reward:.2f}", flush=True)

        result = train(cfg, progress=progress)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result.export_weights(out / "weights.json")
        result.log.write_csv(out / "training_log.csv")
        tail = result.log.episode_rewards[-min(20, len(result.log.episode_rewards)):]
        print(f"trained {cfg.algorithm} for {cfg.episodes} episodes in "
              f"{result.log.wall_seconds:.0f}s; last-20 mean reward "
              f"{sum(tail) / len(tail):.2f}")
        return 0
    finally:
        if spawned is not None:
            spawned.stop()


def _cmd_evaluate(args) -> int:
    import torch
    from .nets import DeterministicActor, GaussianActor

    weights = json.loads(Path(args.weights).read_text())
    sizes = [l["rows"] for l in weights["layers"]]
    obs_dim = weights["layers"][0]["cols"]
    actor = GaussianActor(obs_dim, sizes[-1], hidden=tuple(sizes[:-1]))
    linears = [m for m in actor.trunk if isinstance(m, torch.nn.Linear)]
    linears.append(actor.mean_head)
    with torch.no_grad():
        for lin, spec in zip(linears, weights["layers"]):
            lin.weight.copy_(torch.tensor(spec["w"]).reshape(spec["rows"], spec["cols"]))
            lin.bias.copy_(torch.tensor(spec["b"]))
    spawned = None
    try:
        if args.spawn:
            spawned = spawn_server(args.spawn)
            host, port = spawned.host, spawned.port
        else:
            host, port = args.host, args.port
        with EnvClient(host, port) as client:
            report = evaluate_weights_actions(actor, client, args.scenario_id,
                                              args.seed,
                                              train_scenario_id=args.train_scenario)
        if report.overlap_warning:
            print(f"warning: {report.overlap_warning}", file=sys.stderr)
        print(json.dumps(report.__dict__, indent=2))
        return 0
    finally:
        if spawned is not None:
            spawned.stop()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcgrid-trainer")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a policy against an env server")
    tr.add_argument("--algorithm", default="sac", choices=["sac", "td3", "ddpg"])
    tr.add_argument("--scenario-id", required=True)
    tr.add_argument("--episodes", type=int, default=200)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--host", default="127.0.0.1")
    tr.add_argument("--port", type=int, default=0)
    tr.add_argument("--spawn", action="append", default=None,
                    help="spawn a local server for these scenario refs")
    tr.add_argument("--episode-steps", type=int, default=None)
    tr.add_argument("--warmup-steps", type=int, default=500)
    tr.add_argument("--updates-per-step", type=int, default=1)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("evaluate", help="deterministically evaluate exported weights")
    ev.add_argument("--weights", required=True)
    ev.add_argument("--scenario-id", required=True)
    ev.add_argument("--train-scenario", default="",
                    help="training scenario id, for the overlap guard")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--host", default="127.0.0.1")
    ev.add_argument("--port", type=int, default=0)
    ev.add_argument("--spawn", action="append", default=None)
    ev.set_defaults(func=_cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
