"""Command-line entry points: simulate, baseline, sweep, serve-env, report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import envserver, policies, reports, simloop, tso
from .scenario import (CaseFormatError, InvariantError, Scenario, bundled_path,
                       load_scenario)


def _fail(code: str, detail: str, exit_code: int = 3) -> int:
    print(json.dumps({"error": code, "detail": detail}), file=sys.stderr)
    return exit_code


def _load_scenario_arg(ref: str) -> Scenario:
    if ref.startswith("bundled:"):
        return load_scenario(bundled_path(ref[8:] if ref.endswith(".json")
                                          else ref[8:] + ".json"))
    return load_scenario(ref)


def _make_policy(spec: str, scenario: Scenario):
    if spec == "fixed-buffer":
        return policies.FixedBufferPolicy()
    if spec == "heuristic":
        stats = policies.DemandStats.from_trace(scenario.trace)
        return policies.HeuristicPolicy(scenario.aidc, stats)
    if spec.startswith("mlp:"):
        weights = policies.load_weights(spec[4:])
        norm = policies.ObsNorm.for_scenario(
            scenario.aidc, scenario.trace.steps, scenario.trace.dt_hours)
        return policies.MlpPolicy(weights, norm)
    raise ValueError(f"unknown policy {spec!r}; use fixed-buffer, heuristic or mlp:PATH")


def _cmd_simulate(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    policy = _make_policy(args.policy, scenario)
    episode = simloop.run_episode(scenario, policy)
    metrics = simloop.compute_metrics(episode, scenario.trace)
    out = Path(args.out)
    reports.write_run(episode, metrics, out)
    print(f"wrote {out}/: {len(episode.steps)} steps, "
          f"curtailment {metrics.curtailment_frequency_pct:.2f}%, "
          f"reward {metrics.cumulative_reward:.2f}")
    if episode.aborted:
        return _fail("episode_infeasible", episode.abort_reason)
    return 0


def _cmd_baseline(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    case = scenario.effective_case()
    dispatch = tso.solve_baseline_dispatch(case, scenario.trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "baseline_dispatch.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"g_{g.bus}" for g in case.generators] + ["cost"])
        for t in range(dispatch.g.shape[0]):
            w.writerow([t + 1] + [f"{v:.4f}" for v in dispatch.g[t]]
                       + [f"{dispatch.per_step_cost[t]:.4f}"])
    print(f"baseline cost {dispatch.cost:.2f} over {dispatch.g.shape[0]} steps")
    return 0


def _cmd_sweep(args) -> int:
    scenario = _load_scenario_arg(args.scenario)
    gammas = [float(x) for x in args.gamma.split(",")]
    epsilons = [float(x) for x in args.eps.split(",")]
    report = simloop.sweep(scenario, gammas, epsilons,
                           lambda scn: _make_policy(args.policy, scn))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(report.to_csv())
    n_inf = sum(1 for c in report.cells if c.status != simloop.STATUS_OK)
    print(f"wrote {out}/sweep.csv: {len(report.cells)} cells, {n_inf} infeasible")
    return 0


def _cmd_serve_env(args) -> int:
    registry = {}
    for ref in args.scenario:
        scn = _load_scenario_arg(ref)
        registry[scn.name] = scn
    server = envserver.EnvServer(registry, episode_steps=args.episode_steps)
    if args.stdio:
        envserver.serve_stdio(server)
    else:
        envserver.serve_tcp(server, port=args.port,
                            max_sessions=args.max_sessions)
    return 0


def _cmd_report(args) -> int:
    text = reports.summarize_run(Path(args.run))
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dcgridsim",
        description="Data-center / grid-operator co-simulation under connect-and-manage")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop episode")
    sim.add_argument("--scenario", required=True,
                     help="scenario file path or bundled:NAME")
    sim.add_argument("--policy", default="heuristic",
                     help="fixed-buffer | heuristic | mlp:WEIGHTS.json")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    base = sub.add_parser("baseline", help="solve the AIDC-free baseline dispatch")
    base.add_argument("--scenario", required=True)
    base.add_argument("--out", required=True)
    base.set_defaults(func=_cmd_baseline)

    sw = sub.add_parser("sweep", help="curtailment frequency over a robustness grid")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--gamma", required=True, help="comma list of budget values")
    sw.add_argument("--eps", required=True, help="comma list of deviation ratios")
    sw.add_argument("--policy", default="heuristic")
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=_cmd_sweep)

    srv = sub.add_parser("serve-env", help="serve the training wire protocol")
    srv.add_argument("--scenario", action="append", required=True,
                     help="repeatable; scenario file or bundled:NAME")
    group = srv.add_mutually_exclusive_group()
    group.add_argument("--port", type=int, default=0, help="TCP port (0 = ephemeral)")
    group.add_argument("--stdio", action="store_true", help="serve over stdio")
    srv.add_argument("--seed", type=int, default=0)
    srv.add_argument("--episode-steps", type=int, default=None)
    srv.add_argument("--max-sessions", type=int, default=None)
    srv.set_defaults(func=_cmd_serve_env)

    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("--run", required=True)
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CaseFormatError, InvariantError) as exc:
        return _fail("invalid_input", str(exc), 2)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), 2)
    except (ValueError, policies.WeightsFormatError) as exc:
        return _fail("bad_argument", str(exc), 2)
    except tso.GridInfeasibleError as exc:
        return _fail("infeasible", str(exc), 3)


if __name__ == "__main__":
    sys.exit(main())
