"""Run artifacts: per-step logs, metrics files, and summary tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .simloop import EpisodeRecord, MetricsReport

ACCEPTANCE_COLUMNS = ["t", "p_req_mw", "p_acc_mw", "kappa_mw", "mechanism",
                      "dispatch_cost", "max_line_utilization"]
EXECUTION_COLUMNS = ["t", "s_1a", "s_1b", "s_2", "p_ch_mw", "p_dis_mw", "soc_mwh",
                     "p_it_mw", "p_cool_mw", "balance_residual_mw"]
REWARD_COLUMNS = ["t", "reward", "workload", "rejection", "curtailment"]


def write_acceptance_log(episode: EpisodeRecord, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ACCEPTANCE_COLUMNS)
        for r in episode.steps:
            w.writerow([r.t, f"{r.p_req:.6f}", f"{r.p_acc:.6f}", f"{r.kappa:.6f}",
                        r.mechanism, f"{r.dispatch_cost:.4f}",
                        f"{r.max_line_utilization:.6f}"])


def write_execution_log(episode: EpisodeRecord, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EXECUTION_COLUMNS)
        for r in episode.steps:
            e = r.execution
            w.writerow([r.t, f"{e.s[0]:.6f}", f"{e.s[1]:.6f}", f"{e.s[2]:.6f}",
                        f"{e.p_ch:.6f}", f"{e.p_dis:.6f}", f"{r.e_bess_after:.6f}",
                        f"{e.p_it:.6f}", f"{e.p_cool:.6f}",
                        f"{e.balance_residual:.9f}"])


def write_reward_log(episode: EpisodeRecord, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REWARD_COLUMNS)
        for r in episode.steps:
            c = r.reward_components
            w.writerow([r.t, f"{r.reward:.9f}", f"{c['workload']:.9f}",
                        f"{c['rejection']:.9f}", f"{c['curtailment']:.9f}"])


def write_run(episode: EpisodeRecord, metrics: MetricsReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_acceptance_log(episode, out_dir / "acceptance_log.csv")
    write_execution_log(episode, out_dir / "execution_log.csv")
    write_reward_log(episode, out_dir / "reward_log.csv")
    (out_dir / "metrics.json").write_text(metrics.to_json())


def summarize_run(run_dir: Path) -> str:
    """Render the strategy-comparison style summary for one finished run
    and drop plot-ready series next to it."""
    metrics = json.loads((run_dir / "metrics.json").read_text())
    lag_a = metrics.get("completion_lag_1a_pct", [])
    lag_b = metrics.get("completion_lag_1b_pct", [])
    with (run_dir / "completion_lag.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lag_1a_pct", "lag_1b_pct"])
        for i, (a, b) in enumerate(zip(lag_a, lag_b), start=1):
            w.writerow([i, f"{a:.6f}", f"{b:.6f}"])
    dt = float(metrics.get("dt_hours", 0.25))
    cum = 0.0
    rows = []
    with (run_dir / "acceptance_log.csv").open() as fh:
        for rec in csv.DictReader(fh):
            cum += float(rec["kappa_mw"]) * dt
            rows.append((rec["t"], cum))
    with (run_dir / "cumulative_curtailment.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "cumulative_curtailed_mwh"])
        for t, c in rows:
            w.writerow([t, f"{c:.6f}"])
    d = metrics["delta"]
    lines = [
        "run summary",
        "-----------",
        f"steps:                  {metrics['steps']}" + ("  (aborted)" if metrics["aborted"] else ""),
        f"cumulative reward:      {metrics['cumulative_reward']:.3f}",
        f"mean curtailment:       {metrics['mean_kappa_mw']:.3f} MW",
        f"curtailment frequency:  {metrics['curtailment_frequency_pct']:.2f} %",
        f"curtailed energy:       {metrics['curtailed_energy_mwh']:.2f} MWh",
        f"workload delivered:     1a {metrics['w_1a_pct']:.1f} %   1b {metrics['w_1b_pct']:.1f} %",
        f"BESS idle fraction:     {metrics['bess_idle_fraction_pct']:.1f} %",
        f"terminal SoC deviation: {metrics['terminal_soc_deviation_mwh']:.2f} MWh",
        "",
        "off-peak minus peak:",
        f"  p_req {d['p_req']:+.1f} MW   kappa {d['kappa']:+.2f} MW",
        f"  s_1a {d['s_1a']:+.3f}   s_1b {d['s_1b']:+.3f}   s_2 {d['s_2']:+.3f}",
    ]
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.txt").write_text(text)
    return text
