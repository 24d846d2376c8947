import json
from pathlib import Path

import numpy as np
import pytest

from dcgridsim import cli, policies
from dcgridsim.policies import DenseLayer, PolicyWeights, save_weights


@pytest.fixture
def small_scenario_file(tmp_path):
    """A 1-day scenario on the bundled case, kept cheap for CLI runs."""
    obj = json.loads(
        (Path(__file__).resolve().parents[1] / "src" / "dcgridsim" / "data"
         / "stress_day.json").read_text())
    obj["name"] = "cli_day"
    obj["trace"]["steps"] = 48
    obj["trace"]["synth"]["demand_mean"] = 4600.0
    obj["case"] = "bundled:ieee39_case.json"
    f = tmp_path / "cli_day.json"
    f.write_text(json.dumps(obj))
    return f


def test_simulate_writes_run_artifacts(tmp_path, small_scenario_file):
    out = tmp_path / "run1"
    rc = cli.main(["simulate", "--scenario", str(small_scenario_file),
                   "--policy", "heuristic", "--out", str(out)])
    assert rc == 0
    for name in ("acceptance_log.csv", "execution_log.csv", "reward_log.csv",
                 "metrics.json"):
        assert (out / name).exists()
    header = (out / "acceptance_log.csv").read_text().splitlines()[0]
    assert header == "t,p_req_mw,p_acc_mw,kappa_mw,mechanism,dispatch_cost,max_line_utilization"
    header = (out / "execution_log.csv").read_text().splitlines()[0]
    assert header == ("t,s_1a,s_1b,s_2,p_ch_mw,p_dis_mw,soc_mwh,p_it_mw,"
                      "p_cool_mw,balance_residual_mw")
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["steps"] == 48


def test_simulate_with_mlp_weights(tmp_path, small_scenario_file):
    rng = np.random.default_rng(13)
    layers = (DenseLayer(8, 13, 0.1 * rng.normal(size=(8, 13)), np.zeros(8), "relu"),
              DenseLayer(5, 8, 0.1 * rng.normal(size=(5, 8)), np.zeros(5), "linear"))
    wpath = tmp_path / "w.json"
    save_weights(PolicyWeights(1, layers, "tanh01", policies.FEATURE_ORDER), wpath)
    out = tmp_path / "run2"
    rc = cli.main(["simulate", "--scenario", str(small_scenario_file),
                   "--policy", f"mlp:{wpath}", "--out", str(out)])
    assert rc == 0
    assert (out / "metrics.json").exists()


def test_report_emits_summary(tmp_path, small_scenario_file):
    out = tmp_path / "run3"
    assert cli.main(["simulate", "--scenario", str(small_scenario_file),
                     "--policy", "fixed-buffer", "--out", str(out)]) == 0
    assert cli.main(["report", "--run", str(out)]) == 0
    assert (out / "summary.txt").exists()
    assert (out / "completion_lag.csv").exists()
    assert (out / "cumulative_curtailment.csv").exists()
    assert "curtailment frequency" in (out / "summary.txt").read_text()


def test_sweep_writes_grid_csv(tmp_path, small_scenario_file):
    out = tmp_path / "sweep"
    rc = cli.main(["sweep", "--scenario", str(small_scenario_file),
                   "--gamma", "0,2", "--eps", "0.04,0.07",
                   "--policy", "heuristic", "--out", str(out)])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "gamma,eps,curtail_freq,status"
    assert len(lines) == 5


def test_baseline_command(tmp_path, small_scenario_file):
    out = tmp_path / "base"
    rc = cli.main(["baseline", "--scenario", str(small_scenario_file),
                   "--out", str(out)])
    assert rc == 0
    lines = (out / "baseline_dispatch.csv").read_text().splitlines()
    assert len(lines) == 49


def test_missing_scenario_is_reported(tmp_path, capsys):
    rc = cli.main(["simulate", "--scenario", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert json.loads(err.strip())["error"] in ("missing_file", "invalid_input")


def test_bad_policy_spec(tmp_path, small_scenario_file, capsys):
    rc = cli.main(["simulate", "--scenario", str(small_scenario_file),
                   "--policy", "nonsense", "--out", str(tmp_path / "o")])
    assert rc == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "bad_argument"


def test_serve_env_stdio_session(tmp_path, small_scenario_file):
    import io
    from dcgridsim import envserver
    from dcgridsim.scenario import load_scenario
    scn = load_scenario(small_scenario_file)
    server = envserver.EnvServer({scn.name: scn})
    msgs = [json.dumps({"type": "reset", "scenario_id": scn.name, "seed": 0}),
            json.dumps({"type": "act", "action": [1, 1, 1, 0, 0]}),
            "garbage"]
    out = io.StringIO()
    envserver.serve_stdio(server, io.StringIO("\n".join(msgs) + "\n"), out)
    replies = [json.loads(line) for line in out.getvalue().splitlines()]
    assert replies[0]["type"] == "obs"
    assert replies[1]["type"] == "step"
    assert replies[2]["type"] == "error"
