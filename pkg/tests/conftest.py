import numpy as np
import pytest

from dcgridsim.scenario import (AidcConfig, BessSpec, ClusterSpec, ExogenousTrace,
                                Generator, Line, NetworkCase, Scenario,
                                TraceProfile, TsoConfig, synth_traces)


@pytest.fixture(scope="session")
def table1_aidc() -> AidcConfig:
    clusters = (
        ClusterSpec("1a", "frontier", 250_000, 550.0, 0.30, 0.94),
        ClusterSpec("1b", "batch", 120_000, 220.0, 0.25, 0.94),
        ClusterSpec("2", "inference", 160_000, 330.0, 0.20, 0.0),
    )
    bess = BessSpec(200.0, 30.0, 300.0, 0.95, 0.95, 0.9, 0.5)
    return AidcConfig(clusters, 0.10, 0.95, bess,
                      m_1a=100.0, m_1b=50.0, alpha_w=0.01, alpha_rej=3.0,
                      alpha_kappa=0.005, tracking_weight=100.0)


def make_toy3(line_ratings=(2000.0, 2000.0, 2000.0), gen_ramp=4000.0,
              cheap_max=3000.0) -> NetworkCase:
    """Triangle toy: cheap unit at bus 1, dear unit at bus 3, AIDC at bus 2."""
    return NetworkCase(
        buses=(1, 2, 3),
        lines=(Line(1, 2, 10.0, line_ratings[0]),
               Line(2, 3, 10.0, line_ratings[1]),
               Line(1, 3, 10.0, line_ratings[2])),
        generators=(Generator(1, 0.0, cheap_max, 10.0, gen_ramp, "cheap"),
                    Generator(3, 0.0, 2000.0, 100.0, gen_ramp, "dear")),
        ref_bus=1, aidc_bus=2,
        load_share={1: 0.2, 2: 0.3, 3: 0.5}, mva_base=100.0)


def make_toy4() -> NetworkCase:
    """Four buses in a loop plus one chord; AIDC at bus 3."""
    return NetworkCase(
        buses=(1, 2, 3, 4),
        lines=(Line(1, 2, 12.0, 1500.0), Line(2, 3, 8.0, 1500.0),
               Line(3, 4, 8.0, 1500.0), Line(4, 1, 12.0, 1500.0),
               Line(2, 4, 6.0, 1200.0)),
        generators=(Generator(1, 0.0, 2500.0, 12.0, 4000.0, "cheap"),
                    Generator(4, 0.0, 1800.0, 90.0, 4000.0, "dear")),
        ref_bus=1, aidc_bus=3,
        load_share={1: 0.1, 2: 0.35, 3: 0.2, 4: 0.35}, mva_base=100.0)


def flat_trace(case: NetworkCase, steps=8, demand=1000.0, d_inf=0.5,
               dt=0.25) -> ExogenousTrace:
    trace = ExogenousTrace(dt, steps,
                           price=np.full(steps, 80.0),
                           demand=np.full(steps, float(demand)),
                           inference=np.full(steps, float(d_inf)))
    return trace.with_shares(case)


@pytest.fixture
def toy3():
    return make_toy3()


@pytest.fixture
def toy3_scenario(table1_aidc):
    case = make_toy3()
    trace = flat_trace(case, steps=8, demand=1000.0)
    tso_cfg = TsoConfig(1.0, 0.07, 1e5, 1.0, 150.0)
    return Scenario("toy3", case, table1_aidc, tso_cfg, trace, seed=0)


@pytest.fixture(scope="session")
def default_week():
    from dcgridsim.scenario import load_bundled_scenario
    return load_bundled_scenario("default_week")


@pytest.fixture(scope="session")
def stress_day():
    from dcgridsim.scenario import load_bundled_scenario
    return load_bundled_scenario("stress_day")
