"""Co-simulation of a gigawatt-scale AI data center and a transmission
operator interacting through a request / acceptance / execution protocol
with an explicit curtailment variable."""

from .scenario import (AidcConfig, BessSpec, ClusterSpec, ExogenousTrace,
                       NetworkCase, Scenario, TraceProfile, TsoConfig,
                       load_bundled_scenario, load_network_case, load_scenario,
                       load_traces, synth_traces, validate_scenario)
from .plant import (AidcState, ExecutionResult, PlanningAction, execute_step,
                    facility_power, feasibility_check, idle_floor, it_power,
                    soc_step, terminal_shortfall)
from .policies import (FixedBufferPolicy, HeuristicPolicy, MlpPolicy,
                       Observation, ObsNorm, PolicyWeights, action_to_request,
                       build_observation, load_weights, mlp_policy_eval,
                       save_weights)
from .tso import (AcceptanceOutcome, BaselineDispatch, ProtectionTerms,
                  PtdfMatrix, TsoState, check_robust_feasibility, compute_ptdf,
                  protection_terms, robust_acceptance_step,
                  solve_baseline_dispatch)
from .simloop import (EpisodeEngine, EpisodeRecord, MetricsReport, StepRecord,
                      compute_metrics, run_episode, step_reward, sweep)

__version__ = "0.1.0"
