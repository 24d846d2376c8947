"""Scenario data model and ingestion.

Everything a simulation run needs lives here: the transmission case, the
data-center and battery configuration, the operator's robustness knobs,
exogenous time series, and the seeds that make a run reproducible. All
values are plain frozen dataclasses; after validation they are treated
as immutable and can be shared across concurrent evaluations.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ["timestamp", "price_aud_mwh", "demand_mw", "inference_frac"]


class CaseFormatError(Exception):
    """File does not parse against the documented schema."""


class InvariantError(Exception):
    """One or more validation invariants failed.

    The message lists every failed check, one per line.
    """

    def __init__(self, entries: list[str]):
        self.entries = entries
        super().__init__("\n".join(entries))


# ---------------------------------------------------------------------------
# network case
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    b_pu: float          # susceptance, per-unit on the case MVA base
    f_max_mw: float      # thermal rating


@dataclass(frozen=True)
class Generator:
    bus: int
    g_min_mw: float
    g_max_mw: float
    cost: float          # marginal cost, AUD/MWh
    ramp_mw_per_h: float
    tech: str


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    ref_bus: int
    aidc_bus: int
    load_share: dict[int, float]
    mva_base: float

    def bus_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.buses)}

    def load_share_vector(self) -> np.ndarray:
        idx = self.bus_index()
        v = np.zeros(len(self.buses))
        for bus, frac in self.load_share.items():
            v[idx[bus]] = frac
        return v

    def with_scaled_ratings(self, scale: float) -> "NetworkCase":
        lines = tuple(replace(ln, f_max_mw=ln.f_max_mw * scale) for ln in self.lines)
        return replace(self, lines=lines)

    def validate(self) -> list[str]:
        errs = []
        bus_set = set(self.buses)
        if len(bus_set) != len(self.buses):
            errs.append("duplicate bus ids")
        if self.mva_base <= 0:
            errs.append(f"mva_base must be positive, got {self.mva_base}")
        if self.ref_bus not in bus_set:
            errs.append(f"ref_bus {self.ref_bus} is not a bus")
        if self.aidc_bus not in bus_set:
            errs.append(f"aidc_bus {self.aidc_bus} is not a bus")
        for i, ln in enumerate(self.lines):
            if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
                errs.append(f"line {i} ({ln.from_bus}-{ln.to_bus}) references a nonexistent bus")
            if ln.f_max_mw <= 0:
                errs.append(f"line {i} ({ln.from_bus}-{ln.to_bus}) has nonpositive rating")
            if ln.b_pu <= 0:
                errs.append(f"line {i} ({ln.from_bus}-{ln.to_bus}) has nonpositive susceptance")
        for i, g in enumerate(self.generators):
            if g.bus not in bus_set:
                errs.append(f"generator {i} sits on nonexistent bus {g.bus}")
            if g.g_min_mw > g.g_max_mw:
                errs.append(f"generator {i} has g_min {g.g_min_mw} > g_max {g.g_max_mw}")
            if g.g_min_mw < 0 or g.ramp_mw_per_h <= 0:
                errs.append(f"generator {i} has negative g_min or nonpositive ramp")
        for bus in self.load_share:
            if bus not in bus_set:
                errs.append(f"load share given for nonexistent bus {bus}")
            elif self.load_share[bus] < 0:
                errs.append(f"negative load share at bus {bus}")
        total = sum(self.load_share.values())
        if abs(total - 1.0) > 1e-9:
            errs.append(f"load shares sum to {total:.12f}, expected 1")
        if not self._connected():
            errs.append("network graph is not connected")
        return errs

    def _connected(self) -> bool:
        if not self.buses:
            return False
        adj: dict[int, list[int]] = {b: [] for b in self.buses}
        for ln in self.lines:
            if ln.from_bus in adj and ln.to_bus in adj:
                adj[ln.from_bus].append(ln.to_bus)
                adj[ln.to_bus].append(ln.from_bus)
        seen = {self.buses[0]}
        stack = [self.buses[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.buses)


def case_to_json_text(case: NetworkCase) -> str:
    """Canonical serialized form; load -> dump round-trips bundled files."""
    obj = {
        "mva_base": case.mva_base,
        "ref_bus": case.ref_bus,
        "aidc_bus": case.aidc_bus,
        "buses": list(case.buses),
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "b_pu": ln.b_pu, "f_max_mw": ln.f_max_mw}
            for ln in case.lines
        ],
        "generators": [
            {
                "bus": g.bus,
                "g_min_mw": g.g_min_mw,
                "g_max_mw": g.g_max_mw,
                "cost": g.cost,
                "ramp_mw_per_h": g.ramp_mw_per_h,
                "tech": g.tech,
            }
            for g in case.generators
        ],
        "load_share": {str(b): f for b, f in sorted(case.load_share.items())},
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_network_case(path: str | Path) -> NetworkCase:
    """Parse and validate a case file against the documented schema.

    Raises CaseFormatError with field diagnostics on parse problems and
    InvariantError listing every failed check on validation problems.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise CaseFormatError(f"{path}: {exc}") from exc

    def need(obj, key, where):
        if key not in obj:
            raise CaseFormatError(f"{path}: missing field {key!r} in {where}")
        return obj[key]

    try:
        lines = tuple(
            Line(int(need(ln, "from", f"lines[{i}]")), int(need(ln, "to", f"lines[{i}]")),
                 float(need(ln, "b_pu", f"lines[{i}]")), float(need(ln, "f_max_mw", f"lines[{i}]")))
            for i, ln in enumerate(need(raw, "lines", "case"))
        )
        gens = tuple(
            Generator(int(need(g, "bus", f"generators[{i}]")),
                      float(need(g, "g_min_mw", f"generators[{i}]")),
                      float(need(g, "g_max_mw", f"generators[{i}]")),
                      float(need(g, "cost", f"generators[{i}]")),
                      float(need(g, "ramp_mw_per_h", f"generators[{i}]")),
                      str(g.get("tech", "unknown")))
            for i, g in enumerate(need(raw, "generators", "case"))
        )
        case = NetworkCase(
            buses=tuple(int(b) for b in need(raw, "buses", "case")),
            lines=lines,
            generators=gens,
            ref_bus=int(need(raw, "ref_bus", "case")),
            aidc_bus=int(need(raw, "aidc_bus", "case")),
            load_share={int(b): float(f) for b, f in need(raw, "load_share", "case").items()},
            mva_base=float(need(raw, "mva_base", "case")),
        )
    except (TypeError, ValueError) as exc:
        raise CaseFormatError(f"{path}: malformed value: {exc}") from exc
    errs = case.validate()
    if errs:
        raise InvariantError(errs)
    return case


# ---------------------------------------------------------------------------
# AIDC / BESS / TSO configuration
# ---------------------------------------------------------------------------

CLUSTER_IDS = ("1a", "1b", "2")


@dataclass(frozen=True)
class ClusterSpec:
    id: str
    role: str                 # frontier | batch | inference
    accelerators: int         # informational only
    p_peak_mw: float
    idle_ratio: float
    workload_target: float    # fraction of horizon-peak throughput; unused for inference

    @property
    def p_idle_mw(self) -> float:
        return self.idle_ratio * self.p_peak_mw

    @property
    def p_span_mw(self) -> float:
        return self.p_peak_mw - self.p_idle_mw


@dataclass(frozen=True)
class BessSpec:
    p_max_mw: float
    e_min_mwh: float
    e_max_mwh: float
    eta_ch: float
    eta_dis: float
    soc_init_fraction: float
    cycle_cost: float         # AUD/MWh moved

    @property
    def e_init_mwh(self) -> float:
        return self.soc_init_fraction * self.e_max_mwh


@dataclass(frozen=True)
class AidcConfig:
    clusters: tuple[ClusterSpec, ClusterSpec, ClusterSpec]
    cooling_overhead: float   # PUE - 1
    ipcs_efficiency: float
    bess: BessSpec
    m_1a: float
    m_1b: float
    alpha_w: float
    alpha_rej: float
    alpha_kappa: float
    tracking_weight: float

    def cluster(self, cid: str) -> ClusterSpec:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def validate(self) -> list[str]:
        errs = []
        ids = tuple(c.id for c in self.clusters)
        if ids != CLUSTER_IDS:
            errs.append(f"cluster ids must be {CLUSTER_IDS}, got {ids}")
        for c in self.clusters:
            if not 0 <= c.idle_ratio < 1:
                errs.append(f"cluster {c.id}: idle_ratio {c.idle_ratio} outside [0,1)")
            if c.p_peak_mw <= 0:
                errs.append(f"cluster {c.id}: nonpositive peak power")
            if c.id in ("1a", "1b") and not 0 <= c.workload_target <= 1:
                errs.append(f"cluster {c.id}: workload target {c.workload_target} outside [0,1]")
        if self.cooling_overhead < 0:
            errs.append("cooling overhead must be >= 0")
        if not 0 < self.ipcs_efficiency <= 1:
            errs.append(f"ipcs_efficiency {self.ipcs_efficiency} outside (0,1]")
        if not self.m_1a > self.m_1b > 0:
            errs.append(f"penalty ordering m_1a > m_1b > 0 violated: {self.m_1a}, {self.m_1b}")
        b = self.bess
        if not 0 <= b.e_min_mwh < b.e_max_mwh:
            errs.append("BESS energy bounds must satisfy 0 <= e_min < e_max")
        if not (0 < b.eta_ch <= 1 and 0 < b.eta_dis <= 1):
            errs.append("BESS efficiencies must lie in (0,1]")
        if not b.e_min_mwh <= b.e_init_mwh <= b.e_max_mwh:
            errs.append(f"initial SoC {b.e_init_mwh} MWh outside [{b.e_min_mwh}, {b.e_max_mwh}]")
        if b.p_max_mw <= 0:
            errs.append("BESS power rating must be positive")
        return errs


@dataclass(frozen=True)
class TsoConfig:
    gamma_u: float            # uncertainty budget, 0 <= gamma_u <= |buses|, may be fractional
    epsilon: float            # max single-bus deviation ratio
    kappa_weight: float       # curtailment penalty in the acceptance objective
    deviation_weight: float   # baseline-deviation penalty
    pcc_ramp_mw: float        # max upward step of the accepted exchange
    participation_rule: str = "gmax"   # gmax | uniform

    def validate(self, case: NetworkCase | None = None) -> list[str]:
        errs = []
        if self.gamma_u < 0:
            errs.append(f"gamma_u must be >= 0, got {self.gamma_u}")
        if not 0 < self.epsilon < 1:
            errs.append(f"epsilon {self.epsilon} outside (0,1)")
        if self.pcc_ramp_mw <= 0:
            errs.append("pcc_ramp_mw must be positive")
        if self.participation_rule not in ("gmax", "uniform"):
            errs.append(f"unknown participation rule {self.participation_rule!r}")
        if case is not None:
            max_cost = max(g.cost for g in case.generators)
            if not self.kappa_weight > max_cost:
                errs.append(
                    f"weight ordering violated: kappa_weight {self.kappa_weight} "
                    f"<= max generator cost {max_cost}")
            if not max_cost > self.deviation_weight:
                errs.append(
                    f"weight ordering violated: max generator cost {max_cost} "
                    f"<= deviation_weight {self.deviation_weight}")
            if self.gamma_u > len(case.buses):
                errs.append(f"gamma_u {self.gamma_u} exceeds bus count {len(case.buses)}")
        return errs


# ---------------------------------------------------------------------------
# exogenous traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExogenousTrace:
    dt_hours: float
    steps: int
    price: np.ndarray          # AUD/MWh, length T
    demand: np.ndarray         # system demand MW, length T
    inference: np.ndarray      # normalized inference arrivals in [0,1], length T
    bus_demand: np.ndarray | None = None   # T x |buses| forecast, bound from load shares

    def with_shares(self, case: NetworkCase) -> "ExogenousTrace":
        shares = case.load_share_vector()
        return replace(self, bus_demand=np.outer(self.demand, shares))

    def window(self, start: int, steps: int) -> "ExogenousTrace":
        end = start + steps
        if start < 0 or end > self.steps:
            raise ValueError(f"window [{start}, {end}) outside trace of {self.steps} steps")
        bd = self.bus_demand[start:end] if self.bus_demand is not None else None
        return ExogenousTrace(self.dt_hours, steps, self.price[start:end],
                              self.demand[start:end], self.inference[start:end], bd)

    def validate(self) -> list[str]:
        errs = []
        if self.dt_hours <= 0:
            errs.append("dt_hours must be positive")
        for name, series in (("price", self.price), ("demand", self.demand),
                             ("inference", self.inference)):
            if len(series) != self.steps:
                errs.append(f"{name} series has {len(series)} entries, expected {self.steps}")
        if np.any(self.inference < 0) or np.any(self.inference > 1):
            errs.append("inference series leaves [0,1]")
        if np.any(self.demand < 0):
            errs.append("negative system demand")
        if self.bus_demand is not None:
            if self.bus_demand.shape[0] != self.steps:
                errs.append("bus_demand row count differs from steps")
            if np.any(self.bus_demand < 0):
                errs.append("negative per-bus forecast")
        return errs


def load_traces(path: str | Path, dt_hours: float, steps: int) -> ExogenousTrace:
    """Read the documented trace CSV and cut it to exactly `steps` rows.

    Column contract (header mandatory, in order):
    timestamp, price_aud_mwh, demand_mw, inference_frac
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise CaseFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        price, demand, inference = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if len(price) >= steps:
                break
            for col, sink in (("price_aud_mwh", price), ("demand_mw", demand),
                              ("inference_frac", inference)):
                try:
                    sink.append(float(row[col]))
                except (TypeError, ValueError):
                    raise CaseFormatError(
                        f"{path}: non-numeric value {row[col]!r} in column {col}, line {rownum}")
    if len(price) < steps:
        raise CaseFormatError(f"{path}: {len(price)} data rows, need at least {steps}")
    trace = ExogenousTrace(dt_hours, steps, np.array(price), np.array(demand),
                           np.array(inference))
    errs = trace.validate()
    if errs:
        raise InvariantError(errs)
    return trace


@dataclass(frozen=True)
class TraceProfile:
    """Diurnal profile parameters for synthetic traces."""

    dt_hours: float = 0.25
    steps: int = 672
    price_mean: float = 90.0
    price_amplitude: float = 40.0
    price_noise: float = 6.0
    demand_mean: float = 4600.0
    demand_amplitude: float = 900.0
    demand_noise: float = 60.0
    demand_peak_hour: float = 17.5
    inference_peak: float = 0.55
    inference_trough: float = 0.15
    inference_peak_hour: float = 13.5
    inference_noise: float = 0.01


def synth_traces(profile: TraceProfile, seed: int) -> ExogenousTrace:
    """Deterministic synthetic week-style traces for a fixed seed."""
    if profile.steps <= 0:
        raise ValueError("horizon must be positive")
    if profile.demand_amplitude < 0 or profile.price_amplitude < 0:
        raise ValueError("amplitudes must be nonnegative")
    rng = np.random.default_rng(seed)
    hours = np.arange(profile.steps) * profile.dt_hours
    day_phase = 2 * np.pi * (hours % 24.0) / 24.0

    def diurnal(mean, amp, peak_hour, noise):
        shape = np.cos(day_phase - 2 * np.pi * peak_hour / 24.0)
        return mean + amp * shape + noise * rng.standard_normal(profile.steps)

    price = diurnal(profile.price_mean, profile.price_amplitude,
                    profile.demand_peak_hour + 0.5, profile.price_noise)
    demand = diurnal(profile.demand_mean, profile.demand_amplitude,
                     profile.demand_peak_hour, profile.demand_noise)
    mid = 0.5 * (profile.inference_peak + profile.inference_trough)
    amp = 0.5 * (profile.inference_peak - profile.inference_trough)
    inference = diurnal(mid, amp, profile.inference_peak_hour, profile.inference_noise)
    trace = ExogenousTrace(profile.dt_hours, profile.steps,
                           np.maximum(price, 0.0), np.maximum(demand, 0.0),
                           np.clip(inference, 0.0, 1.0))
    errs = trace.validate()
    if errs:
        raise InvariantError(errs)
    return trace


# ---------------------------------------------------------------------------
# scenario container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    case: NetworkCase
    aidc: AidcConfig
    tso: TsoConfig
    trace: ExogenousTrace
    seed: int
    line_rating_scale: float = 1.0

    def effective_case(self) -> NetworkCase:
        return self.case.with_scaled_ratings(self.line_rating_scale)

    def with_tso(self, **kwargs) -> "Scenario":
        return replace(self, tso=replace(self.tso, **kwargs))


@dataclass
class ValidationReport:
    entries: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.entries

    def __str__(self) -> str:
        return "scenario valid" if self.ok else "\n".join(self.entries)


def validate_scenario(s: Scenario) -> ValidationReport:
    """Every violated invariant becomes one report entry; empty report
    means the scenario is runnable."""
    entries = []
    entries += s.case.validate()
    entries += s.aidc.validate()
    entries += s.tso.validate(s.case)
    entries += s.trace.validate()
    if s.line_rating_scale <= 0:
        entries.append("line_rating_scale must be positive")
    if s.trace.bus_demand is None:
        entries.append("trace is not bound to per-bus load shares")
    else:
        row_sums = s.trace.bus_demand.sum(axis=1)
        gap = float(np.max(np.abs(row_sums - s.trace.demand), initial=0.0))
        if gap > 1e-6:
            entries.append(f"per-bus forecasts disagree with system demand by {gap:.3e} MW")
    return ValidationReport(entries)


def _trace_from_spec(spec: dict, base_dir: Path, seed: int) -> ExogenousTrace:
    dt = float(spec.get("dt_hours", 0.25))
    steps = int(spec["steps"])
    if "csv" in spec:
        return load_traces(base_dir / spec["csv"], dt, steps)
    if "synth" in spec:
        prof = TraceProfile(dt_hours=dt, steps=steps, **spec["synth"])
        return synth_traces(prof, int(spec.get("seed", seed)))
    raise CaseFormatError("trace spec needs either 'csv' or 'synth'")


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, resolving case/trace references relative to it.

    The returned scenario has been validated; an InvariantError carries
    the full list of violations otherwise.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    base = path.parent
    case_ref = raw["case"]
    case_path = bundled_path(case_ref[8:]) if case_ref.startswith("bundled:") else base / case_ref
    case = load_network_case(case_path)
    a = raw["aidc"]
    clusters = tuple(
        ClusterSpec(c["id"], c["role"], int(c.get("accelerators", 0)),
                    float(c["p_peak_mw"]), float(c["idle_ratio"]),
                    float(c.get("workload_target", 0.0)))
        for c in a["clusters"]
    )
    pen = a["penalties"]
    aidc = AidcConfig(
        clusters=clusters,
        cooling_overhead=float(a["cooling_overhead"]),
        ipcs_efficiency=float(a["ipcs_efficiency"]),
        bess=BessSpec(**{k: float(v) for k, v in a["bess"].items()}),
        m_1a=float(pen["m_1a"]),
        m_1b=float(pen["m_1b"]),
        alpha_w=float(pen["alpha_w"]),
        alpha_rej=float(pen["alpha_rej"]),
        alpha_kappa=float(pen["alpha_kappa"]),
        tracking_weight=float(a["tracking_weight"]),
    )
    t = raw["tso"]
    tso = TsoConfig(
        gamma_u=float(t["gamma_u"]),
        epsilon=float(t["epsilon"]),
        kappa_weight=float(t["kappa_weight"]),
        deviation_weight=float(t["deviation_weight"]),
        pcc_ramp_mw=float(t["pcc_ramp_mw"]),
        participation_rule=t.get("participation_rule", "gmax"),
    )
    seed = int(raw.get("seed", 0))
    trace = _trace_from_spec(raw["trace"], base, seed).with_shares(case)
    scenario = Scenario(
        name=raw.get("name", path.stem),
        case=case,
        aidc=aidc,
        tso=tso,
        trace=trace,
        seed=seed,
        line_rating_scale=float(raw.get("line_rating_scale", 1.0)),
    )
    report = validate_scenario(scenario)
    if not report.ok:
        raise InvariantError(report.entries)
    return scenario


def bundled_path(name: str) -> Path:
    """Filesystem path of a data file shipped with the package."""
    return Path(resources.files("dcgridsim").joinpath("data", name))


def load_bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_path(name if name.endswith(".json") else name + ".json"))
