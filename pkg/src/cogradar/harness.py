"""Experiment configuration, the per-PRI learning loop and result aggregation."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from .bandit import (
    Exp3,
    FixedWaveform,
    ObservationHistory,
    RegretLedger,
    ThompsonSampling,
    constrain_actions,
    context_matrix,
    write_episode_csv,
)
from .environment import (
    CoexistenceEnvironment,
    CoexistenceParams,
    JammerEnvironment,
    StaticEnvironment,
)
from .signalchain import (
    CpiConfig,
    RangeDopplerMap,
    Score,
    Target,
    cfar_sweep,
    process_cpi,
    roc_curve,
    score_detections,
    simulate_cpi,
    write_roc_csv,
)
from .spectrum import (
    MHZ,
    ChannelGrid,
    CostWeights,
    build_catalog,
    catalog_costs,
    str_to_bits,
)

log = logging.getLogger(__name__)

SCENARIOS = ("coexistence", "jammer", "static")
ALGORITHMS = ("ts", "exp3", "fixed-fullband")
OUTPUT_ENV = "COGRADAR_OUT"


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` (no decimal point) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _load_yaml(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc


# -- configuration -----------------------------------------------------------


@dataclass
class SpectrumConfig:
    B: float = 100 * MHZ
    S: int = 10
    H: float = -90.0
    bw_min: float = 10 * MHZ
    bw_max: float = 100 * MHZ
    bw_step: float = 10 * MHZ
    T: float = 10.24e-6
    A: float = 1.0
    beta: list = field(default_factory=lambda: [1 / 3, 1 / 3, 1 / 3])
    dhat: float = 0.2


@dataclass
class BanditConfig:
    epsilon: float = 0.1
    gamma: float = 0.05
    ts_scale: float = 1.0


@dataclass
class CoexistenceConfig:
    n_bs: int = 5
    tx_power_dbm: list = field(default_factory=lambda: [40.0, 46.5])
    distance_m: list = field(default_factory=lambda: [5000.0, 6000.0])
    path_loss_exp: float = 3.5
    rx_gain_db: float = 0.0
    shadow_mean: float = 0.0
    shadow_sigma: float = 2.0
    shadow_corr: float = 0.0
    coherence: int = 7


@dataclass
class JammerConfig:
    jnr_db: float = 20.0


@dataclass
class StaticConfig:
    bits: str = "0000000011"
    inr_db: float = 10.0


def default_targets() -> list:
    # four targets on distinct range/Doppler cells inside the processed window
    return [
        {"range_m": 120.4, "velocity": -75.0, "snr_db": 15.0},
        {"range_m": 285.7, "velocity": -25.0, "snr_db": 15.0},
        {"range_m": 450.3, "velocity": 30.0, "snr_db": 15.0},
        {"range_m": 615.9, "velocity": 90.0, "snr_db": 15.0},
    ]


@dataclass
class SignalConfig:
    enabled: bool = True
    pri: float = 1.024e-4
    fs: float = 100 * MHZ
    fc_rf: float = 3e9
    noise_power_dbm: float = -90.0
    n_fast: int = 10240
    n_range: int = 512
    guard: list = field(default_factory=lambda: [2, 2])
    train: list = field(default_factory=lambda: [8, 8])
    tolerance: list = field(default_factory=lambda: [1, 2])
    pfa: list = field(default_factory=lambda: [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
    random_phase: bool = True
    targets: list = field(default_factory=default_targets)


@dataclass
class ExperimentConfig:
    scenario: str = "coexistence"
    algorithm: str = "ts"
    constrained: bool = True
    runs: int = 30
    cpis: int = 25
    pulses: int = 400
    seed: int = 0
    burn_in_cpis: int = 0
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    bandit: BanditConfig = field(default_factory=BanditConfig)
    coexistence: CoexistenceConfig = field(default_factory=CoexistenceConfig)
    jammer: JammerConfig = field(default_factory=JammerConfig)
    static: StaticConfig = field(default_factory=StaticConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)

    # -- derived objects --

    @property
    def label(self) -> str:
        tag = "con" if self.constrained else "uncon"
        return f"{self.algorithm}-{tag}-{self.scenario}"

    def grid(self) -> ChannelGrid:
        sp = self.spectrum
        return ChannelGrid(sp.B, sp.S, sp.H)

    def catalog(self):
        sp = self.spectrum
        return build_catalog(self.grid(), sp.bw_min, sp.bw_max, sp.bw_step, sp.T, sp.A)

    def weights(self, catalog=None) -> CostWeights:
        catalog = self.catalog() if catalog is None else catalog
        return CostWeights.for_catalog(catalog, tuple(self.spectrum.beta), self.spectrum.dhat)

    def cpi_config(self) -> CpiConfig:
        sg = self.signal
        return CpiConfig(
            n_pulses=self.pulses,
            pri=sg.pri,
            fs=sg.fs,
            fc_rf=sg.fc_rf,
            noise_power_dbm=sg.noise_power_dbm,
            n_fast=sg.n_fast,
            n_range=sg.n_range,
        )

    def targets(self) -> list[Target]:
        return [Target(**t) for t in self.signal.targets]

    def coexistence_params(self) -> CoexistenceParams:
        c = self.coexistence
        return CoexistenceParams(
            n_bs=c.n_bs,
            tx_power_dbm=tuple(c.tx_power_dbm),
            distance_m=tuple(c.distance_m),
            path_loss_exp=c.path_loss_exp,
            rx_gain_db=c.rx_gain_db,
            shadow_mean=c.shadow_mean,
            shadow_sigma=c.shadow_sigma,
            shadow_corr=c.shadow_corr,
            coherence=c.coherence,
        )

    # -- validation and (de)serialisation --

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.runs < 1 or self.cpis < 1 or self.pulses < 1:
            raise ConfigError("runs, cpis and pulses must be >= 1")
        if not 0 <= self.burn_in_cpis < self.cpis:
            raise ConfigError("burn_in_cpis must lie in [0, cpis)")
        if any(isinstance(p, bool) or not isinstance(p, (int, float)) for p in self.signal.pfa):
            raise ConfigError("pfa values must be numbers")
        if len(self.signal.pfa) == 0 or any(not 0 < p < 1 for p in self.signal.pfa):
            raise ConfigError("pfa values must lie in (0, 1)")
        if len(self.spectrum.beta) != 3:
            raise ConfigError("beta needs three weights")
        try:
            catalog = self.catalog()
            self.weights(catalog)
            self.coexistence_params()
            Exp3(len(catalog), self.bandit.epsilon, self.bandit.gamma)
            cfg = self.cpi_config()
            for t in self.targets():
                t.check(cfg)
            str_to_bits(self.static.bits)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.static.bits) != self.spectrum.S:
            raise ConfigError("static.bits must have S characters")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "ExperimentConfig":
        return _build(cls, data or {}, "")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        data = _load_yaml(text)
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_yaml(text)

    def override(self, key: str, value: Any) -> "ExperimentConfig":
        """Set a dotted key, e.g. ``bandit.epsilon``; strings are parsed as YAML."""
        if isinstance(value, str):
            value = _load_yaml(value)
        data = self.to_dict()
        node = data
        parts = key.replace("-", "_").split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)


def _build(cls, data: dict, where: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)} in {where or 'top level'}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].default_factory if dataclasses.is_dataclass(fields[name].default_factory) else None
        if ftype is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            kwargs[name] = _build(ftype, value, name)
        else:
            kwargs[name] = _coerce(fields[name], value, name)
    return cls(**kwargs)


def _coerce(f: dataclasses.Field, value, name):
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"{name} must be an integer")
        return int(value)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be a number") from None
    if isinstance(default, str):
        return str(value)
    return value


# -- the learning loop -------------------------------------------------------


@dataclass
class EpisodeResult:
    config: ExperimentConfig
    seed: int
    run_index: int
    waveform_ids: np.ndarray
    distortions: np.ndarray
    admissible_ok: np.ndarray
    history: ObservationHistory
    ledger: RegretLedger
    scores: list  # per CPI, one Score per desired P_fa
    maps: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    def roc(self) -> list[tuple]:
        kept = [s for k, row in enumerate(self.scores) if k >= self.config.burn_in_cpis for s in row]
        return roc_curve(kept) if kept else []

    def mean_pd(self, pfa: float) -> float:
        vals = [s.pd for k, row in enumerate(self.scores) if k >= self.config.burn_in_cpis for s in row if s.pfa_desired == pfa]
        return float(np.mean(vals))

    def false_alarms(self, pfa: float) -> list[int]:
        return [s.n_false for row in self.scores for s in row if s.pfa_desired == pfa]


@dataclass
class RunArtifacts:
    episode_log: Path
    roc_csv: Path
    regret_csv: Path
    scores_csv: Path
    config_snapshot: Path
    rd_dumps: list = field(default_factory=list)


def run_seeds(base_seed: int, run_index: int) -> list[np.random.Generator]:
    """Independent (environment, policy, init, signal) streams for one run."""
    ss = np.random.SeedSequence([int(base_seed), int(run_index)])
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def make_environment(cfg: ExperimentConfig, grid: ChannelGrid, rng):
    noise_sub = cfg.cpi_config().noise_mw * grid.width / cfg.signal.fs
    if cfg.scenario == "coexistence":
        return CoexistenceEnvironment(grid, cfg.coexistence_params(), rng)
    if cfg.scenario == "jammer":
        return JammerEnvironment(grid, noise_sub, cfg.jammer.jnr_db)
    bits = str_to_bits(cfg.static.bits)
    return StaticEnvironment(bits, np.where(bits, noise_sub * 10 ** (cfg.static.inr_db / 10), 0.0))


def make_policy(cfg: ExperimentConfig, catalog):
    if cfg.algorithm == "ts":
        return ThompsonSampling(scale=cfg.bandit.ts_scale)
    if cfg.algorithm == "exp3":
        return Exp3(len(catalog), cfg.bandit.epsilon, cfg.bandit.gamma)
    return FixedWaveform(catalog.fullband_id)


def run_episode(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    run_index: int = 0,
    keep_maps: Sequence[int] = (),
    trace: bool = False,
) -> EpisodeResult:
    """Run one seeded episode of ``cfg.cpis`` CPIs.

    Per PRI: sense -> constrain -> contexts -> select -> transmit -> observe
    cost -> update policy and history -> regret.  The first PRI has no
    predecessor, so it transmits a uniformly drawn catalog waveform.
    """
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    env_rng, pol_rng, init_rng, sig_rng = run_seeds(seed, run_index)
    grid = cfg.grid()
    catalog = cfg.catalog()
    weights = cfg.weights(catalog)
    env = make_environment(cfg, grid, env_rng)
    policy = make_policy(cfg, catalog)
    hist = ObservationHistory()
    ledger = RegretLedger()
    cpi = cfg.cpi_config()
    targets = cfg.targets()
    M = cfg.pulses
    n_pri = cfg.cpis * M
    all_ids = np.arange(len(catalog))

    ids_out = np.empty(n_pri, dtype=int)
    dist_out = np.zeros(n_pri)
    ok_out = np.ones(n_pri, dtype=bool)
    power = np.zeros((M, grid.S))
    scores, maps, tags = [], {}, []

    w_prev = None
    for k in range(n_pri):
        t = k + 1
        s_hat = env.sense()
        if trace:
            tags.append((t, "sense"))
        if w_prev is None:
            first = int(init_rng.integers(len(catalog)))
            if isinstance(policy, FixedWaveform):
                first = policy.waveform_id
            w = catalog[first]
            admissible = all_ids
            if trace:
                tags.append((t, "init"))
        else:
            admissible = constrain_actions(catalog, w_prev, weights) if cfg.constrained else all_ids
            if trace:
                tags.append((t, "constrain"))
            X = context_matrix(admissible, s_hat, hist)
            if trace:
                tags.append((t, "context"))
            w = catalog[policy.select(admissible, X, pol_rng)]
            if trace:
                tags.append((t, "select"))
        s_true = env.advance(w, w_prev, env_rng)
        power[k % M] = env.power_mw
        if trace:
            tags.append((t, "transmit"))
        terms = catalog_costs(catalog, s_true, w_prev, weights)
        c = float(terms.total[w.id])
        if trace:
            tags.append((t, "observe"))
        if w_prev is not None:
            policy.update(admissible, X, w.id, c)
            ok_out[k] = w_prev.id in admissible and w.id in admissible
        hist.record(t, s_hat, s_true, w.id, c, terms.distortion[w.id])
        if trace:
            tags.append((t, "update"))
        ledger.step(c, terms.total, admissible)
        if trace:
            tags.append((t, "regret"))
        ids_out[k] = w.id
        dist_out[k] = terms.distortion[w.id]
        w_prev = w

        if (k + 1) % M == 0 and cfg.signal.enabled:
            n_cpi = k // M
            seq = [catalog[i] for i in ids_out[k + 1 - M : k + 1]]
            rd = _process(cfg, cpi, seq, targets, power, grid, sig_rng)
            reps = cfar_sweep(rd, cfg.signal.pfa, tuple(cfg.signal.guard), tuple(cfg.signal.train))
            scores.append([score_detections(r, targets, cpi, tuple(cfg.signal.tolerance)) for r in reps])
            if n_cpi in keep_maps:
                maps[n_cpi] = rd
            if trace:
                tags.append((t, "cpi"))

    return EpisodeResult(cfg, seed, run_index, ids_out, dist_out, ok_out, hist, ledger, scores, maps, tags)


def _process(cfg, cpi, seq, targets, power, grid, rng) -> RangeDopplerMap:
    if cfg.signal.random_phase:
        targets = [dataclasses.replace(t, phase=float(rng.uniform(0, 2 * np.pi))) for t in targets]
    raw = simulate_cpi(seq, targets, cpi, rng, interference_mw=power, grid=grid)
    return process_cpi(raw, seq, cpi)


def run_experiment(cfg: ExperimentConfig, **kwargs) -> list[EpisodeResult]:
    return [run_episode(cfg, cfg.seed, r, **kwargs) for r in range(cfg.runs)]


# -- artifacts ---------------------------------------------------------------


def output_dir(default="runs") -> Path:
    return Path(os.environ.get(OUTPUT_ENV, default))


def write_artifacts(result: EpisodeResult, out_dir) -> RunArtifacts:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    arts = RunArtifacts(
        episode_log=out / "episode.csv",
        roc_csv=out / "roc.csv",
        regret_csv=out / "regret.csv",
        scores_csv=out / "scores.csv",
        config_snapshot=out / "config.yaml",
    )
    with open(arts.episode_log, "w", newline="") as fh:
        write_episode_csv(fh, result.history, result.ledger)
    with open(arts.roc_csv, "w", newline="") as fh:
        write_roc_csv(fh, result.roc(), cfg.algorithm, cfg.scenario, cfg.constrained)
    with open(arts.regret_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "realized", "optimal", "optimal_constrained", "regret_cum"])
        led = result.ledger
        for i, row in enumerate(zip(led.realized, led.optimal, led.optimal_constrained, led.cumulative)):
            w.writerow([i + 1, *map(repr, row)])
    with open(arts.scores_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cpi", "pfa_desired", "pd", "n_detected", "n_false", "pfa_empirical"])
        for k, row in enumerate(result.scores):
            for s in row:
                w.writerow([k, repr(s.pfa_desired), repr(s.pd), s.n_detected, s.n_false, repr(s.pfa_empirical)])
    snap = cfg.to_dict()
    snap["seed"] = result.seed
    snap["_run_index"] = result.run_index
    arts.config_snapshot.write_text(yaml.safe_dump(snap, sort_keys=False))
    return arts


def load_snapshot(path) -> tuple[ExperimentConfig, int]:
    data = _load_yaml(Path(path).read_text())
    run_index = int(data.pop("_run_index", 0))
    return ExperimentConfig.from_dict(data), run_index


# -- aggregation -------------------------------------------------------------


@dataclass
class _RunSummary:
    key: tuple
    roc: list
    regret: np.ndarray


def _summaries(items) -> list[_RunSummary]:
    out = []
    for it in items:
        if isinstance(it, EpisodeResult):
            cfg = it.config
            key = (cfg.algorithm, cfg.scenario, bool(cfg.constrained))
            out.append(_RunSummary(key, it.roc(), np.asarray(it.ledger.cumulative)))
        elif isinstance(it, RunArtifacts):
            with open(it.roc_csv) as fh:
                rows = list(csv.DictReader(fh))
            if not rows:
                raise ValueError(f"{it.roc_csv} is empty")
            key = (rows[0]["algo"], rows[0]["scenario"], rows[0]["constrained"] == "true")
            roc = [(float(r["pfa_desired"]), float(r["pd_mean"]), float(r["pfa_empirical"])) for r in rows]
            with open(it.regret_csv) as fh:
                regret = np.array([float(r["regret_cum"]) for r in csv.DictReader(fh)])
            out.append(_RunSummary(key, roc, regret))
        else:
            raise TypeError(f"cannot aggregate {type(it).__name__}")
    return out


@dataclass
class Summary:
    roc: list  # dicts: algo, scenario, constrained, pfa_desired, pd_mean, pd_stderr, pfa_empirical, runs
    regret: dict  # key -> mean cumulative regret trajectory

    def roc_csv(self) -> str:
        buf = io.StringIO()
        cols = ["algo", "scenario", "constrained", "pfa_desired", "pd_mean", "pd_stderr", "pfa_empirical", "runs"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for row in self.roc:
            w.writerow({**row, "constrained": str(row["constrained"]).lower()})
        return buf.getvalue()

    def regret_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algo", "scenario", "constrained", "t", "regret_cum_mean"])
        for (algo, scen, con), traj in self.regret.items():
            for t, v in enumerate(traj, start=1):
                w.writerow([algo, scen, str(con).lower(), t, repr(float(v))])
        return buf.getvalue()


def aggregate(items: Sequence) -> Summary:
    """Mean and standard error of per-run P_d, and mean regret, per policy variant."""
    runs = _summaries(items)
    if not runs:
        raise ValueError("nothing to aggregate")
    groups: dict[tuple, list[_RunSummary]] = {}
    for r in runs:
        groups.setdefault(r.key, []).append(r)
    roc_rows, regret = [], {}
    for key, members in groups.items():
        pfas = [p for p, _, _ in members[0].roc]
        for m in members[1:]:
            if [p for p, _, _ in m.roc] != pfas:
                raise ValueError(f"P_fa grids differ within {key}")
            if m.regret.shape != members[0].regret.shape:
                raise ValueError(f"regret horizons differ within {key}")
        pd = np.array([[v for _, v, _ in m.roc] for m in members])
        pfa_emp = np.array([[v for _, _, v in m.roc] for m in members])
        n = len(members)
        stderr = pd.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(len(pfas))
        for i, p in enumerate(pfas):
            roc_rows.append(
                {
                    "algo": key[0],
                    "scenario": key[1],
                    "constrained": key[2],
                    "pfa_desired": p,
                    "pd_mean": float(pd[:, i].mean()),
                    "pd_stderr": float(stderr[i]),
                    "pfa_empirical": float(pfa_emp[:, i].mean()),
                    "runs": n,
                }
            )
        regret[key] = np.mean([m.regret for m in members], axis=0)
    return Summary(roc_rows, regret)
