import dataclasses

import numpy as np
import pytest

from cogradar.bandit import RegretLedger
from cogradar.harness import (
    ConfigError,
    ExperimentConfig,
    RunArtifacts,
    SignalConfig,
    aggregate,
    load_snapshot,
    run_episode,
    run_seeds,
    write_artifacts,
)
from cogradar.spectrum import catalog_costs

PHASES = ["sense", "constrain", "context", "select", "transmit", "observe", "update", "regret"]


def small_config(**kw) -> ExperimentConfig:
    sig = SignalConfig(n_fast=2048, pfa=[1e-6, 1e-4, 1e-2])
    base = dict(runs=1, cpis=2, pulses=32, signal=sig)
    base.update(kw)
    return ExperimentConfig(**base)


def no_signal(**kw) -> ExperimentConfig:
    cfg = small_config(**kw)
    return dataclasses.replace(cfg, signal=dataclasses.replace(cfg.signal, enabled=False))


# -- configuration -----------------------------------------------------------


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert len(cfg.catalog()) == 55
    assert cfg.runs == 30 and cfg.cpis == 25 and cfg.pulses == 400


def test_yaml_round_trip():
    cfg = small_config(algorithm="exp3", constrained=False, seed=9)
    cfg = cfg.override("bandit.epsilon", "0.3").override("signal.guard", "[1, 3]")
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg
    assert again.bandit.epsilon == 0.3 and again.signal.guard == [1, 3]


@pytest.mark.parametrize(
    "key, value",
    [
        ("algorithm", "bogus"),
        ("scenario", "ocean"),
        ("runs", "0"),
        ("bandit.epsilon", "1.5"),
        ("spectrum.beta", "[0.5, 0.5, 0.5]"),
        ("spectrum.S", "0"),
        ("signal.pfa", "[0.0]"),
        ("static.bits", "01"),
    ],
)
def test_invalid_values_are_rejected(key, value):
    with pytest.raises(ConfigError):
        small_config().override(key, value).validate()


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        small_config().override("bandit.nope", 1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"signal": {"typo": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml("- a list")


def test_load_reports_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.yaml")


def test_run_seeds_are_independent_and_reproducible():
    a = [g.random() for g in run_seeds(1, 0)]
    b = [g.random() for g in run_seeds(1, 0)]
    c = [g.random() for g in run_seeds(1, 1)]
    assert a == b and a != c and len(set(a)) == 4


# -- the loop ----------------------------------------------------------------


def test_fixed_fullband_is_constant():
    cfg = small_config(algorithm="fixed-fullband")
    res = run_episode(cfg)
    fb = cfg.catalog().fullband_id
    assert np.all(res.waveform_ids == fb)
    assert np.all(res.distortions == 0)


def test_constrained_ts_respects_the_tolerance():
    cfg = no_signal(cpis=5, pulses=100)
    res = run_episode(cfg, seed=3)
    assert np.all(res.distortions < cfg.spectrum.dhat)
    assert np.all(res.admissible_ok)


@pytest.mark.parametrize("algo", ["ts", "exp3"])
def test_same_seed_gives_identical_logs(tmp_path, algo):
    cfg = small_config(algorithm=algo)
    a = write_artifacts(run_episode(cfg, seed=4), tmp_path / "a")
    b = write_artifacts(run_episode(cfg, seed=4), tmp_path / "b")
    for name in ("episode_log", "roc_csv", "regret_csv", "scores_csv"):
        assert getattr(a, name).read_bytes() == getattr(b, name).read_bytes()
    c = write_artifacts(run_episode(cfg, seed=5), tmp_path / "c")
    assert a.episode_log.read_bytes() != c.episode_log.read_bytes()


def test_trace_follows_the_algorithm_order():
    cfg = small_config(cpis=1, pulses=8)
    res = run_episode(cfg, trace=True)
    by_t = {}
    for t, tag in res.trace:
        by_t.setdefault(t, []).append(tag)
    assert by_t[1] == ["sense", "init", "transmit", "observe", "update", "regret"]
    for t in range(2, 8):
        assert by_t[t] == PHASES
    assert by_t[8] == PHASES + ["cpi"]


def test_regret_matches_hindsight_scan():
    cfg = no_signal(scenario="jammer", cpis=1, pulses=100)
    res = run_episode(cfg, seed=2)
    catalog, weights = cfg.catalog(), cfg.weights()
    total, prev = 0.0, None
    for rec in res.history.log:
        c = catalog_costs(catalog, rec.s_true, prev, weights).total
        total += c[rec.waveform_id] - c.min()
        prev = catalog[rec.waveform_id]
    assert res.ledger.total == pytest.approx(total, abs=1e-12)


def test_scores_cover_every_cpi_and_pfa():
    cfg = small_config(cpis=3)
    res = run_episode(cfg, keep_maps=(1,))
    assert len(res.scores) == 3
    assert all([s.pfa_desired for s in row] == cfg.signal.pfa for row in res.scores)
    assert set(res.maps) == {1}
    assert res.maps[1].shape == (32, cfg.signal.n_range)
    roc = res.roc()
    assert [p for p, _, _ in roc] == sorted(cfg.signal.pfa)


def test_burn_in_drops_first_cpis():
    cfg = small_config(cpis=3, burn_in_cpis=2)
    res = run_episode(cfg)
    assert res.mean_pd(1e-2) == res.scores[2][-1].pd


def test_constrained_distortion_not_above_unconstrained():
    wins = 0
    for seed in range(30):
        tot = {}
        for con in (True, False):
            res = run_episode(no_signal(constrained=con, cpis=1, pulses=300), seed=seed)
            tot[con] = res.distortions.sum()
        wins += tot[True] <= tot[False]
    assert wins >= 29


@pytest.mark.parametrize("scenario", ["coexistence", "jammer", "static"])
def test_every_scenario_runs(scenario):
    res = run_episode(small_config(scenario=scenario, algorithm="exp3", cpis=1))
    assert len(res.scores) == 1 and len(res.history) == 32


# -- artifacts and aggregation ----------------------------------------------


def test_snapshot_round_trip(tmp_path):
    cfg = small_config(seed=7)
    res = run_episode(cfg, run_index=2)
    arts = write_artifacts(res, tmp_path)
    loaded, run_index = load_snapshot(arts.config_snapshot)
    assert loaded == cfg and run_index == 2
    again = write_artifacts(run_episode(loaded, run_index=run_index), tmp_path / "again")
    assert again.episode_log.read_bytes() == arts.episode_log.read_bytes()


def test_aggregate_single_artifact(tmp_path):
    res = run_episode(small_config())
    summary = aggregate([write_artifacts(res, tmp_path)])
    for row, (p, pd, pfa) in zip(summary.roc, res.roc()):
        assert row["pfa_desired"] == p and row["pd_mean"] == pytest.approx(pd)
        assert row["pfa_empirical"] == pytest.approx(pfa)
        assert row["pd_stderr"] == 0 and row["runs"] == 1
    key = ("ts", "coexistence", True)
    np.testing.assert_allclose(summary.regret[key], res.ledger.cumulative)


def test_aggregate_identical_artifacts():
    res = run_episode(small_config())
    summary = aggregate([res] * 30)
    assert all(r["pd_stderr"] == 0 and r["runs"] == 30 for r in summary.roc)
    assert [r["pd_mean"] for r in summary.roc] == pytest.approx([pd for _, pd, _ in res.roc()])
    header = summary.roc_csv().splitlines()[0]
    assert header == "algo,scenario,constrained,pfa_desired,pd_mean,pd_stderr,pfa_empirical,runs"


def test_aggregate_groups_variants():
    items = [
        run_episode(small_config(algorithm=a, constrained=c, cpis=1))
        for a in ("ts", "exp3")
        for c in (True, False)
    ]
    summary = aggregate(items)
    keys = {(r["algo"], r["constrained"]) for r in summary.roc}
    assert len(keys) == 4
    assert len(summary.roc) == 4 * 3


def test_aggregate_schema_mismatch():
    a = run_episode(small_config())
    b = run_episode(small_config(signal=dataclasses.replace(small_config().signal, pfa=[1e-3])))
    with pytest.raises(ValueError):
        aggregate([a, b])
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(TypeError):
        aggregate([RegretLedger()])


def test_artifact_paths(tmp_path):
    arts = write_artifacts(run_episode(small_config()), tmp_path / "x")
    assert isinstance(arts, RunArtifacts)
    for p in (arts.episode_log, arts.roc_csv, arts.regret_csv, arts.scores_csv, arts.config_snapshot):
        assert p.exists() and p.stat().st_size > 0
    assert arts.episode_log.read_text().splitlines()[0] == (
        "t,s_hat_bits,s_true_bits,waveform_id,cost,distortion,regret_cum"
    )
