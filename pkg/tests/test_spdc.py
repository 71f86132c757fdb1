import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from tagsync.correlate import CoarseParams
from tagsync.errors import CapacityError, ValidationError
from tagsync.experiments import recover_offset
from tagsync.gaussfit import FWHM_SIGMA_RATIO
from tagsync.spdc import (
    ClockModel,
    SimTruth,
    SourceConfig,
    config_from_dict,
    config_to_dict,
    detect_arm,
    dump_config,
    emit_pairs,
    load_config,
    simulate,
    table1_replica,
)
from tagsync.streams import quantize_to_lsb


def _rng(seed=0):
    return np.random.default_rng(seed)


def _quiet_config(**overrides):
    """One-arm pass-through baseline: no loss, no noise, no delay."""
    base = SourceConfig(
        pair_rate_cps=10_000.0,
        ta_s=1.0,
        g2_fwhm_ps=0.0,
        eta_signal=1.0,
        eta_idler=1.0,
        jitter_fwhm_signal_ps=0.0,
        jitter_fwhm_idler_ps=0.0,
        dark_rate_signal_cps=0.0,
        dark_rate_idler_cps=0.0,
        path_delay_signal_ps=0,
        path_delay_idler_ps=0,
        seed=7,
    )
    return dataclasses.replace(base, **overrides)


# ---------------------------------------------------------------------------
# emit_pairs
# ---------------------------------------------------------------------------


def test_emit_zero_rate_empty():
    config = _quiet_config(pair_rate_cps=0.0)
    assert emit_pairs(config, _rng()).size == 0


def test_emit_counts_match_poisson_mean():
    config = _quiet_config(pair_rate_cps=1000.0, ta_s=10.0)
    rng = _rng(123)
    counts = [emit_pairs(config, rng).size for _ in range(500)]
    assert abs(np.mean(counts) - 10_000) < 300  # 3 sigma of a single draw


def test_emit_interarrivals_exponential():
    config = _quiet_config(pair_rate_cps=10_000.0, ta_s=10.0)
    times = emit_pairs(config, _rng(42))
    gaps = np.diff(times)
    scale_ps = 1e12 / config.pair_rate_cps
    pvalue = stats.kstest(gaps, "expon", args=(0, scale_ps)).pvalue
    assert pvalue > 0.01


def test_emit_sorted():
    config = _quiet_config(pair_rate_cps=50_000.0)
    times = emit_pairs(config, _rng(1))
    assert np.all(np.diff(times) >= 0)


def test_emit_capacity_guard():
    config = _quiet_config(pair_rate_cps=2e8, ta_s=10.0)
    with pytest.raises(CapacityError):
        emit_pairs(config, _rng())


# ---------------------------------------------------------------------------
# detect_arm
# ---------------------------------------------------------------------------


def test_detect_passthrough_equals_quantized_emissions():
    config = _quiet_config()
    emissions = emit_pairs(config, _rng(9))
    stream = detect_arm(emissions, "signal", config, _rng(10))
    assert np.array_equal(stream.tags, quantize_to_lsb(emissions, 1))


def test_detect_zero_efficiency_empty():
    config = _quiet_config(eta_signal=0.0)
    emissions = emit_pairs(config, _rng(9))
    stream = detect_arm(emissions, "signal", config, _rng(10))
    assert len(stream) == 0


def test_detect_bad_arm_name():
    config = _quiet_config()
    with pytest.raises(ValidationError):
        detect_arm(np.array([1.0]), "herald", config, _rng())


def test_detect_jitter_moment():
    config = _quiet_config(
        pair_rate_cps=10_000.0, ta_s=10.0, jitter_fwhm_signal_ps=70.0
    )
    emissions = emit_pairs(config, _rng(3))
    assert emissions.size > 9e4
    stream = detect_arm(emissions, "signal", config, _rng(4))
    # eta=1 and >> jitter spacing keep the emission/tag pairing intact
    kept = min(len(stream), emissions.size)
    errors = stream.times_ps()[:kept] - emissions[:kept]
    expected = 70.0 / FWHM_SIGMA_RATIO
    assert abs(errors.std() - expected) / expected < 0.02


def test_detect_applies_clock_transform():
    config = _quiet_config(
        pair_rate_cps=100.0,
        clock_signal=ClockModel(offset_ps=500, drift_rate=0.0),
    )
    emissions = emit_pairs(config, _rng(5))
    stream = detect_arm(emissions, "signal", config, _rng(6))
    expected = quantize_to_lsb(emissions + 500, 1)
    expected = expected[expected <= config.duration_ps]
    assert np.array_equal(stream.tags, expected)


def test_dark_counts_present_without_pairs():
    config = _quiet_config(pair_rate_cps=0.0, dark_rate_signal_cps=1000.0, ta_s=2.0)
    stream = detect_arm(np.empty(0), "signal", config, _rng(8))
    assert abs(len(stream) - 2000) < 3 * math.sqrt(2000)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_deterministic():
    config = table1_replica(ta_s=0.2)
    first = simulate(config)
    second = simulate(config)
    assert first[0] == second[0]
    assert first[1] == second[1]
    assert first[2] == second[2]


def test_simulate_seed_changes_output():
    config = table1_replica(ta_s=0.2)
    other = dataclasses.replace(config, seed=config.seed + 1)
    assert simulate(config)[0] != simulate(other)[0]


def test_simulate_truth_bookkeeping():
    config = _quiet_config(path_delay_signal_ps=10_000, path_delay_idler_ps=0)
    _, _, truth = simulate(config)
    assert truth.true_offset_ps == 10_000
    assert truth.detected_pairs == truth.emitted_pairs  # eta = 1 both arms


def test_simulate_truth_includes_clock_offsets_and_drift():
    config = _quiet_config(
        ta_s=2.0,
        path_delay_signal_ps=1000,
        clock_signal=ClockModel(offset_ps=250, drift_rate=0.0),
        clock_idler=ClockModel(offset_ps=-250, drift_rate=1e-9),
    )
    # drift slews -1e-9 * 1e12 ps over 2 s: -1000 ps at mid-acquisition
    _, _, truth = simulate(config)
    assert truth.true_offset_ps == 1000 + 500 - 1000


def test_simulate_thinning_matches_efficiency():
    config = _quiet_config(pair_rate_cps=20_000.0, eta_signal=0.3, eta_idler=0.7)
    kept_s = 0
    kept_i = 0
    emitted = 0
    for seed in range(10):
        signal, idler, truth = simulate(dataclasses.replace(config, seed=seed))
        emitted += truth.emitted_pairs
        kept_s += len(signal)
        kept_i += len(idler)
    for kept, eta in ((kept_s, 0.3), (kept_i, 0.7)):
        sigma = math.sqrt(emitted * eta * (1 - eta))
        assert abs(kept - emitted * eta) < 3 * sigma


def test_simulate_detected_pairs_rate():
    config = table1_replica(ta_s=2.0)
    _, _, truth = simulate(config)
    expected = config.detected_pair_rate_cps * config.ta_s
    assert abs(truth.detected_pairs - expected) < 4 * math.sqrt(expected)


def test_combined_width_law():
    config = _quiet_config(
        pair_rate_cps=10_000.0,
        ta_s=10.0,
        g2_fwhm_ps=30.0,
        jitter_fwhm_signal_ps=50.0,
        jitter_fwhm_idler_ps=40.0,
    )
    signal, idler, truth = simulate(config)
    assert truth.detected_pairs == truth.emitted_pairs
    n = min(len(signal), len(idler))
    diffs = signal.times_ps()[:n] - idler.times_ps()[:n]
    expected = math.sqrt(30.0**2 + 50.0**2 + 40.0**2) / FWHM_SIGMA_RATIO
    assert abs(diffs.std() - expected) / expected < 0.03


def test_pair_spread_shared_between_arms():
    # with only the pair spread active, signal-idler differences must carry
    # the full configured width, not the half-spread of uncorrelated draws
    config = _quiet_config(pair_rate_cps=10_000.0, ta_s=10.0, g2_fwhm_ps=80.0)
    signal, idler, _ = simulate(config)
    n = min(len(signal), len(idler))
    diffs = signal.times_ps()[:n] - idler.times_ps()[:n]
    expected = 80.0 / FWHM_SIGMA_RATIO
    assert abs(diffs.std() - expected) / expected < 0.03


def test_zero_offset_recovered_with_ideal_clocks():
    config = table1_replica(path_delay_signal_ps=0, path_delay_idler_ps=0, seed=77)
    signal, idler, truth = simulate(config)
    assert truth.true_offset_ps == 0
    fit, _, _ = recover_offset(
        signal, idler, 1, CoarseParams(search_span_ps=20_000)
    )
    assert abs(fit.center_ps) <= 1.0


def test_pipeline_with_coarser_lsb():
    # 4 ps tagger: everything stays on the 4 ps grid and the recovered
    # offset is good to the quantization scale
    config = table1_replica(ta_s=1.0, lsb_ps=4, path_delay_signal_ps=144, seed=3)
    signal, idler, truth = simulate(config)
    assert signal.lsb_ps == 4
    fit, _, hist = recover_offset(
        signal, idler, 4, CoarseParams(search_span_ps=20_000)
    )
    assert hist.resolution_ps == 4
    assert abs(fit.center_ps - truth.true_offset_ps) <= 4.0


def test_replica_pipeline_reproduces_bench_width():
    config = table1_replica(seed=20240902)
    signal, idler, truth = simulate(config)
    fit, coarse, _ = recover_offset(
        signal, idler, 1, CoarseParams(search_span_ps=20_000)
    )
    assert abs(fit.fwhm_ps - 70.5) <= 3.0
    assert abs(fit.center_ps - truth.true_offset_ps) <= 3.0


# ---------------------------------------------------------------------------
# config validation and file I/O
# ---------------------------------------------------------------------------


def test_drift_bound_enforced():
    with pytest.raises(ValidationError):
        ClockModel(drift_rate=2e-6)


def test_sim_truth_invariant():
    with pytest.raises(ValidationError):
        SimTruth(true_offset_ps=0, emitted_pairs=5, detected_pairs=6)


def test_bad_eta_rejected():
    with pytest.raises(ValidationError):
        _quiet_config(eta_signal=1.5)


def test_negative_rate_rejected():
    with pytest.raises(ValidationError):
        _quiet_config(pair_rate_cps=-1.0)


def test_config_json_round_trip(tmp_path):
    config = table1_replica(seed=5)
    path = tmp_path / "cfg.json"
    path.write_text(dump_config(config))
    assert load_config(path) == config


def test_config_unknown_key_rejected():
    with pytest.raises(ValidationError, match="unknown config keys"):
        config_from_dict({"pair_rate_cps": 100.0, "typo_field": 1})


def test_config_partial_uses_defaults():
    config = config_from_dict({"pair_rate_cps": 42.0})
    assert config.pair_rate_cps == 42.0
    assert config.lsb_ps == SourceConfig().lsb_ps


def test_config_nested_clock_parsing():
    config = config_from_dict(
        {"clock_idler": {"offset_ps": 11, "drift_rate": 1e-9}}
    )
    assert config.clock_idler == ClockModel(11, 1e-9)
    round_tripped = config_from_dict(config_to_dict(config))
    assert round_tripped == config
