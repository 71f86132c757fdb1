"""Acceptance gate: every release criterion with its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion. All randomized criteria use fixed seeds.
"""

import math
import time

import numpy as np
import pytest

from tagsync.correlate import brute_force_count, count_coincidences, fine_scan
from tagsync.experiments import ExperimentSpec, run_fig3b, run_fig4, run_fig5
from tagsync.fftcorr import cross_correlate, threshold_sp
from tagsync.gaussfit import fit_gaussian
from tagsync.spdc import SourceConfig, remote_fiber_replica, simulate, table1_replica
from tagsync.streams import shift_stream

from conftest import make_stream


def _report(num, ok, detail):
    line = f"ACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. exact oracle equivalence, 1000 seeded instances, < 10 s
# ---------------------------------------------------------------------------


def test_criterion_01_oracle_equivalence():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(0, 201))
        m = int(rng.integers(0, 201))
        span = int(rng.integers(10**3, 10**6))
        s = make_stream(np.sort(rng.integers(0, span, n)), duration_ps=span)
        i = make_stream(np.sort(rng.integers(0, span, m)), duration_ps=span)
        t0 = int(rng.integers(-(10**5), 10**5 + 1))
        width = int(rng.integers(1, 1001))
        if count_coincidences(s, i, t0, width) != brute_force_count(s, i, t0, width):
            mismatches += 1
    elapsed = time.perf_counter() - start
    _report(
        1,
        mismatches == 0 and elapsed < 10.0,
        f"oracle equivalence on 1000 instances, {mismatches} mismatches, "
        f"{elapsed:.1f} s (< 10 s)",
    )


# ---------------------------------------------------------------------------
# 2. offset-SD scaling law within 25% of prediction for Ta <= 1 s
# 3. headline precision at Ta = 4.5 s in [0.55, 0.90] ps
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def precision_sweep():
    spec = ExperimentSpec(
        name="fig4",
        base_config=table1_replica(),
        trials=50,
        sweep=(0.14, 0.28, 0.56, 1.0, 4.5),
        seed=0,
    )
    return run_fig4(spec)


def test_criterion_02_precision_scaling(precision_sweep):
    rows = [row for row in precision_sweep if row.sweep_value <= 1.0]
    assert len(rows) == 4
    ratios = [row.sd_ps / row.predicted_sd_ps for row in rows]
    ok = all(0.75 <= r <= 1.25 for r in ratios)
    detail = ", ".join(
        f"Ta={row.sweep_value}s sd={row.sd_ps:.3f} pred={row.predicted_sd_ps:.3f} "
        f"ratio={ratio:.3f}"
        for row, ratio in zip(rows, ratios)
    )
    _report(2, ok, f"SD within 25% of width/sqrt(2*rate*time) at every point: {detail}")


def test_criterion_03_headline_precision(precision_sweep):
    row = [r for r in precision_sweep if r.sweep_value == 4.5][0]
    ok = 0.55 <= row.sd_ps <= 0.90
    _report(
        3,
        ok,
        f"ensemble SD at Ta=4.5 s is {row.sd_ps:.3f} ps "
        f"(band [0.55, 0.90], prediction {row.predicted_sd_ps:.3f} ps)",
    )


# ---------------------------------------------------------------------------
# 4. fitted-width trend versus resolution
# 5. quadratic extrapolation of offset versus resolution
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def resolution_sweep():
    spec = ExperimentSpec(
        name="fig3b",
        base_config=table1_replica(),
        trials=25,
        sweep=(1, 3, 5, 7, 9, 15, 25, 35, 55),
        seed=0,
    )
    return run_fig3b(spec)


def test_criterion_04_width_trend(resolution_sweep):
    by_res = {row.sweep_value: row.mean_fwhm_ps for row in resolution_sweep.rows}
    fine = [by_res[r] for r in (1, 3, 5, 7, 9, 15)]
    spread = max(fine) - min(fine)
    growth = by_res[55] - by_res[1]
    ok = spread <= 2.0 and growth >= 2.0
    _report(
        4,
        ok,
        f"FWHM spread over 1..15 ps bins is {spread:.2f} ps (<= 2), "
        f"FWHM(55)-FWHM(1) = {growth:.2f} ps (>= 2); "
        f"FWHM(1)={by_res[1]:.2f}, FWHM(55)={by_res[55]:.2f}",
    )


def test_criterion_05_quadratic_extrapolation(resolution_sweep):
    result = resolution_sweep
    offset_1ps = result.rows[0].mean_offset_ps
    lsb = 1.0
    err_truth = abs(result.c0 - result.true_offset_ps)
    err_1ps = abs(result.c0 - offset_1ps)
    ok = err_truth <= lsb and err_1ps <= 1.0
    _report(
        5,
        ok,
        f"c0={result.c0:.3f} vs truth {result.true_offset_ps} "
        f"(|err|={err_truth:.3f} <= 1 LSB) and vs 1 ps offset {offset_1ps:.3f} "
        f"(|err|={err_1ps:.3f} <= 1 ps)",
    )


# ---------------------------------------------------------------------------
# companion checks on the same ensembles (not numbered criteria)
# ---------------------------------------------------------------------------


def test_example_sqrt_time_scaling(precision_sweep):
    by_ta = {row.sweep_value: row.sd_ps for row in precision_sweep}
    for short, long in ((0.14, 0.56), (0.28, 1.0)):
        ratio = by_ta[short] / by_ta[long]
        assert 1.5 <= ratio <= 2.5, f"sd({short})/sd({long}) = {ratio:.2f}"


def test_example_fine_resolution_width_consistency(resolution_sweep):
    fine = [
        row.mean_fwhm_ps for row in resolution_sweep.rows if row.sweep_value <= 9
    ]
    assert max(fine) - min(fine) <= 1.0


def test_example_sd_flat_at_fine_resolutions(resolution_sweep):
    fine = [row.sd_ps for row in resolution_sweep.rows if row.sweep_value <= 9]
    assert max(fine) / min(fine) <= 1.15
    assert resolution_sweep.degradation_ratio > 1.0


# ---------------------------------------------------------------------------
# 6. FFT-baseline failure mode versus direct recovery
# ---------------------------------------------------------------------------


def test_criterion_06_baseline_failure_mode():
    spec = ExperimentSpec(
        name="fig5", base_config=remote_fiber_replica(), trials=1, seed=0
    )
    report = run_fig5(spec)
    rows = sorted(report.rows, key=lambda r: -r.bin_width_ps)
    coarse_row = rows[0]
    finest_row = rows[-1]
    direct_err = abs(report.direct_offset_ps - report.true_offset_ps)
    agree_ok = all(
        row.agreement_ps <= row.bin_width_ps for row in rows if row.identified
    )
    ok = (
        coarse_row.identified
        and not finest_row.identified
        and direct_err <= 2.0
        and agree_ok
    )
    detail = "; ".join(
        f"{row.bin_width_ps} ps: S={row.s_max:.1f} vs Sp={row.s_p:.2f} "
        f"{'identified' if row.identified else 'not identified'}"
        for row in rows
    )
    _report(
        6,
        ok,
        f"direct error {direct_err:.2f} ps (<= 2); baseline transition: {detail}",
    )


# ---------------------------------------------------------------------------
# 7. threshold reproduction
# ---------------------------------------------------------------------------


def test_criterion_07_threshold():
    value = threshold_sp(2**27, 0.01)
    ok = abs(value - 6.4) <= 0.1
    _report(7, ok, f"threshold at 2^27 bins, alpha 0.01: {value:.3f} (6.4 +- 0.1)")


# ---------------------------------------------------------------------------
# 8. property bundle
# ---------------------------------------------------------------------------


def test_criterion_08_property_bundle():
    failures = []
    signal, idler, truth = simulate(table1_replica(ta_s=0.2, seed=0))

    base = fine_scan(signal, idler, 140, 500, 500)
    shifted = fine_scan(shift_stream(signal, 7777), idler, 140 + 7777, 500, 500)
    if not (
        np.array_equal(shifted.counts, base.counts)
        and shifted.center0_ps == base.center0_ps + 7777
    ):
        failures.append("translation equivariance")

    both = fine_scan(
        shift_stream(signal, 555), shift_stream(idler, 555), 140, 500, 500
    )
    if not (
        np.array_equal(both.counts, base.counts) and both.center0_ps == base.center0_ps
    ):
        failures.append("common-shift invariance")

    rev = fine_scan(idler, signal, -140, 500, 500)
    if not np.array_equal(rev.counts[1:], base.counts[1:][::-1]):
        failures.append("swap antisymmetry")

    odd_hist = fine_scan(signal, idler, 140, 501, 501)
    if int(odd_hist.counts.sum()) != count_coincidences(signal, idler, 140, 501):
        failures.append("bin-sum conservation")

    x = -110.0 + np.arange(500)
    clean = 100.0 * np.exp(-((x - 140.0) ** 2) / (2 * 30.0**2)) + 5.0

    class _H:
        resolution_ps = 1

        def __init__(self, c0, y):
            self.center0_ps = c0
            self.counts = y

        def centers(self):
            return self.center0_ps + np.arange(self.counts.size)

    f0 = fit_gaussian(_H(-110, clean))
    f1 = fit_gaussian(_H(-110 + 31337, clean))
    f2 = fit_gaussian(_H(-110, clean * 8.0))
    if abs((f1.center_ps - f0.center_ps) - 31337) > 1e-6:
        failures.append("fit shift equivariance")
    if (
        abs(f2.amplitude - 8 * f0.amplitude) > 1e-4
        or abs(f2.center_ps - f0.center_ps) > 1e-6
        or abs(f2.sigma_ps - f0.sigma_ps) > 1e-6
    ):
        failures.append("fit scale equivariance")

    rng = np.random.default_rng(0)
    for log_n in (3, 6, 10):
        a = rng.integers(0, 1000, 2**log_n)
        b = rng.integers(0, 1000, 2**log_n)
        fast = cross_correlate(a, b)
        n = a.size
        direct = np.array(
            [np.dot(a, np.roll(b, -k)) for k in range(n)], dtype=float
        )
        if np.max(np.abs(fast - direct)) > 1e-6 * max(1.0, np.max(np.abs(direct))):
            failures.append(f"fft vs direct at n={n}")

    _report(8, not failures, f"property bundle: {failures or 'all held'}")


# ---------------------------------------------------------------------------
# 9. linear-complexity contract on 1e7-tag streams
# ---------------------------------------------------------------------------


def _perf_pair(scale):
    config = SourceConfig(
        pair_rate_cps=1_000_000.0,
        ta_s=10.0 * scale,
        g2_fwhm_ps=0.4,
        eta_signal=1.0,
        eta_idler=1.0,
        jitter_fwhm_signal_ps=49.85,
        jitter_fwhm_idler_ps=49.85,
        dark_rate_signal_cps=0.0,
        dark_rate_idler_cps=0.0,
        path_delay_signal_ps=140,
        path_delay_idler_ps=0,
        seed=0,
    )
    return simulate(config)


def _best_time(func, repeats=3):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def test_criterion_09_linear_scaling():
    signal1, idler1, _ = _perf_pair(1)
    signal2, idler2, _ = _perf_pair(2)
    assert len(signal1) >= 9_900_000
    assert len(signal2) >= 19_800_000

    fine_scan(signal1, idler1, 140, 500, 500)  # warm path
    t1 = _best_time(lambda: fine_scan(signal1, idler1, 140, 500, 500))
    t2 = _best_time(lambda: fine_scan(signal2, idler2, 140, 500, 500))
    ratio = t2 / t1
    _report(
        9,
        ratio <= 2.3,
        f"fine scan over 500 ps: {len(signal1):,} tags in {t1*1e3:.0f} ms, "
        f"{len(signal2):,} tags in {t2*1e3:.0f} ms, ratio {ratio:.2f} (<= 2.3)",
    )
