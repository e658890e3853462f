"""Acceptance criteria, each run at its stated tolerance.

Every test appends one PASS/FAIL line that is printed in the terminal summary.
All batches share one master seed fixed before any result was seen.
"""

import itertools
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from resilient_evo import oracle
from resilient_evo.domain import apply_change, generate_layout, waycost
from resilient_evo.evolution import EngineConfig, run
from resilient_evo.experiments import (
    BEST_WAYCOST,
    LAMBDA_SWEEP,
    MEAN_DIVERSITY,
    BatchSpec,
    amplitude_analysis,
    make_scenario,
    parse_variants,
    run_batch,
    scenario_seed,
    sweep,
)

from conftest import ACCEPTANCE_LINES, layout_from

pytestmark = pytest.mark.acceptance

MASTER_SEED = 2024
DOM, GEN = "dom:8000", "gen:80000"
BASE = EngineConfig(change_amount=3)
C = BASE.change_generation


def report(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    print(ACCEPTANCE_LINES[-1])


def best_curve(batch, label):
    return batch.data[label][:, :, BEST_WAYCOST].mean(axis=0)


def diversity_curve(batch, label):
    return batch.data[label][:, :, MEAN_DIVERSITY].mean(axis=0)


@pytest.fixture(scope="module")
def spike_batch():
    spec = BatchSpec(BASE, runs=200, master_seed=MASTER_SEED,
                     variants=parse_variants(f"none,none@gen,{DOM},{GEN}"))
    start = time.perf_counter()
    batch = run_batch(spec)
    return batch, time.perf_counter() - start


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    exact = close = 0
    for r in range(50):
        seed = scenario_seed(MASTER_SEED, r)
        layout = make_scenario(BASE, seed).layout
        cfg = replace(BASE, seed=seed, generations=51, change_generation=50)
        found = run(cfg, layout, layout).stats[50].best_waycost
        _, optimum = oracle.enumerate_optimum(layout)
        assert found >= optimum
        exact += found == optimum
        close += found <= 1.1 * optimum
    elapsed = time.perf_counter() - start
    ok = exact >= 0.8 * 50 and close >= 0.99 * 50 and elapsed < 30
    report(1, ok, f"optimum hit {exact}/50 (need >=40), within 10% {close}/50 (need >=49.5), {elapsed:.1f}s (<30s)")
    assert ok


def test_criterion_2_spike_ordering(spike_batch):
    batch, elapsed = spike_batch
    parts, ok = [], elapsed < 300
    for label in (DOM, GEN):
        diff, lo, hi = batch.paired_spike_difference("none", label)
        ok &= diff > 0 and lo > 0
        parts.append(f"none-{label} spike diff {diff:.1f} CI [{lo:.1f}, {hi:.1f}]")
    report(2, ok, "; ".join(parts) + f"; {elapsed:.0f}s (<300s)")
    assert ok


def test_criterion_3_pre_change_tradeoff(spike_batch):
    batch, _ = spike_batch
    none49 = best_curve(batch, "none")[C - 1]
    others = {label: best_curve(batch, label)[C - 1] for label in (DOM, GEN)}
    ok = all(none49 <= v for v in others.values())
    detail = ", ".join(f"{label} {v:.1f}" for label, v in others.items())
    report(3, ok, f"gen-49 best waycost none {none49:.1f} vs {detail}")
    assert ok


def test_criterion_4_diversity_dynamics(spike_batch):
    batch, _ = spike_batch
    parts, ok = [], True
    for label, baseline in ((DOM, "none"), (GEN, "none@gen")):
        div, base = diversity_curve(batch, label), diversity_curve(batch, baseline)
        window, base_window = div[35:50].mean(), base[35:50].mean()
        peak = div[C:C + 11].max()
        higher = window > base_window
        rises = peak > div[C - 1]
        ok &= higher and rises
        parts.append(f"{label} window {window:.4f} vs {baseline} {base_window:.4f}, "
                     f"max 50-60 {peak:.4f} vs gen-49 {div[C - 1]:.4f}")
    report(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_lambda_monotonicity():
    spec = BatchSpec(BASE, runs=100, master_seed=MASTER_SEED, variants=parse_variants("dom,gen"),
                     axis="lambda", values=LAMBDA_SWEEP)
    batches = sweep(spec)
    parts, ok = [], True
    for mode in ("dom", "gen"):
        spike_means, pre_means = [], []
        for value, batch in batches.items():
            label = f"{mode}:{value:g}"
            spike_means.append(batch.spikes(label).mean())
            pre_means.append(best_curve(batch, label)[C - 1])
        rho_spike = spearmanr(LAMBDA_SWEEP, spike_means).statistic
        rho_pre = spearmanr(LAMBDA_SWEEP, pre_means).statistic
        ok &= rho_spike < 0 and rho_pre > 0
        parts.append(f"{mode} rho(lambda, spike) {rho_spike:+.3f}, rho(lambda, gen-49) {rho_pre:+.3f}")
    report(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_t_robustness():
    values = tuple(2**z for z in range(3, 10))
    spec = BatchSpec(BASE, runs=100, master_seed=MASTER_SEED, variants=parse_variants(GEN),
                     axis="t", values=values)
    batches = sweep(spec)
    finals = np.array([best_curve(batch, GEN)[-1] for batch in batches.values()])
    joint = finals.mean()
    spread = np.abs(finals / joint - 1).max()
    ok = spread <= 0.15
    listed = ", ".join(f"t={t}: {v:.1f}" for t, v in zip(values, finals))
    report(6, ok, f"gen-99 best waycost {listed}; max deviation {spread:.1%} of joint mean {joint:.1f} (<=15%)")
    assert ok


def test_criterion_7_amplitude_regime():
    spec = BatchSpec(BASE, runs=100, master_seed=MASTER_SEED, variants=parse_variants(f"none,{DOM},{GEN}"),
                     axis="A", values=(1, 2, 4, 8))
    rep = amplitude_analysis(spec)
    parts, ok = [], True
    for amount in (1, 2, 4, 8):
        none, dom, gen = (rep.spike(amount, label) for label in ("none", DOM, GEN))
        ok &= none > dom and none > gen
        if amount <= 4:
            ok &= dom < 0.25 * none
        parts.append(f"A={amount}: none {none:.0f} dom {dom:.0f} gen {gen:.0f}")
    report(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_invariant_suite():
    suite = Path(__file__).with_name("test_properties.py")
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", str(suite), "-q", "-p", "no:cacheprovider"],
                          capture_output=True, text=True, cwd=suite.parent.parent)
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < 60
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(8, ok, f"{summary}; {elapsed:.1f}s (<60s)")
    assert ok, proc.stdout[-2000:]


def test_criterion_9_oracle_definitions():
    checks = []
    routes = list(itertools.product(range(5), repeat=5))
    for seed in range(10):
        rng = np.random.default_rng([MASTER_SEED, seed])
        layout = generate_layout(5, 5, 500, 500, rng)
        before = {r: waycost(r, layout) for r in routes}
        checks.append(oracle.affected_fraction(layout, layout) == 0.0)
        checks.append(oracle.is_unexpected(layout, layout) is False)
        for amount in (1, 3, 25):
            changed, _ = apply_change(layout, amount, (2500, 2500), rng)
            after = {r: waycost(r, changed) for r in routes}
            moved_share = sum(abs(after[r] - before[r]) > 0.5 for r in routes) / len(routes)
            checks.append(oracle.affected_fraction(layout, changed) == moved_share)
            if amount == 1:
                checks.append(oracle.affected_fraction(layout, changed) == 0.2)
            best_before = min(before.values())
            best_after = min(after.values())
            argmin_before = {r for r in routes if before[r] == best_before}
            argmin_after = {r for r in routes if after[r] == best_after}
            checks.append(oracle.is_unexpected(layout, changed) == argmin_before.isdisjoint(argmin_after))
        # disabling the stations of the unique optimum forces an unexpected change
        best_route = min(routes, key=lambda r: (before[r], r))
        stations = layout.stations.copy()
        for i, g in enumerate(best_route):
            stations[i, g] += (2500, 2500)
        checks.append(oracle.is_unexpected(layout, layout_from(stations.tolist())) is True)
    ok = all(checks)
    report(9, ok, f"{sum(checks)}/{len(checks)} enumeration fixtures agree exactly")
    assert ok
