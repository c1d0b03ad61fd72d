"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that is printed in the terminal summary.
The campaign criteria are slow (tens of minutes in total on one core).
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dogbo.controller import SPEED_UP_DOWN_PROFILE, make_swing_spline
from dogbo.dog import episode_score
from dogbo.gp import Hyperparams, KernelKind, fit_gp, gram
from dogbo.harness import report as rep
from dogbo.harness.campaign import CampaignConfig, median_trials_to_target, run_campaign
from dogbo.harness.correlate import phi_cost_pairs
from dogbo.sim import EpisodeResult, StepRecord
from dogbo.tablegen import build_table, generate_table, load_table, save_table

TABLE_ROWS = 20_000
RUNS, TRIALS = 50, 20


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="session")
def table():
    return generate_table(TABLE_ROWS, seed=0)


def campaign(kernels, **kw):
    base = dict(variant="NineD", profile=SPEED_UP_DOWN_PROFILE, kernels=kernels, n_runs=RUNS,
                trials_per_run=TRIALS, seed=0, perturbation=0.15, table_path=None,
                cost_kind="Simulation", t_max=30.0, output_dir=None)
    base.update(kw)
    return CampaignConfig(**base)


@pytest.fixture(scope="session")
def dog_vs_se(table):
    return run_campaign(campaign(("DoG", "SE")), table)


def _dense(x, y, q, hyper):
    def k(a, b):
        d = (a[:, None, :] - b[None, :, :]) / np.array(hyper.length_scales)
        return hyper.signal_variance * np.exp(-0.5 * np.sum(d * d, axis=2))
    inv = np.linalg.inv(k(x, x) + hyper.noise_variance * np.eye(len(x)))
    ks = k(q, x)
    return ks @ inv @ y, hyper.signal_variance + hyper.noise_variance - np.einsum("ij,jk,ik->i", ks, inv, ks)


DIMS = {KernelKind.SE: 9, KernelKind.DOG: 1, KernelKind.DOG_ADJUSTED: 2}


def test_1_gp_matches_dense_oracle():
    rng = np.random.default_rng(1)
    start, worst = time.perf_counter(), 0.0
    for i in range(200):
        kind = list(DIMS)[i % 3]
        n, d = int(rng.integers(1, 51)), DIMS[kind]
        x = rng.uniform(0, 3, (n, d))
        y = rng.normal(size=n)
        hyper = Hyperparams(float(rng.uniform(0.5, 2)), tuple(rng.uniform(0.3, 2, d)), 0.1)
        q = rng.uniform(0, 3, (10, d))
        m, v = fit_gp(kind, x, y, hyper).predict(q)
        om, ov = _dense(x, y, q, hyper)
        worst = max(worst, np.abs(m - om).max(), np.abs(v - ov).max())
    elapsed = time.perf_counter() - start
    assert record(1, worst <= 1e-8 and elapsed < 10, f"max error {worst:.2e}, {elapsed:.2f} s")


def test_2_gram_matrices_are_psd():
    rng = np.random.default_rng(2)
    lowest = np.inf
    for kind, d in DIMS.items():
        for _ in range(100):
            x = rng.uniform(-5, 5, (50, d))
            hyper = Hyperparams(float(rng.uniform(0.1, 10)), tuple(rng.uniform(0.1, 5, d)))
            lowest = min(lowest, np.linalg.eigvalsh(gram(kind, x, x, hyper)).min())
    assert record(2, lowest >= -1e-8, f"min eigenvalue {lowest:.2e}")


def _acc(c, t):
    return sum(i * (i - 1) * c[i] * t ** (i - 2) for i in range(2, 6))


def test_3_spline_boundary_conditions():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        p0, p1, v0, v1 = (rng.uniform(-1, 1, 2) for _ in range(4))
        T = float(rng.uniform(0.1, 1.0))
        sp = make_swing_spline(p0, v0, p1, v1, T, clearance=None)
        errs = [sp.position(0) - p0, sp.position(T) - p1, sp.velocity(0) - v0, sp.velocity(T) - v1,
                [_acc(c, 0.0) for c in sp.coefficients], [_acc(c, T) for c in sp.coefficients]]
        worst = max(worst, max(np.abs(e).max() for e in errs))
    assert record(3, worst <= 1e-9, f"max violation {worst:.2e}")


def test_4_score_arithmetic_is_exact():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(0, 30))
        steps = tuple(StepRecord(i, float(rng.uniform(0.05, 0.6)), float(rng.uniform(0, 0.1)),
                                 0.85, float(rng.uniform(0.75, 0.95)), 0.0, float(rng.uniform(-0.2, 0.2)),
                                 float(rng.uniform(-0.2, 1.5)), 0.0, 0.0) for i in range(n))
        t_max = 3.5
        t_sim = float(rng.uniform(0.1, 1.0)) * t_max
        total = 0.0
        for s in steps:
            m1 = int(s.max_leg_retraction > 0.03)
            m2 = int(abs(s.com_height_end - s.com_height_start) < 0.05)
            m3 = int(abs(s.trunk_lean_end - s.trunk_lean_start) < 0.1)
            total += m1 + m2 + m3 + s.avg_speed
        expected = total * (t_sim / t_max) if steps else 0.0
        got = episode_score(EpisodeResult(steps, t_sim, t_max, True, 0.0)).phi
        mismatches += got != expected
    assert record(4, mismatches == 0, f"{mismatches} of 50 episodes differ")


@pytest.fixture(scope="session")
def phi_cost():
    return phi_cost_pairs(1000, seed=0)


def test_5_score_anticorrelates_with_cost(phi_cost):
    rho = phi_cost.spearman
    assert record(5, rho <= -0.4, f"Spearman(phi, cost) = {rho:.3f} over 1000 controllers")


def test_random_walk_rate_on_easy_profile(phi_cost):
    rate = 1.0 - phi_cost.fell.mean()
    assert 0.15 <= rate <= 0.40, rate


def test_6_dog_beats_se_on_success_and_cost(dog_vs_se):
    s = rep.report_summary(dog_vs_se)["kernels"]
    dog, se = s["DoG"], s["SE"]
    gap = dog["success_rate_at_N"] - se["success_rate_at_N"]
    d_cost, s_cost = dog["mean_best_walking_cost"], se["mean_best_walking_cost"]
    d_ci, s_ci = dog["mean_best_walking_cost_ci95"], se["mean_best_walking_cost_ci95"]
    cost_ok = d_cost is not None and (s_cost is None or (
        d_cost < s_cost and (d_cost + d_ci < s_cost - s_ci or (s_cost - d_cost) / s_cost >= 0.10)))
    detail = (f"success DoG {dog['success_rate_at_N']:.2f} vs SE {se['success_rate_at_N']:.2f}; "
              f"best walking cost DoG {d_cost:.3f}±{d_ci:.3f} vs SE {s_cost:.3f}±{s_ci:.3f}")
    assert record(6, gap >= 0.20 and cost_ok, detail)


def test_7_dog_walks_sooner(dog_vs_se):
    s = rep.report_summary(dog_vs_se)["kernels"]
    d, e = s["DoG"]["median_trials_to_first_walk"], s["SE"]["median_trials_to_first_walk"]
    assert record(7, d <= e / 2, f"median trials to first walk DoG {d} vs SE {e}")


def test_8_adjusted_kernel_reaches_optimum_sooner():
    short = generate_table(TABLE_ROWS, seed=0, short_sim_duration=1.0)
    report = run_campaign(campaign(("DoG", "DoGAdjusted"), mass_scale=1.15, score_window=3.5), short)
    dog = median_trials_to_target(report, "DoG", "DoG")
    adj = median_trials_to_target(report, "DoGAdjusted", "DoG")
    assert record(8, adj < dog, f"median trials to DoG's optimum: DoGAdjusted {adj} vs DoG {dog}")


def test_9_rerun_is_byte_identical(table):
    cfg = campaign(("DoG", "SE", "Random"), n_runs=3, trials_per_run=5)
    a = rep.rows_to_csv(run_campaign(cfg, table).rows())
    b = rep.rows_to_csv(run_campaign(cfg, table).rows())
    assert record(9, a == b, f"{len(a)} bytes of CSV compared")


def test_10_table_round_trip_and_parallel_build(table, tmp_path):
    path = tmp_path / "table.csv"
    save_table(table, path)
    same = load_table(path) == table
    par = build_table(table.params, table.bounds, seed=0, workers=2, chunk_size=2000) == table
    assert record(10, same and par, f"round trip {'equal' if same else 'differs'}, "
                                    f"parallel build {'equal' if par else 'differs'}")
