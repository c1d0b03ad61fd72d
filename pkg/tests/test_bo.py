import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import synthetic_table
from dogbo.bo import (
    BoConfig,
    BoHistory,
    Candidate,
    Evaluation,
    TrialRecord,
    candidates_from_table,
    expected_improvement,
    propose_next,
    run_bo,
    run_random,
)
from dogbo.controller import reference_params
from dogbo.errors import Exhausted, InvalidArgument
from dogbo.gp import Hyperparams, KernelKind, fit_gp


def test_ei_closed_forms():
    assert expected_improvement(6.0, 0.0, 5.0) == 0.0
    assert expected_improvement(5.0, 1.0, 5.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi))
    assert expected_improvement(3.0, 0.0, 5.0) == 2.0


@pytest.mark.parametrize("mean,var,best", [(0.0, 1.0, 0.5), (2.0, 4.0, 1.0), (-1.0, 0.25, 0.0)])
def test_ei_matches_monte_carlo(mean, var, best):
    y = np.random.default_rng(0).normal(mean, math.sqrt(var), 1_000_000)
    assert expected_improvement(mean, var, best) == pytest.approx(np.maximum(best - y, 0).mean(), abs=1e-3)


@given(st.floats(-10, 10), st.floats(0, 10), st.floats(0, 10), st.floats(-10, 10))
def test_ei_nonnegative_and_monotone_in_variance(mean, v1, v2, best):
    lo, hi = sorted((v1, v2))
    a, b = expected_improvement(mean, lo, best), expected_improvement(mean, hi, best)
    assert 0.0 <= a <= b + 1e-12


def _history(records=()):
    h = BoHistory("DoG", 0)
    h.trials.extend(records)
    return h


def _record(i, idx, phi, cost, fell=True):
    return TrialRecord(i, idx, (), phi, cost, fell, cost)


def test_single_candidate_and_exhaustion():
    table = synthetic_table([5.0])
    cands = candidates_from_table(table, KernelKind.DOG)
    gp = fit_gp(KernelKind.DOG, [], [], Hyperparams(1.0, (1.0,)))
    assert propose_next(gp, cands, _history()) is cands[0]
    with pytest.raises(Exhausted):
        propose_next(gp, cands, _history([_record(0, 0, 5.0, 1.0)]))
    with pytest.raises(InvalidArgument):
        propose_next(gp, [], _history())


def test_higher_variance_wins_at_equal_mean():
    # one training point at phi=0; candidates at equal distance but different
    # variance are built by hand through the features
    gp = fit_gp(KernelKind.DOG, [[0.0]], [0.0], Hyperparams(1.0, (1.0,), 1e-6))
    p = reference_params()
    near = Candidate(1, p, 0.1, np.array([0.1]))
    far = Candidate(2, p, 5.0, np.array([5.0]))
    pick = propose_next(gp, [near, far], _history([_record(0, 0, 0.0, 0.0)]))
    assert pick is far


def test_after_a_fall_the_next_proposal_moves_away():
    table = synthetic_table([0.0, 0.5, 10.0])
    cands = candidates_from_table(table, KernelKind.DOG)
    hyper = Hyperparams(100.0 ** 2, (1.0,), 1e-2)
    gp = fit_gp(KernelKind.DOG, [[0.0]], [100.0], hyper)
    pick = propose_next(gp, cands, _history([_record(0, 0, 0.0, 100.0)]))
    assert abs(pick.phi - 0.0) >= hyper.length_scales[0]


def bowl(table, centre=30.0):
    def objective(params, index):
        phi = table.phi[index]
        return Evaluation((phi - centre) ** 2 / 100.0, phi < 10.0, phi)
    return objective


def test_dog_finds_table_optimum_quickly(small_table):
    def vee(params, index):
        return Evaluation(abs(small_table.phi[index] - 30.0), False, small_table.phi[index])
    costs = np.abs(small_table.phi - 30.0)
    truth = int(np.argmin(costs))
    # smooth 1-D landscape: a length scale of a fifth of the score range suits it
    config = BoConfig(signal_variance=float(np.var(costs)), dog_length_fraction=0.2)
    for seed in range(20):
        h = run_bo(vee, small_table, KernelKind.DOG, 20, seed, config=config)
        hits = [t.trial_index + 1 for t in h.trials if t.candidate_index == truth]
        assert hits and hits[0] <= 10, f"seed {seed}"


def test_single_trial_history(small_table):
    h = run_bo(bowl(small_table), small_table, "SE", 1, 3)
    assert len(h) == 1 and h.best_cost == h.trials[0].cost
    with pytest.raises(InvalidArgument):
        run_bo(bowl(small_table), small_table, "SE", 0, 3)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["SE", "DoG", "DoGAdjusted"]), st.integers(0, 1000))
def test_history_invariants(kind, seed):
    table = synthetic_table(np.random.default_rng(seed).uniform(0, 40, 40), seed)
    h = run_bo(bowl(table, 20.0), table, kind, 8, seed)
    idx = [t.candidate_index for t in h.trials]
    assert len(set(idx)) == len(idx) and all(0 <= i < len(table) for i in idx)
    best = [t.posterior_best for t in h.trials]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert best == list(np.minimum.accumulate([t.cost for t in h.trials]))


def test_runs_are_reproducible(small_table):
    a = run_bo(bowl(small_table), small_table, "DoGAdjusted", 6, 9)
    b = run_bo(bowl(small_table), small_table, "DoGAdjusted", 6, 9)
    assert a.trials == b.trials


def test_failing_objective_counts_as_fall(small_table):
    def broken(params, index):
        raise RuntimeError("boom")
    h = run_bo(broken, small_table, "DoG", 3, 0)
    assert all(t.fell and t.cost == 100.0 and "boom" in t.error for t in h.trials)


def test_mismatch_shifts_adjusted_features(small_table):
    seen = []

    def offset(params, index):
        seen.append(index)
        return Evaluation(1.0, False, small_table.phi[index] - 5.0)
    h = run_bo(offset, small_table, "DoGAdjusted", 3, 0)
    assert [t.phi_hw for t in h.trials] == [small_table.phi[i] - 5.0 for i in seen]


def test_random_arm_samples_without_replacement(small_table):
    h = run_random(bowl(small_table), small_table, 30, 1)
    idx = [t.candidate_index for t in h.trials]
    assert len(set(idx)) == 30 and h.kernel_kind == "Random"


def test_config_coerces_modes():
    assert BoConfig(se_mode="Fixed").se_mode.value == "Fixed"
    with pytest.raises(InvalidArgument):
        BoConfig(signal_variance=0.0)
