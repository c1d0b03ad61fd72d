"""Bayesian optimization over a finite candidate set drawn from a score table."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

from dogbo.controller import ControllerParams
from dogbo.errors import Exhausted, InvalidArgument, NumericalFailure
from dogbo.gp import (
    DEFAULT_NOISE,
    GpModel,
    HyperMode,
    Hyperparams,
    KernelKind,
    MismatchModel,
    fit_gp,
    fit_hyperparams,
    update_mismatch,
)
from dogbo.tablegen import ScoreTable

log = logging.getLogger(__name__)

FALL_COST_CAP = 100.0
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def expected_improvement(mean, variance, best_cost):
    """Expected improvement below ``best_cost`` (minimization)."""
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gain = best_cost - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, gain / np.where(sd > 0, sd, 1.0), 0.0)
    cdf = 0.5 * (1.0 + erf(z * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * z * z)
    ei = np.where(sd > 0, gain * cdf + sd * pdf, np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass(frozen=True)
class Candidate:
    index: int
    params: ControllerParams
    phi: float
    features: np.ndarray


@dataclass(frozen=True)
class Evaluation:
    """What the objective reports for one trial."""

    cost: float
    fell: bool
    phi_hw: float | None = None
    x_fall: float = 0.0
    c_tr: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    candidate_index: int
    params: tuple[float, ...]
    phi_sim: float
    cost: float
    fell: bool
    posterior_best: float
    phi_hw: float | None = None
    error: str | None = None


@dataclass
class BoHistory:
    kernel_kind: str
    seed: int
    trials: list[TrialRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def evaluated(self) -> set[int]:
        return {t.candidate_index for t in self.trials}

    @property
    def best_cost(self) -> float:
        return self.trials[-1].posterior_best if self.trials else math.inf

    def costs(self) -> np.ndarray:
        return np.array([t.cost for t in self.trials])

    def best_curve(self) -> np.ndarray:
        return np.array([t.posterior_best for t in self.trials])

    def trials_to_first_walk(self) -> int | None:
        for t in self.trials:
            if not t.fell:
                return t.trial_index + 1
        return None

    def found_walk(self) -> bool:
        return any(not t.fell for t in self.trials)

    def best_walking_cost(self) -> float | None:
        walks = [t.cost for t in self.trials if not t.fell]
        return min(walks) if walks else None


@dataclass(frozen=True)
class BoConfig:
    """Kernel hyperparameter policy for a run.

    ``signal_variance`` seeds both the fixed DoG kernels and the SE kernel
    before it has enough data to refit.
    """

    signal_variance: float = 1000.0
    noise_variance: float = DEFAULT_NOISE
    dog_length_fraction: float = 0.1
    se_length_scale: float = 0.3
    se_mode: HyperMode = HyperMode.LEARNED
    dog_mode: HyperMode = HyperMode.FIXED
    adjusted_mode: HyperMode = HyperMode.FIXED
    mismatch_length_scale: float = 0.25
    mismatch_mode: HyperMode = HyperMode.FIXED
    prior_mean: float = 0.0
    fail_cost: float = FALL_COST_CAP

    def __post_init__(self):
        for name in ("se_mode", "dog_mode", "adjusted_mode", "mismatch_mode"):
            object.__setattr__(self, name, HyperMode(getattr(self, name)))
        if not (self.signal_variance > 0 and self.noise_variance > 0):
            raise InvalidArgument("signal and noise variance must be positive")

    def dog_hyper(self, table: ScoreTable, dims: int = 1) -> Hyperparams:
        span = float(np.ptp(table.phi)) if len(table) else 0.0
        ls = max(self.dog_length_fraction * span, 1e-3)
        return Hyperparams(self.signal_variance, (ls,) * dims, self.noise_variance, HyperMode.FIXED)

    def se_hyper(self, dim: int) -> Hyperparams:
        return Hyperparams(self.signal_variance, (self.se_length_scale,) * dim,
                           self.noise_variance, HyperMode.FIXED)

    def mismatch_hyper(self, table: ScoreTable) -> Hyperparams:
        var = max(float(np.var(table.phi)), 1.0)
        return Hyperparams(var, (self.mismatch_length_scale,) * table.bounds.dim,
                           self.noise_variance, HyperMode.FIXED)


def candidate_features(table: ScoreTable, kind: KernelKind,
                       mismatch: MismatchModel | None = None) -> np.ndarray:
    kind = KernelKind(kind)
    if kind is KernelKind.SE:
        return table.normalized()
    if kind is KernelKind.DOG:
        return table.phi[:, None]
    g = mismatch.predict_mean(table.normalized()) if mismatch is not None else np.zeros(len(table))
    return np.column_stack([table.phi, g])


def candidates_from_table(table: ScoreTable, kind: KernelKind,
                          mismatch: MismatchModel | None = None) -> list[Candidate]:
    feats = candidate_features(table, kind, mismatch)
    return [Candidate(i, table.row_params(i), float(table.phi[i]), feats[i]) for i in range(len(table))]


def _argmax_unevaluated(scores: np.ndarray, evaluated) -> int:
    scores = np.array(scores, dtype=float)
    if evaluated:
        scores[list(evaluated)] = -np.inf
    if not np.any(np.isfinite(scores)):
        raise Exhausted("every candidate has been evaluated")
    return int(np.argmax(scores))


def propose_index(gp: GpModel, features: np.ndarray, history: BoHistory,
                  rng: np.random.Generator) -> int:
    """Index of the next candidate: uniform draw first, then EI argmax."""
    n = features.shape[0]
    evaluated = history.evaluated
    if len(evaluated) >= n:
        raise Exhausted("every candidate has been evaluated")
    if not history.trials:
        return int(rng.integers(n))
    mean, var = gp.predict(features)
    ei = expected_improvement(mean, var, history.best_cost)
    return _argmax_unevaluated(ei, evaluated)


def propose_next(gp: GpModel, candidates: list[Candidate], history: BoHistory,
                 rng: np.random.Generator | None = None) -> Candidate:
    """Unevaluated candidate with the highest EI; ties go to the earliest one."""
    if not candidates:
        raise InvalidArgument("candidate set is empty")
    done = history.evaluated
    open_pos = [p for p, c in enumerate(candidates) if c.index not in done]
    if not open_pos:
        raise Exhausted("every candidate has been evaluated")
    if not history.trials:
        rng = rng if rng is not None else np.random.default_rng(history.seed)
        return candidates[open_pos[int(rng.integers(len(open_pos)))]]
    feats = np.vstack([np.atleast_1d(candidates[p].features) for p in open_pos])
    mean, var = gp.predict(feats)
    ei = expected_improvement(mean, var, history.best_cost)
    return candidates[open_pos[int(np.argmax(ei))]]


Objective = Callable[[ControllerParams, int], Evaluation]


def _safe_evaluate(objective: Objective, params: ControllerParams, index: int,
                   fail_cost: float) -> Evaluation:
    try:
        ev = objective(params, index)
        if not math.isfinite(ev.cost):
            raise NumericalFailure(f"objective returned non-finite cost {ev.cost}")
        return ev
    except Exception as exc:  # noqa: BLE001 - objective failures count as falls
        log.warning("objective failed on candidate %d: %s", index, exc)
        return Evaluation(cost=fail_cost, fell=True, error=f"{type(exc).__name__}: {exc}")


def run_bo(
    objective: Objective,
    table: ScoreTable,
    kernel_kind: KernelKind | str,
    n_trials: int,
    seed: int,
    mismatch: MismatchModel | None = None,
    config: BoConfig | None = None,
) -> BoHistory:
    """Sequential BO: propose, evaluate, update, refit.

    For ``DoGAdjusted`` the objective must report ``phi_hw``; each trial adds
    ``phi_sim - phi_hw`` to the mismatch model, which shifts every
    candidate's second feature.
    """
    if n_trials < 1:
        raise InvalidArgument("n_trials must be at least 1")
    kind = KernelKind(kernel_kind)
    config = config or BoConfig()
    rng = np.random.default_rng(seed)
    history = BoHistory(kind.value, seed)
    unit = table.normalized()

    if kind is KernelKind.SE:
        hyper = config.se_hyper(table.bounds.dim)
    else:
        hyper = config.dog_hyper(table, 1 if kind is KernelKind.DOG else 2)
    if kind is KernelKind.DOG_ADJUSTED and mismatch is None:
        mismatch = MismatchModel(config.mismatch_hyper(table))

    idx: list[int] = []
    y: list[float] = []
    for trial in range(min(n_trials, len(table))):
        feats = candidate_features(table, kind, mismatch)
        gp = fit_gp(kind, feats[idx], y, hyper, config.prior_mean)
        i = propose_index(gp, feats, history, rng)
        params = table.row_params(i)
        ev = _safe_evaluate(objective, params, i, config.fail_cost)
        best = min(history.best_cost, ev.cost)
        history.trials.append(TrialRecord(
            trial, i, tuple(float(v) for v in table.params[i]), float(table.phi[i]),
            float(ev.cost), bool(ev.fell), float(best), ev.phi_hw, ev.error,
        ))
        idx.append(i)
        y.append(float(ev.cost))

        if kind is KernelKind.DOG_ADJUSTED and ev.phi_hw is not None:
            mismatch = update_mismatch(mismatch, unit[i], table.phi[i], ev.phi_hw)
            if config.mismatch_mode is HyperMode.LEARNED and mismatch.n_obs >= 3:
                fitted = fit_hyperparams(mismatch.inputs, mismatch.differences, KernelKind.SE,
                                         HyperMode.LEARNED, seed=seed * 1013 + trial,
                                         noise_variance=config.noise_variance, prior_mean=0.0)
                mismatch = MismatchModel(fitted, mismatch.inputs, mismatch.differences)
        mode = {KernelKind.SE: config.se_mode, KernelKind.DOG: config.dog_mode,
                KernelKind.DOG_ADJUSTED: config.adjusted_mode}[kind]
        if mode is HyperMode.LEARNED and len(y) >= 2:
            x_fit = candidate_features(table, kind, mismatch)[idx]
            fitted = fit_hyperparams(x_fit, y, kind, HyperMode.LEARNED, seed=seed * 1009 + trial,
                                     noise_variance=config.noise_variance,
                                     prior_mean=config.prior_mean)
            hyper = fitted
    return history


def run_random(objective: Objective, table: ScoreTable, n_trials: int, seed: int,
               config: BoConfig | None = None) -> BoHistory:
    """Baseline arm: candidates drawn uniformly without replacement."""
    config = config or BoConfig()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(table))[:n_trials]
    history = BoHistory("Random", seed)
    for trial, i in enumerate(order):
        i = int(i)
        ev = _safe_evaluate(objective, table.row_params(i), i, config.fail_cost)
        best = min(history.best_cost, ev.cost)
        history.trials.append(TrialRecord(
            trial, i, tuple(float(v) for v in table.params[i]), float(table.phi[i]),
            float(ev.cost), bool(ev.fell), float(best), ev.phi_hw, ev.error,
        ))
    return history
