"""Seeded BO campaigns on pseudo-hardware (perturbed simulator) models."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dogbo.bo import BoConfig, BoHistory, Evaluation, run_bo, run_random
from dogbo.controller import (
    EASY_PROFILE,
    HARDWARE_5D_PROFILE,
    SPEED_UP_DOWN_PROFILE,
    SpeedProfile,
    Variant,
    parse_key_values,
)
from dogbo.dog import episode_score, truncate_episode
from dogbo.errors import ConfigError, InvalidArgument
from dogbo.harness.costs import DEFAULT_TORQUE_NORM, CostKind, trial_cost
from dogbo.sim import NOMINAL_MODEL, ModelParams, perturb_model, run_episode
from dogbo.tablegen import ScoreTable, load_table

log = logging.getLogger(__name__)

RANDOM_ARM = "Random"
KERNEL_ALIASES = {
    "se": "SE",
    "dog": "DoG",
    "dog-adj": "DoGAdjusted",
    "dogadjusted": "DoGAdjusted",
    "random": RANDOM_ARM,
}
BUILTIN_PROFILES = {
    "easy": EASY_PROFILE,
    "speed-up-down": SPEED_UP_DOWN_PROFILE,
    "hardware-5d": HARDWARE_5D_PROFILE,
}
COST_ALIASES = {"hw": CostKind.HARDWARE, "hardware": CostKind.HARDWARE,
                "sim": CostKind.SIMULATION, "simulation": CostKind.SIMULATION}


def kernel_name(text: str) -> str:
    try:
        return KERNEL_ALIASES[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown kernel {text!r}; expected one of {sorted(KERNEL_ALIASES)}") from None


def cost_kind(text: str) -> CostKind:
    try:
        return COST_ALIASES[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown cost kind {text!r}") from None


def load_profile(spec: str, base_dir: Path | None = None) -> SpeedProfile:
    """A builtin profile name or a path to a ``segment = v, n`` file."""
    if spec in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[spec]
    path = Path(spec)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    try:
        return SpeedProfile.from_text(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read profile {spec!r}: {exc}") from None


@dataclass(frozen=True)
class CampaignConfig:
    variant: Variant
    profile: SpeedProfile
    kernels: tuple[str, ...]
    n_runs: int
    trials_per_run: int
    seed: int
    perturbation: float
    table_path: Path | None
    cost_kind: CostKind
    t_max: float
    output_dir: Path | None
    # evaluation models get their trunk mass multiplied by this on top of
    # the random perturbation; used to inject a systematic sim/eval offset
    mass_scale: float = 1.0
    pilot_draws: int = 100
    torque_norm: float = DEFAULT_TORQUE_NORM
    workers: int = 1
    # seconds of each evaluation episode scored for the mismatch model;
    # None uses the table's short-sim duration
    score_window: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "cost_kind", CostKind(self.cost_kind))
        object.__setattr__(self, "kernels", tuple(kernel_name(k) for k in self.kernels))
        if self.n_runs < 1 or self.trials_per_run < 1:
            raise ConfigError("n_runs and trials_per_run must be at least 1")
        if not self.kernels:
            raise ConfigError("campaign needs at least one kernel")
        if len(set(self.kernels)) != len(self.kernels):
            raise ConfigError("duplicate kernel in campaign")
        if not 0 <= self.perturbation < 1:
            raise ConfigError("perturbation must lie in [0, 1)")
        if not (self.t_max > 0 and self.mass_scale > 0 and self.torque_norm > 0):
            raise ConfigError("t_max, mass_scale and torque_norm must be positive")
        if self.score_window is not None and not self.score_window > 0:
            raise ConfigError("score_window must be positive")
        if self.pilot_draws < 2 or self.workers < 1:
            raise ConfigError("pilot_draws must be at least 2 and workers at least 1")

    @classmethod
    def from_text(cls, text: str, base_dir: str | Path | None = None) -> "CampaignConfig":
        kv = parse_key_values(text)
        base = Path(base_dir) if base_dir is not None else None

        def path(key):
            if key not in kv:
                return None
            p = Path(kv[key])
            return p if p.is_absolute() or base is None else base / p

        def num(key, cast, default=None):
            if key not in kv:
                if default is None:
                    raise ConfigError(f"campaign config is missing {key!r}")
                return default
            try:
                return cast(kv[key])
            except ValueError:
                raise ConfigError(f"bad value for {key!r}: {kv[key]!r}") from None

        try:
            variant = Variant(kv.get("variant", Variant.NINE_D.value))
        except ValueError:
            raise ConfigError(f"unknown variant {kv['variant']!r}") from None
        known = {"variant", "profile", "kernels", "n_runs", "trials_per_run", "seed",
                 "perturbation", "table", "cost", "t_max", "output", "mass_scale",
                 "pilot_draws", "torque_norm", "workers", "score_window"}
        unknown = sorted(set(kv) - known)
        if unknown:
            raise ConfigError(f"unknown campaign keys {unknown}")
        return cls(
            variant=variant,
            profile=load_profile(kv.get("profile", "speed-up-down"), base),
            kernels=tuple(k for k in kv.get("kernels", "DoG, SE, Random").split(",") if k.strip()),
            n_runs=num("n_runs", int),
            trials_per_run=num("trials_per_run", int),
            seed=num("seed", int, 0),
            perturbation=num("perturbation", float, 0.15),
            table_path=path("table"),
            cost_kind=cost_kind(kv.get("cost", "Simulation")),
            t_max=num("t_max", float, 30.0),
            output_dir=path("output"),
            mass_scale=num("mass_scale", float, 1.0),
            pilot_draws=num("pilot_draws", int, 100),
            torque_norm=num("torque_norm", float, DEFAULT_TORQUE_NORM),
            workers=num("workers", int, 1),
            score_window=num("score_window", float, 0.0) or None,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read campaign config: {exc}") from None
        return cls.from_text(text, path.parent)


@dataclass(frozen=True)
class TrialRow:
    """One line of the long-format campaign report."""

    run: int
    kernel: str
    trial: int
    cost: float
    best_so_far: float
    fell: bool
    phi_sim: float


@dataclass(frozen=True)
class RunResult:
    kernel: str
    run: int
    rows: tuple[TrialRow, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CampaignReport:
    config: CampaignConfig
    runs: list[RunResult]
    signal_variance: float
    table_fingerprint: str = ""
    extras: dict = field(default_factory=dict)

    def rows(self) -> list[TrialRow]:
        return [r for run in self.runs if run.ok for r in run.rows]

    def failures(self) -> list[RunResult]:
        return [r for r in self.runs if not r.ok]

    def kernel_rows(self, kernel: str) -> list[TrialRow]:
        return [r for r in self.rows() if r.kernel == kernel]


def evaluation_model(config: CampaignConfig, run: int) -> ModelParams:
    """Pseudo-hardware model for run ``run``: the same for every kernel arm."""
    model = perturb_model(NOMINAL_MODEL, config.perturbation, config.seed + run)
    if config.mass_scale != 1.0:
        model = replace(model, trunk_mass=model.trunk_mass * config.mass_scale)
    return model


def make_objective(config: CampaignConfig, model: ModelParams, score_window: float):
    """Full-length episode on ``model`` scored with the configured cost.

    The returned ``phi_hw`` scores the first ``score_window`` seconds of the
    same episode, which is what the mismatch model learns from.
    """
    def objective(params, index):
        ep = run_episode(params, config.profile, model, config.t_max)
        c = trial_cost(ep, config.profile, config.cost_kind, config.torque_norm)
        phi_hw = episode_score(truncate_episode(ep, score_window)).phi
        return Evaluation(c.cost, c.fell, phi_hw, c.x_fall, c.c_tr)
    return objective


def pilot_variance(config: CampaignConfig, table: ScoreTable) -> float:
    """Variance of the cost over a seeded random sample on the nominal model."""
    rng = np.random.default_rng(config.seed)
    n = min(config.pilot_draws, len(table))
    idx = rng.choice(len(table), size=n, replace=False)
    costs = [
        trial_cost(run_episode(table.row_params(int(i)), config.profile, NOMINAL_MODEL, config.t_max),
                   config.profile, config.cost_kind, config.torque_norm).cost
        for i in idx
    ]
    return max(float(np.var(costs)), 1.0)


def history_rows(history: BoHistory, run: int, kernel: str) -> tuple[TrialRow, ...]:
    return tuple(
        TrialRow(run, kernel, t.trial_index + 1, t.cost, t.posterior_best, t.fell, t.phi_sim)
        for t in history.trials
    )


def _execute_run(config: CampaignConfig, table: ScoreTable, bo_config: BoConfig,
                 kernel: str, run: int) -> RunResult:
    try:
        model = evaluation_model(config, run)
        objective = make_objective(config, model, config.score_window or table.meta.short_sim_duration)
        seed = config.seed + run
        if kernel == RANDOM_ARM:
            history = run_random(objective, table, config.trials_per_run, seed, bo_config)
        else:
            history = run_bo(objective, table, kernel, config.trials_per_run, seed, config=bo_config)
        return RunResult(kernel, run, history_rows(history, run, kernel))
    except Exception as exc:  # noqa: BLE001 - one bad run must not sink the campaign
        log.error("run %d of %s failed: %s", run, kernel, exc)
        return RunResult(kernel, run, (), f"{type(exc).__name__}: {exc}")


_WORKER_STATE: tuple | None = None


def _init_worker(config, table, bo_config):
    global _WORKER_STATE
    _WORKER_STATE = (config, table, bo_config)


def _worker_run(job):
    config, table, bo_config = _WORKER_STATE
    return _execute_run(config, table, bo_config, *job)


def run_campaign(config: CampaignConfig, table: ScoreTable | None = None) -> CampaignReport:
    """Run every (kernel, run) pair and collect the results in a fixed order."""
    if table is None:
        if config.table_path is None:
            raise ConfigError("campaign config names no table")
        table = load_table(config.table_path)
    if table.bounds.variant is not config.variant:
        raise ConfigError(f"table is {table.bounds.variant.value}, config wants {config.variant.value}")
    if config.trials_per_run > len(table):
        raise InvalidArgument("more trials per run than table candidates")

    sigma2 = pilot_variance(config, table)
    bo_config = BoConfig(signal_variance=sigma2)
    jobs = [(k, r) for k in config.kernels for r in range(config.n_runs)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker,
                                 initargs=(config, table, bo_config)) as pool:
            results = list(pool.map(_worker_run, jobs))
    else:
        results = [_execute_run(config, table, bo_config, k, r) for k, r in jobs]
    return CampaignReport(config, results, sigma2, table.fingerprint())


def trials_to_reach(costs, threshold: float) -> int | None:
    """1-based index of the first cost at or below ``threshold``."""
    for i, c in enumerate(costs, 1):
        if c <= threshold:
            return i
    return None


def median_trials_to_target(report: CampaignReport, kernel: str, reference: str,
                            tolerance: float = 0.05) -> float:
    """Median trials for ``kernel`` to get within ``tolerance`` of ``reference``'s optimum.

    The reference optimum is the mean over runs of the best cost the
    reference arm holds after its last trial (the end of its mean best-cost
    curve). Runs that never get within ``tolerance`` of it count as one trial
    past the budget.
    """
    finals = {}
    for row in report.kernel_rows(reference):
        if row.trial >= finals.get(row.run, (0, 0.0))[0]:
            finals[row.run] = (row.trial, row.best_so_far)
    if not finals:
        raise InvalidArgument(f"no runs for reference arm {reference}")
    target = float(np.mean([b for _, b in finals.values()])) * (1.0 + tolerance)
    by_run: dict[int, list[float]] = {}
    for row in report.kernel_rows(kernel):
        by_run.setdefault(row.run, []).append(row.cost)
    if not by_run:
        raise InvalidArgument(f"no runs for arm {kernel}")
    budget = report.config.trials_per_run
    counts = [trials_to_reach(costs, target) or budget + 1 for _, costs in sorted(by_run.items())]
    return float(np.median(counts))
