"""Gait score against evaluation cost over random controllers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from dogbo.controller import EASY_PROFILE, SpeedProfile
from dogbo.harness.costs import CostKind, trial_cost
from dogbo.sim import NOMINAL_MODEL, ModelParams, run_episode
from dogbo.tablegen import SHORT_SIM_SECONDS, TABLE_TARGET_SPEED, SearchBounds, build_table, sample_grid


@dataclass(frozen=True)
class PhiCostSample:
    params: np.ndarray
    phi: np.ndarray
    cost: np.ndarray
    fell: np.ndarray

    @property
    def spearman(self) -> float:
        return float(spearmanr(self.phi, self.cost).statistic)

    def to_csv(self, names) -> str:
        lines = [",".join((*names, "phi", "cost", "fell"))]
        for p, phi, c, f in zip(self.params, self.phi, self.cost, self.fell):
            lines.append(",".join([*(repr(float(v)) for v in p), repr(float(phi)),
                                   repr(float(c)), str(int(f))]))
        return "\n".join(lines) + "\n"


def phi_cost_pairs(n: int, seed: int = 0, bounds: SearchBounds | None = None,
                   profile: SpeedProfile = EASY_PROFILE, model: ModelParams = NOMINAL_MODEL,
                   t_max: float = 30.0, kind: CostKind = CostKind.SIMULATION,
                   short_sim_duration: float = SHORT_SIM_SECONDS,
                   target_speed: float = TABLE_TARGET_SPEED) -> PhiCostSample:
    """Short-sim score and long-run cost for ``n`` uniformly drawn controllers."""
    bounds = bounds or SearchBounds.default()
    grid = sample_grid(bounds, n, seed, "UniformRandom")
    table = build_table(grid, bounds, model, short_sim_duration, target_speed, seed=seed,
                        scheme="UniformRandom")
    costs, fell = [], []
    for i in range(n):
        c = trial_cost(run_episode(table.row_params(i), profile, model, t_max), profile, kind)
        costs.append(c.cost)
        fell.append(c.fell)
    return PhiCostSample(grid, table.phi.copy(), np.array(costs), np.array(fell, dtype=bool))

