"""Trial costs: a fall cliff plus speed tracking (and effort, in simulation)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from dogbo.controller import SpeedProfile
from dogbo.errors import InvalidArgument
from dogbo.sim import EpisodeResult

FALL_BASE = 100.0
# Sum of per-step equivalent-torque integrals (N*m*s) that maps to c_tr = 1.
DEFAULT_TORQUE_NORM = 5000.0


class CostKind(str, enum.Enum):
    HARDWARE = "Hardware"
    SIMULATION = "Simulation"


@dataclass(frozen=True)
class TrialCost:
    cost: float
    fell: bool
    x_fall: float
    speed_error: float
    c_tr: float = 0.0


def speed_error(episode: EpisodeResult, profile: SpeedProfile) -> float:
    """Mean absolute per-step deviation from the profile's target speed."""
    if not episode.steps:
        return abs(profile.target_for_step(0))
    targets = profile.step_targets()
    errs = [
        abs(s.avg_speed - targets[min(i, len(targets) - 1)])
        for i, s in enumerate(episode.steps)
    ]
    return float(np.mean(errs))


def cost_hardware(episode: EpisodeResult, profile: SpeedProfile) -> TrialCost:
    if episode.fell:
        return TrialCost(FALL_BASE - episode.x_fall, True, episode.x_fall, speed_error(episode, profile))
    err = speed_error(episode, profile)
    return TrialCost(err, False, episode.x_fall, err)


def cost_simulation(episode: EpisodeResult, profile: SpeedProfile,
                    torque_norm_const: float = DEFAULT_TORQUE_NORM) -> TrialCost:
    if not torque_norm_const > 0:
        raise InvalidArgument("torque normalization constant must be positive")
    c_tr = sum(s.torque_abs_sum for s in episode.steps) / torque_norm_const
    if episode.fell:
        base = cost_hardware(episode, profile)
        return TrialCost(base.cost, True, base.x_fall, base.speed_error, c_tr)
    err = speed_error(episode, profile)
    return TrialCost(err + c_tr, False, episode.x_fall, err, c_tr)


def trial_cost(episode: EpisodeResult, profile: SpeedProfile, kind: CostKind | str,
               torque_norm_const: float = DEFAULT_TORQUE_NORM) -> TrialCost:
    if CostKind(kind) is CostKind.HARDWARE:
        return cost_hardware(episode, profile)
    return cost_simulation(episode, profile, torque_norm_const)
