"""Per-step gait metrics and the time-scaled episode score.

Each completed step earns up to three binary points (swing-leg retraction,
steady CoM height, steady trunk lean) plus its average forward speed. The sum
over steps is scaled by the fraction of the requested time the episode lasted,
which keeps fast-chattering gaits from inflating their score.
"""

from __future__ import annotations

from dataclasses import dataclass

from dogbo.errors import InvalidArgument
from dogbo.sim import EpisodeResult, StepRecord


@dataclass(frozen=True)
class DogThresholds:
    retraction_min: float = 0.03
    com_height_tol: float = 0.05
    trunk_lean_tol: float = 0.1
    chatter_step_time: float = 0.1

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not value > 0:
                raise InvalidArgument(f"threshold {name} must be positive")

    def as_dict(self) -> dict[str, float]:
        return {
            "retraction_min": self.retraction_min,
            "com_height_tol": self.com_height_tol,
            "trunk_lean_tol": self.trunk_lean_tol,
            "chatter_step_time": self.chatter_step_time,
        }

    def fingerprint(self) -> str:
        return ";".join(f"{k}={v!r}" for k, v in self.as_dict().items())


DEFAULT_THRESHOLDS = DogThresholds()


@dataclass(frozen=True)
class GaitScore:
    phi: float
    score_total: float
    time_fraction: float
    per_step: tuple[tuple[int, int, int, float], ...]
    chattered: bool = False

    def metric_sums(self) -> tuple[int, int, int, float]:
        m1 = sum(s[0] for s in self.per_step)
        m2 = sum(s[1] for s in self.per_step)
        m3 = sum(s[2] for s in self.per_step)
        m4 = sum(s[3] for s in self.per_step)
        return m1, m2, m3, m4


def step_metrics(record: StepRecord, thresholds: DogThresholds = DEFAULT_THRESHOLDS):
    """(M1, M2, M3, M4) for one step; M4 is the raw average speed."""
    if not record.duration > 0:
        raise InvalidArgument("step duration must be positive")
    m1 = int(record.max_leg_retraction > thresholds.retraction_min)
    m2 = int(abs(record.com_height_end - record.com_height_start) < thresholds.com_height_tol)
    m3 = int(abs(record.trunk_lean_end - record.trunk_lean_start) < thresholds.trunk_lean_tol)
    return m1, m2, m3, float(record.avg_speed)


def episode_score(episode: EpisodeResult, thresholds: DogThresholds = DEFAULT_THRESHOLDS) -> GaitScore:
    if not episode.t_max > 0:
        raise InvalidArgument("episode t_max must be positive")
    per_step = tuple(step_metrics(s, thresholds) for s in episode.steps)
    total = 0.0
    for m1, m2, m3, m4 in per_step:
        total += m1 + m2 + m3 + m4
    frac = min(max(episode.t_sim / episode.t_max, 0.0), 1.0)
    chattered = any(s.duration < thresholds.chatter_step_time for s in episode.steps)
    return GaitScore(
        phi=total * frac if per_step else 0.0,
        score_total=total,
        time_fraction=frac,
        per_step=per_step,
        chattered=chattered,
    )


def truncate_episode(episode: EpisodeResult, t_window: float) -> EpisodeResult:
    """View of ``episode`` restricted to its first ``t_window`` seconds.

    Only steps that finished inside the window are kept; the window becomes
    the episode's requested duration.
    """
    if not t_window > 0:
        raise InvalidArgument("window must be positive")
    kept, elapsed = [], 0.0
    for s in episode.steps:
        elapsed += s.duration
        if elapsed > t_window + 1e-9:
            break
        kept.append(s)
    t_sim = min(episode.t_sim, t_window)
    return EpisodeResult(
        steps=tuple(kept),
        t_sim=t_sim,
        t_max=t_window,
        fell=episode.fell and episode.t_sim <= t_window,
        x_fall=episode.x_fall,
        per_step_speeds=tuple(s.avg_speed for s in kept),
    )
