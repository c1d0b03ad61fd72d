"""Reactive stepping policy: stance GRF laws, foot placement and swing splines.

The scalar control laws are compiled with numba so the simulator loop can call
them directly; the public functions below are thin wrappers over the same
kernels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
from numba import njit

from dogbo.errors import ConfigError, InvalidArgument

NOMINAL_MASS = 64.0
NOMINAL_GRAVITY = 9.81
DEFAULT_CLEARANCE = 0.05

PARAM_NAMES = ("K_pt", "K_dt", "theta_des", "K_pz", "K_dz", "z_des", "k", "C", "T")
FIVE_D_NAMES = ("K_pt", "K_dt", "k", "C", "T")
FROZEN_NAMES = ("theta_des", "K_pz", "K_dz", "z_des")


class Variant(str, enum.Enum):
    FIVE_D = "FiveD"
    NINE_D = "NineD"

    @property
    def names(self) -> tuple[str, ...]:
        return FIVE_D_NAMES if self is Variant.FIVE_D else PARAM_NAMES


@dataclass(frozen=True)
class ControllerParams:
    K_pt: float
    K_dt: float
    theta_des: float
    K_pz: float
    K_dz: float
    z_des: float
    k: float
    C: float
    T: float
    variant: Variant = Variant.NINE_D

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        vals = self.full_vector()
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument("controller parameters must be finite")
        if self.T <= 0.05:
            raise InvalidArgument(f"swing time T={self.T} must exceed 0.05 s")
        if self.z_des <= 0:
            raise InvalidArgument("z_des must be positive")
        for name in ("K_pt", "K_dt", "K_pz", "K_dz", "k"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"gain {name} must be non-negative")

    def full_vector(self) -> np.ndarray:
        """All nine controller values in canonical order."""
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def vector(self) -> np.ndarray:
        """Only the values exposed by this variant's search space."""
        return np.array([getattr(self, n) for n in self.variant.names], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {n: float(getattr(self, n)) for n in PARAM_NAMES}

    @classmethod
    def from_vector(
        cls,
        values: Sequence[float],
        variant: Variant | str = Variant.NINE_D,
        frozen: dict[str, float] | None = None,
    ) -> "ControllerParams":
        variant = Variant(variant)
        names = variant.names
        if len(values) != len(names):
            raise InvalidArgument(
                f"{variant.value} expects {len(names)} values, got {len(values)}"
            )
        kw = dict(frozen if frozen is not None else frozen_values())
        kw.update({n: float(v) for n, v in zip(names, values)})
        return cls(**{n: kw[n] for n in PARAM_NAMES}, variant=variant)


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-constant target speed, one entry per (speed, step count)."""

    segments: tuple[tuple[float, int], ...]

    def __post_init__(self):
        segs = tuple((float(v), int(n)) for v, n in self.segments)
        if not segs:
            raise InvalidArgument("speed profile needs at least one segment")
        for v, n in segs:
            if n < 1 or v < 0 or not np.isfinite(v):
                raise InvalidArgument(f"bad profile segment ({v}, {n})")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, speed: float, steps: int) -> "SpeedProfile":
        return cls(((speed, steps),))

    @property
    def total_steps(self) -> int:
        return sum(n for _, n in self.segments)

    def step_targets(self) -> np.ndarray:
        """Target speed for each step index of the profile."""
        return np.concatenate([np.full(n, v) for v, n in self.segments])

    def target_for_step(self, i: int) -> float:
        for v, n in self.segments:
            if i < n:
                return v
            i -= n
        return self.segments[-1][0]

    def to_text(self) -> str:
        return "".join(f"segment = {v!r}, {n}\n" for v, n in self.segments)

    @classmethod
    def from_text(cls, text: str) -> "SpeedProfile":
        segs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or key.strip() != "segment":
                raise ConfigError(f"profile line {lineno}: expected 'segment = <speed>, <steps>'")
            try:
                speed, steps = (p.strip() for p in value.split(","))
                segs.append((float(speed), int(steps)))
            except ValueError as exc:
                raise ConfigError(f"profile line {lineno}: {exc}") from None
        try:
            return cls(tuple(segs))
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from None


# 0.4 (15) - 1.0 (15) - 0.2 (15) - 0 (5): the 50-step hardware profile.
HARDWARE_5D_PROFILE = SpeedProfile(((0.4, 15), (1.0, 15), (0.2, 15), (0.0, 5)))
EASY_PROFILE = SpeedProfile.constant(0.4, 30)
# Speed-up-down profile; per-segment step counts are our choice.
SPEED_UP_DOWN_PROFILE = SpeedProfile(((0.4, 10), (0.6, 10), (1.0, 10), (0.6, 10), (0.2, 10)))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse '#'-commented ``key: value`` lines."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key: value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def load_frozen(text: str) -> dict[str, float]:
    kv = parse_key_values(text)
    missing = [n for n in FROZEN_NAMES if n not in kv]
    if missing:
        raise ConfigError(f"frozen fixture missing {missing}")
    return {n: float(kv[n]) for n in FROZEN_NAMES}


def _fixture_text(name: str) -> str:
    return resources.files("dogbo").joinpath("data", name).read_text()


def frozen_values() -> dict[str, float]:
    """Hand-tuned values held fixed by the 5-D variant."""
    return load_frozen(_fixture_text("frozen_5d.txt"))


def reference_params() -> ControllerParams:
    """Hand-tuned 9-D point that walks on the nominal model."""
    kv = parse_key_values(_fixture_text("reference_params.txt"))
    return ControllerParams(**{n: float(kv[n]) for n in PARAM_NAMES})


# --- scalar kernels ---------------------------------------------------------

@njit(cache=True)
def grf_law(theta, theta_rate, z, z_rate, K_pt, K_dt, theta_des, K_pz, K_dz, z_des, weight):
    # desired rates are always zero
    fx = K_pt * (theta_des - theta) + K_dt * (0.0 - theta_rate)
    fz = K_pz * (z_des - z) + K_dz * (0.0 - z_rate) + weight
    return fx, fz


@njit(cache=True)
def placement_law(v, v_tgt, d, k, C, T):
    return k * (v - v_tgt) + C * d + 0.5 * v * T


# Inverse constraint matrices in normalized time s = t / T.
# Rows of the constraint system: p(0), p'(0), p''(0), p(1), p'(1), p''(1).
_ENDPOINT_INV = np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.5, 0.0, 0.0, 0.0],
    [-10.0, -6.0, -1.5, 10.0, -4.0, 0.5],
    [15.0, 8.0, 1.5, -15.0, 7.0, -1.0],
    [-6.0, -3.0, -0.5, 6.0, -3.0, 0.5],
])
# Rows: p(0), p'(0), p(1/2), p'(1/2), p(1), p'(1).
_APEX_INV = np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [-23.0, -6.0, 16.0, -8.0, 7.0, -1.0],
    [66.0, 13.0, -32.0, 32.0, -34.0, 5.0],
    [-68.0, -12.0, 16.0, -40.0, 52.0, -8.0],
    [24.0, 4.0, 0.0, 16.0, -24.0, 4.0],
])


@njit(cache=True)
def quintic_endpoint(p0, v0, a0, p1, v1, a1, T):
    """Coefficients (ascending powers of t) matching pos/vel/acc at both ends."""
    b = np.array([p0, v0 * T, a0 * T * T, p1, v1 * T, a1 * T * T])
    c = _ENDPOINT_INV @ b
    scale = 1.0
    for i in range(6):
        c[i] /= scale
        scale *= T
    return c


@njit(cache=True)
def quintic_apex(p0, v0, apex, p1, v1, T):
    """Coefficients passing through ``apex`` with zero slope at t = T/2."""
    b = np.array([p0, v0 * T, apex, 0.0, p1, v1 * T])
    c = _APEX_INV @ b
    scale = 1.0
    for i in range(6):
        c[i] /= scale
        scale *= T
    return c


@njit(cache=True)
def poly_eval(c, t):
    p = c[5]
    v = 5.0 * c[5]
    for i in range(4, -1, -1):
        p = p * t + c[i]
    for i in range(4, 0, -1):
        v = v * t + i * c[i]
    return p, v


# --- public API ---------------------------------------------------------------

@dataclass(frozen=True)
class QuinticSpline:
    """Two-axis degree-5 trajectory; ``coefficients[axis]`` ascend in t."""

    coefficients: np.ndarray
    duration: float

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        t = min(max(float(t), 0.0), self.duration)
        pos = np.empty(2)
        vel = np.empty(2)
        for axis in range(2):
            pos[axis], vel[axis] = poly_eval(self.coefficients[axis], t)
        return pos, vel

    def position(self, t: float) -> np.ndarray:
        return self(t)[0]

    def velocity(self, t: float) -> np.ndarray:
        return self(t)[1]

    def sample(self, n: int = 201) -> np.ndarray:
        ts = np.linspace(0.0, self.duration, n)
        return np.array([self.position(t) for t in ts])


def make_swing_spline(
    start_pos,
    start_vel,
    end_pos,
    end_vel=(0.0, 0.0),
    duration: float = 0.35,
    clearance: float | None = DEFAULT_CLEARANCE,
) -> QuinticSpline:
    """Swing-foot trajectory from the current foot state to the landing target.

    The horizontal axis is the quintic with zero acceleration at both ends.
    With ``clearance`` set, the vertical axis instead passes through an apex
    ``clearance`` above the higher endpoint at half the duration; with
    ``clearance=None`` it is built like the horizontal axis.
    """
    if not duration > 0:
        raise InvalidArgument(f"spline duration must be positive, got {duration}")
    sp, sv = np.asarray(start_pos, float), np.asarray(start_vel, float)
    ep, ev = np.asarray(end_pos, float), np.asarray(end_vel, float)
    cx = quintic_endpoint(sp[0], sv[0], 0.0, ep[0], ev[0], 0.0, duration)
    if clearance is None:
        cz = quintic_endpoint(sp[1], sv[1], 0.0, ep[1], ev[1], 0.0, duration)
    else:
        if clearance < 0:
            raise InvalidArgument("clearance must be non-negative")
        apex = max(sp[1], ep[1]) + clearance
        cz = quintic_apex(sp[1], sv[1], apex, ep[1], ev[1], duration)
    return QuinticSpline(np.vstack([cx, cz]), float(duration))


def stance_grf(state, params: ControllerParams, mass: float = NOMINAL_MASS,
               gravity: float = NOMINAL_GRAVITY) -> tuple[float, float]:
    """Desired ground reaction force (Fx, Fz) for the stance leg.

    ``mass`` is the controller's belief about the robot mass, used for the
    gravity feedforward; it stays nominal when the plant is perturbed.
    """
    return grf_law(
        state.trunk_pitch, state.trunk_pitch_rate,
        state.com_position[1], state.com_velocity[1],
        params.K_pt, params.K_dt, params.theta_des,
        params.K_pz, params.K_dz, params.z_des, mass * gravity,
    )


def foot_placement(state, params: ControllerParams, v_tgt: float) -> float:
    """Landing position of the swing foot relative to the CoM at touchdown."""
    d = state.com_position[0] - state.stance_foot_position[0]
    return placement_law(state.com_velocity[0], v_tgt, d, params.k, params.C, params.T)
