"""Planar point-foot biped: rigid trunk on two massless telescoping legs.

Sign conventions: x forward, z up; positive trunk pitch leans the trunk
backwards, so the pelvis sits at ``com + offset * (sin(pitch), -cos(pitch))``.
The stance foot always rests on the ground (z = 0).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from dogbo.controller import (
    DEFAULT_CLEARANCE,
    NOMINAL_MASS,
    ControllerParams,
    SpeedProfile,
    grf_law,
    placement_law,
    poly_eval,
    quintic_apex,
    quintic_endpoint,
)
from dogbo.errors import InvalidArgument, NumericalFailure

FALL_HEIGHT_FRACTION = 0.5
FALL_PITCH = 0.5
# Lever arm converting leg axial force into an equivalent joint torque.
AXIAL_LEVER = 0.1


@dataclass(frozen=True)
class ModelParams:
    trunk_mass: float = 64.0
    trunk_inertia: float = 2.2
    com_to_pelvis_offset: float = 0.19
    leg_max_length: float = 0.9
    gravity: float = 9.81
    friction_coeff: float = 1.0
    control_dt: float = 1e-3

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgument(f"{name} must be positive and finite, got {value}")
        if not 1e-4 <= self.control_dt <= 1e-2:
            raise InvalidArgument(f"control_dt={self.control_dt} outside [1e-4, 1e-2]")

    def as_dict(self) -> dict[str, float]:
        return {
            "trunk_mass": self.trunk_mass,
            "trunk_inertia": self.trunk_inertia,
            "com_to_pelvis_offset": self.com_to_pelvis_offset,
            "leg_max_length": self.leg_max_length,
            "gravity": self.gravity,
            "friction_coeff": self.friction_coeff,
            "control_dt": self.control_dt,
        }

    def vector(self) -> np.ndarray:
        return np.array(list(self.as_dict().values()), dtype=float)

    def fingerprint(self) -> str:
        return ";".join(f"{k}={v!r}" for k, v in self.as_dict().items())


NOMINAL_MODEL = ModelParams()


class Phase(str, enum.Enum):
    STANCE = "Stance"
    FALLING = "Falling"
    HALTED = "Halted"


@dataclass(frozen=True)
class RobotState:
    time: float = 0.0
    com_position: tuple[float, float] = (0.0, 0.85)
    com_velocity: tuple[float, float] = (0.0, 0.0)
    trunk_pitch: float = 0.0
    trunk_pitch_rate: float = 0.0
    stance_foot_position: tuple[float, float] = (0.0, 0.0)
    swing_foot_position: tuple[float, float] = (0.0, 0.0)
    swing_foot_velocity: tuple[float, float] = (0.0, 0.0)
    phase: Phase = Phase.STANCE
    swing_elapsed: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([
            self.time, *self.com_position, *self.com_velocity,
            self.trunk_pitch, self.trunk_pitch_rate,
            self.stance_foot_position[0],
            *self.swing_foot_position, *self.swing_foot_velocity,
            self.swing_elapsed,
        ], dtype=float)

    @classmethod
    def from_array(cls, s: np.ndarray, phase: Phase = Phase.STANCE) -> "RobotState":
        s = [float(v) for v in s]
        return cls(
            time=s[0], com_position=(s[1], s[2]), com_velocity=(s[3], s[4]),
            trunk_pitch=s[5], trunk_pitch_rate=s[6],
            stance_foot_position=(s[7], 0.0),
            swing_foot_position=(s[8], s[9]), swing_foot_velocity=(s[10], s[11]),
            phase=phase, swing_elapsed=s[12],
        )


def standing_state(z: float, speed: float = 0.0) -> RobotState:
    """Both feet under the CoM, trunk upright, moving forward at ``speed``."""
    return RobotState(com_position=(0.0, z), com_velocity=(speed, 0.0))


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    duration: float
    max_leg_retraction: float
    com_height_start: float
    com_height_end: float
    trunk_lean_start: float
    trunk_lean_end: float
    avg_speed: float
    distance_start: float
    torque_abs_sum: float


@dataclass(frozen=True)
class EpisodeResult:
    steps: tuple[StepRecord, ...]
    t_sim: float
    t_max: float
    fell: bool
    x_fall: float
    per_step_speeds: tuple[float, ...] = field(default=())
    numerical_failure: bool = False
    final_state: RobotState | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)


# State vector layout shared with the compiled loop.
T_, X, Z, VX, VZ, TH, OM, PX, SX, SZ, SVX, SVZ, EL = range(13)
_STEP_FIELDS = 10


@njit(cache=True)
def _pelvis(s, off):
    return s[X] + off * math.sin(s[TH]), s[Z] - off * math.cos(s[TH])


@njit(cache=True)
def _clamp_grf(s, fx, fz, model):
    """Unilateral contact, friction cone and leg-length limit."""
    off, lmax, mu = model[2], model[3], model[5]
    hx, hz = _pelvis(s, off)
    lx, lz = s[PX] - hx, -hz
    if lx * lx + lz * lz > lmax * lmax:
        return 0.0, 0.0
    if not fz > 0.0:
        return 0.0, 0.0
    lim = mu * fz
    if fx > lim:
        fx = lim
    elif fx < -lim:
        fx = -lim
    return fx, fz


@njit(cache=True)
def _equiv_torque(s, fx, fz, off):
    hx, hz = _pelvis(s, off)
    lx, lz = s[PX] - hx, -hz
    hip = lx * fz - lz * fx
    length = math.sqrt(lx * lx + lz * lz)
    axial = (fx * lx + fz * lz) / length if length > 0 else 0.0
    return abs(hip) + AXIAL_LEVER * abs(axial)


@njit(cache=True)
def _integrate_trunk(s, fx, fz, model):
    """Advance CoM and pitch one tick with forces held over the interval."""
    m, inertia, g, dt = model[0], model[1], model[4], model[6]
    rx, rz = s[PX] - s[X], -s[Z]
    ax = fx / m
    az = fz / m - g
    alpha = (rx * fz - rz * fx) / inertia
    # exact for constant acceleration over the tick
    s[X] += s[VX] * dt + 0.5 * ax * dt * dt
    s[Z] += s[VZ] * dt + 0.5 * az * dt * dt
    s[TH] += s[OM] * dt + 0.5 * alpha * dt * dt
    s[VX] += ax * dt
    s[VZ] += az * dt
    s[OM] += alpha * dt


@njit(cache=True)
def _leg_length(s, fx_, fz_, off):
    hx, hz = _pelvis(s, off)
    return math.sqrt((fx_ - hx) ** 2 + (fz_ - hz) ** 2)


@njit(cache=True)
def _finite(s):
    for v in s:
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True)
def _episode_loop(ctrl, step_targets, model, t_max, s0, weight, clearance):
    K_pt, K_dt, th_des, K_pz, K_dz, z_des, k, C, T = (
        ctrl[0], ctrl[1], ctrl[2], ctrl[3], ctrl[4], ctrl[5], ctrl[6], ctrl[7], ctrl[8])
    off, dt = model[2], model[6]
    n_ticks = int(round(t_max / dt))
    max_steps = step_targets.shape[0]
    rec = np.zeros((max_steps, _STEP_FIELDS))
    s = s0.copy()
    x0 = s[X]
    z_floor = FALL_HEIGHT_FRACTION * z_des

    cz = quintic_apex(s[SZ], s[SVZ], max(s[SZ], 0.0) + clearance, 0.0, 0.0, T)
    n_steps = 0
    step_t0 = s[T_]
    x_start, z_start, th_start = s[X], s[Z], s[TH]
    torque = 0.0
    lift_len = _leg_length(s, s[SX], s[SZ], off)
    retraction = 0.0
    fell = False
    failed = False
    halted = False
    tick = 0
    while tick < n_ticks:
        if s[Z] < z_floor or abs(s[TH]) > FALL_PITCH:
            fell = True
            break
        v_tgt = step_targets[n_steps]
        fx, fz = grf_law(s[TH], s[OM], s[Z], s[VZ], K_pt, K_dt, th_des, K_pz, K_dz, z_des, weight)
        fx, fz = _clamp_grf(s, fx, fz, model)
        torque += _equiv_torque(s, fx, fz, off) * dt

        # swing foot: horizontal re-planned every tick, vertical fixed at liftoff
        remaining = T - s[EL]
        xp = placement_law(s[VX], v_tgt, s[X] - s[PX], k, C, T)
        target = s[X] + s[VX] * max(remaining, 0.0) + xp
        if remaining > dt:
            cx = quintic_endpoint(s[SX], s[SVX], 0.0, target, 0.0, 0.0, remaining)
            s[SX], s[SVX] = poly_eval(cx, dt)
        else:
            s[SX], s[SVX] = target, 0.0
        if s[EL] + dt >= T - 1e-9:
            s[SZ], s[SVZ] = 0.0, 0.0
        else:
            s[SZ], s[SVZ] = poly_eval(cz, s[EL] + dt)

        _integrate_trunk(s, fx, fz, model)
        tick += 1
        s[T_] = s0[T_] + tick * dt
        s[EL] += dt
        if not _finite(s):
            fell = True
            failed = True
            break
        retraction = max(retraction, lift_len - _leg_length(s, s[SX], s[SZ], off))

        if s[EL] > dt * 0.5 and s[SZ] <= 0.0 and s[SVZ] <= 0.0:
            duration = s[T_] - step_t0
            rec[n_steps, 0] = n_steps
            rec[n_steps, 1] = duration
            rec[n_steps, 2] = retraction
            rec[n_steps, 3] = z_start
            rec[n_steps, 4] = s[Z]
            rec[n_steps, 5] = th_start
            rec[n_steps, 6] = s[TH]
            rec[n_steps, 7] = (s[X] - x_start) / duration
            rec[n_steps, 8] = x_start - x0
            rec[n_steps, 9] = torque
            n_steps += 1
            # single stance: old stance leg lifts off as the new one lands
            old = s[PX]
            s[PX] = s[SX]
            s[SX], s[SZ], s[SVX], s[SVZ] = old, 0.0, 0.0, 0.0
            s[EL] = 0.0
            cz = quintic_apex(0.0, 0.0, clearance, 0.0, 0.0, T)
            step_t0 = s[T_]
            x_start, z_start, th_start = s[X], s[Z], s[TH]
            torque = 0.0
            lift_len = _leg_length(s, s[SX], s[SZ], off)
            retraction = 0.0
            if n_steps >= max_steps:
                halted = True
                break
    return rec[:n_steps], s, fell, failed, halted


def run_episode(
    params: ControllerParams,
    profile: SpeedProfile,
    model: ModelParams = NOMINAL_MODEL,
    t_max: float = 3.5,
    initial_state: RobotState | None = None,
    feedforward_mass: float = NOMINAL_MASS,
    clearance: float = DEFAULT_CLEARANCE,
) -> EpisodeResult:
    """Roll out the stepping controller until it falls, finishes the profile or times out.

    ``feedforward_mass`` is what the controller believes the robot weighs; it
    stays at the nominal value when ``model`` is a perturbed plant. Without
    an ``initial_state`` the robot starts upright and at rest.
    """
    if not t_max > 0:
        raise InvalidArgument("t_max must be positive")
    if initial_state is None:
        initial_state = standing_state(params.z_des)
    s0 = initial_state.to_array()
    rec, s, fell, failed, halted = _episode_loop(
        params.full_vector(), profile.step_targets(), model.vector(), float(t_max),
        s0, feedforward_mass * model.gravity, float(clearance),
    )
    steps = tuple(
        StepRecord(int(r[0]), *(float(v) for v in r[1:])) for r in rec
    )
    phase = Phase.FALLING if (failed or fell) else Phase.HALTED
    t_sim = float(s[T_] - s0[T_])
    x_fall = max(0.0, float(s[X] - s0[X])) if math.isfinite(s[X]) else 0.0
    return EpisodeResult(
        steps=steps,
        t_sim=min(t_sim, float(t_max)),
        t_max=float(t_max),
        fell=bool(fell),
        x_fall=x_fall,
        per_step_speeds=tuple(st.avg_speed for st in steps),
        numerical_failure=bool(failed),
        final_state=RobotState.from_array(s, phase) if _finite(s) else None,
    )


def integrate_step(state: RobotState, grf, swing_target, model: ModelParams = NOMINAL_MODEL) -> RobotState:
    """Advance ``state`` by one control tick under the commanded ground force.

    The force is clamped to the contact constraints first. ``swing_target`` is
    ``(position, velocity)`` of the swing foot at the end of the tick; the
    massless leg reaches it exactly.
    """
    if state.phase is not Phase.STANCE:
        raise InvalidArgument("integrate_step requires a stance-phase state")
    s = state.to_array()
    mv = model.vector()
    fx, fz = _clamp_grf(s, float(grf[0]), float(grf[1]), mv)
    _integrate_trunk(s, fx, fz, mv)
    (px, pz), (vx, vz) = swing_target
    s[SX], s[SZ], s[SVX], s[SVZ] = px, pz, vx, vz
    s[T_] += model.control_dt
    s[EL] += model.control_dt
    if not _finite(s):
        raise NumericalFailure("non-finite state after integration")
    return RobotState.from_array(s)


def applied_grf(state: RobotState, grf, model: ModelParams = NOMINAL_MODEL) -> tuple[float, float]:
    """The force actually transmitted after contact clamping."""
    return _clamp_grf(state.to_array(), float(grf[0]), float(grf[1]), model.vector())


def trunk_energy(state: RobotState, model: ModelParams = NOMINAL_MODEL) -> float:
    vx, vz = state.com_velocity
    return (0.5 * model.trunk_mass * (vx * vx + vz * vz)
            + 0.5 * model.trunk_inertia * state.trunk_pitch_rate ** 2
            + model.trunk_mass * model.gravity * state.com_position[1])


def perturb_model(base: ModelParams, magnitude: float, seed: int) -> ModelParams:
    """Scale trunk mass and inertia by independent factors in [1 - m, 1 + m]."""
    if not 0 <= magnitude < 1:
        raise InvalidArgument(f"perturbation magnitude {magnitude} outside [0, 1)")
    if magnitude == 0:
        return base
    rng = np.random.default_rng(seed)
    f_mass, f_inertia = rng.uniform(1.0 - magnitude, 1.0 + magnitude, size=2)
    return replace(
        base,
        trunk_mass=base.trunk_mass * float(f_mass),
        trunk_inertia=base.trunk_inertia * float(f_inertia),
    )
