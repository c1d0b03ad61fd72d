"""Precomputed gait-score tables over controller-parameter grids."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from dogbo.controller import (
    ControllerParams,
    SpeedProfile,
    Variant,
    frozen_values,
    parse_key_values,
)
from dogbo.dog import DEFAULT_THRESHOLDS, DogThresholds, episode_score
from dogbo.errors import ConfigError, FormatError, InvalidArgument, VersionError
from dogbo.sim import NOMINAL_MODEL, ModelParams, NumericalFailure, run_episode

SCHEMA_VERSION = 1
SHORT_SIM_SECONDS = 3.5
TABLE_TARGET_SPEED = 0.5

# Search box for each parameter (low, high). Tuned once on this simulator so
# random sampling lands near the walking rates reported for the robot.
DEFAULT_BOUNDS_9D = {
    "K_pt": (10.0, 600.0),
    "K_dt": (1.0, 60.0),
    "theta_des": (-0.5, 0.5),
    "K_pz": (300.0, 8000.0),
    "K_dz": (10.0, 600.0),
    "z_des": (0.60, 0.92),
    "k": (0.05, 0.7),
    "C": (-1.0, 1.0),
    "T": (0.2, 0.5),
}


@dataclass(frozen=True)
class SearchBounds:
    variant: Variant
    names: tuple[str, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]
    frozen: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if tuple(self.names) != self.variant.names:
            raise InvalidArgument(f"bounds for {self.variant.value} must cover {self.variant.names}")
        lo, hi = np.asarray(self.low, float), np.asarray(self.high, float)
        if lo.shape != hi.shape or lo.shape[0] != len(self.names):
            raise InvalidArgument("bounds arrays do not match parameter names")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
            raise InvalidArgument("every bound needs finite low < high")

    @classmethod
    def default(cls, variant: Variant | str = Variant.NINE_D) -> "SearchBounds":
        variant = Variant(variant)
        names = variant.names
        frozen = () if variant is Variant.NINE_D else tuple(sorted(frozen_values().items()))
        return cls(variant, names,
                   tuple(DEFAULT_BOUNDS_9D[n][0] for n in names),
                   tuple(DEFAULT_BOUNDS_9D[n][1] for n in names),
                   frozen)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def lows(self) -> np.ndarray:
        return np.asarray(self.low, float)

    @property
    def highs(self) -> np.ndarray:
        return np.asarray(self.high, float)

    def frozen_dict(self) -> dict[str, float] | None:
        return dict(self.frozen) if self.frozen else None

    def contains(self, values, tol: float = 1e-12) -> bool:
        v = np.asarray(values, float)
        return bool(np.all(v >= self.lows - tol) and np.all(v <= self.highs + tol))

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, float) - self.lows) / (self.highs - self.lows)

    def denormalize(self, unit) -> np.ndarray:
        return self.lows + np.asarray(unit, float) * (self.highs - self.lows)

    def to_params(self, values) -> ControllerParams:
        return ControllerParams.from_vector(values, self.variant, self.frozen_dict() or frozen_values())

    def to_text(self) -> str:
        lines = [f"variant: {self.variant.value}"]
        lines += [f"{n}: {lo!r}, {hi!r}" for n, lo, hi in zip(self.names, self.low, self.high)]
        lines += [f"frozen.{n}: {v!r}" for n, v in self.frozen]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SearchBounds":
        kv = parse_key_values(text)
        try:
            variant = Variant(kv.pop("variant", Variant.NINE_D.value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        frozen = {}
        for key in [k for k in kv if k.startswith("frozen.")]:
            frozen[key.split(".", 1)[1]] = float(kv.pop(key))
        try:
            pairs = {n: tuple(float(p) for p in kv[n].split(",")) for n in variant.names}
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad bounds file: {exc}") from None
        if variant is Variant.FIVE_D and not frozen:
            frozen = frozen_values()
        try:
            return cls(variant, variant.names,
                       tuple(pairs[n][0] for n in variant.names),
                       tuple(pairs[n][1] for n in variant.names),
                       tuple(sorted(frozen.items())))
        except (IndexError, InvalidArgument) as exc:
            raise ConfigError(f"bad bounds file: {exc}") from None

    def fingerprint(self) -> str:
        return self.to_text().strip().replace("\n", ";")


def sample_grid(bounds: SearchBounds, n: int, seed: int = 0, scheme: str = "Sobol") -> np.ndarray:
    """``n`` points inside ``bounds`` (rows in the variant's parameter order)."""
    if n < 1:
        raise InvalidArgument("grid size must be at least 1")
    if scheme == "Sobol":
        with warnings.catch_warnings():
            # balance warning for n that is not a power of two
            warnings.simplefilter("ignore", UserWarning)
            unit = qmc.Sobol(bounds.dim, scramble=True, seed=seed).random(n)
    elif scheme == "UniformRandom":
        unit = np.random.default_rng(seed).random((n, bounds.dim))
    else:
        raise InvalidArgument(f"unknown sampling scheme {scheme!r}")
    return np.clip(bounds.denormalize(unit), bounds.lows, bounds.highs)


@dataclass(frozen=True)
class TableMeta:
    model_fingerprint: str
    short_sim_duration: float
    target_speed: float
    thresholds: str
    seed: int
    scheme: str
    row_count: int

    def as_dict(self) -> dict[str, str]:
        return {
            "model": self.model_fingerprint,
            "short_sim_duration": repr(self.short_sim_duration),
            "target_speed": repr(self.target_speed),
            "thresholds": self.thresholds,
            "seed": str(self.seed),
            "scheme": self.scheme,
            "row_count": str(self.row_count),
        }


@dataclass(frozen=True)
class ScoreTable:
    """Grid of controller parameters with their short-simulation scores.

    ``metric_sums`` columns are the per-episode sums of M1..M4 before time
    scaling, so ``phi == metric_sums.sum(axis=1) * time_fraction``.
    """

    bounds: SearchBounds
    params: np.ndarray
    phi: np.ndarray
    time_fraction: np.ndarray
    metric_sums: np.ndarray
    failed: np.ndarray
    meta: TableMeta
    _frozen_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self) -> int:
        return int(self.phi.shape[0])

    def row_params(self, i: int) -> ControllerParams:
        return self.bounds.to_params(self.params[i])

    def normalized(self) -> np.ndarray:
        if "unit" not in self._frozen_cache:
            self._frozen_cache["unit"] = self.bounds.normalize(self.params)
        return self._frozen_cache["unit"]

    def fingerprint(self) -> str:
        return f"{self.bounds.fingerprint()}|{self.meta.model_fingerprint}|{self.meta.thresholds}"

    def __eq__(self, other):
        if not isinstance(other, ScoreTable):
            return NotImplemented
        return (
            self.bounds == other.bounds and self.meta == other.meta
            and all(np.array_equal(getattr(self, f), getattr(other, f))
                    for f in ("params", "phi", "time_fraction", "metric_sums", "failed"))
        )

    __hash__ = None


def _score_point(args):
    values, bounds, model, profile, duration, thresholds = args
    try:
        ep = run_episode(bounds.to_params(values), profile, model, duration)
        sc = episode_score(ep, thresholds)
    except (NumericalFailure, InvalidArgument, FloatingPointError):
        return 0.0, 0.0, (0.0, 0.0, 0.0, 0.0), True
    m = sc.metric_sums()
    return sc.phi, sc.time_fraction, tuple(float(v) for v in m), ep.numerical_failure


def _score_chunk(args):
    chunk, bounds, model, profile, duration, thresholds = args
    return [_score_point((v, bounds, model, profile, duration, thresholds)) for v in chunk]


def build_table(
    grid: np.ndarray,
    bounds: SearchBounds,
    model: ModelParams = NOMINAL_MODEL,
    short_sim_duration: float = SHORT_SIM_SECONDS,
    target_speed: float = TABLE_TARGET_SPEED,
    thresholds: DogThresholds = DEFAULT_THRESHOLDS,
    seed: int = 0,
    scheme: str = "Sobol",
    workers: int | None = 1,
    chunk_size: int = 500,
) -> ScoreTable:
    """Score every grid point with one short simulation.

    ``workers > 1`` fans chunks out to processes; results are placed by index
    so the table does not depend on evaluation order.
    """
    if not short_sim_duration > 0:
        raise InvalidArgument("short simulation duration must be positive")
    grid = np.asarray(grid, dtype=float).reshape(-1, bounds.dim)
    # enough steps that the profile never ends inside the window
    profile = SpeedProfile.constant(target_speed, int(math.ceil(short_sim_duration / 0.05)) + 2)
    chunks = [grid[i:i + chunk_size] for i in range(0, len(grid), chunk_size)]
    jobs = [(c, bounds, model, profile, short_sim_duration, thresholds) for c in chunks]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_score_chunk, jobs))
    else:
        parts = [_score_chunk(j) for j in jobs]
    rows = [r for part in parts for r in part]
    n = len(rows)
    return ScoreTable(
        bounds=bounds,
        params=grid.copy(),
        phi=np.array([r[0] for r in rows], dtype=float).reshape(n),
        time_fraction=np.array([r[1] for r in rows], dtype=float).reshape(n),
        metric_sums=np.array([r[2] for r in rows], dtype=float).reshape(n, 4),
        failed=np.array([r[3] for r in rows], dtype=bool).reshape(n),
        meta=TableMeta(model.fingerprint(), float(short_sim_duration), float(target_speed),
                       thresholds.fingerprint(), int(seed), scheme, n),
    )


def generate_table(n: int, bounds: SearchBounds | None = None, seed: int = 0,
                   scheme: str = "Sobol", **kw) -> ScoreTable:
    bounds = bounds or SearchBounds.default()
    return build_table(sample_grid(bounds, n, seed, scheme), bounds, seed=seed, scheme=scheme, **kw)


_COLUMNS_TAIL = ("phi", "time_fraction", "m1_sum", "m2_sum", "m3_sum", "m4_sum", "failed")


def save_table(table: ScoreTable, path: str | os.PathLike) -> None:
    lines = [f"# schema_version: {SCHEMA_VERSION}"]
    lines += [f"# bounds.{line}" for line in table.bounds.to_text().splitlines()]
    lines += [f"# {k}: {v}" for k, v in table.meta.as_dict().items()]
    lines.append(",".join(table.bounds.names + _COLUMNS_TAIL))
    for i in range(len(table)):
        vals = [repr(float(v)) for v in table.params[i]]
        vals.append(repr(float(table.phi[i])))
        vals.append(repr(float(table.time_fraction[i])))
        vals += [repr(float(v)) for v in table.metric_sums[i]]
        vals.append("1" if table.failed[i] else "0")
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_table(path: str | os.PathLike, expect: ScoreTable | dict | None = None) -> ScoreTable:
    """Read a table written by :func:`save_table`.

    ``expect`` may be a reference table or a mapping with any of ``model``,
    ``thresholds``, ``bounds`` fingerprints; a mismatch raises VersionError.
    """
    text = Path(path).read_text()
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if header.get("schema_version") != str(SCHEMA_VERSION):
        raise VersionError(f"unsupported table schema {header.get('schema_version')!r}")
    bounds_text = "\n".join(
        f"{k[len('bounds.'):]}: {v}" for k, v in header.items() if k.startswith("bounds.")
    )
    try:
        bounds = SearchBounds.from_text(bounds_text)
        meta = TableMeta(
            header["model"], float(header["short_sim_duration"]), float(header["target_speed"]),
            header["thresholds"], int(header["seed"]), header["scheme"], int(header["row_count"]),
        )
    except (KeyError, ValueError, ConfigError) as exc:
        raise FormatError(f"malformed table header: {exc}") from None
    if not body or body[0].split(",") != list(bounds.names + _COLUMNS_TAIL):
        raise FormatError("missing or unexpected column header")
    rows = body[1:]
    if len(rows) != meta.row_count:
        raise FormatError(f"expected {meta.row_count} rows, found {len(rows)}")
    width = bounds.dim + len(_COLUMNS_TAIL)
    try:
        data = [r.split(",") for r in rows]
        if any(len(r) != width for r in data):
            raise ValueError("ragged row")
        arr = np.array([[float(v) for v in r] for r in data], dtype=float).reshape(len(rows), width)
    except ValueError as exc:
        raise FormatError(f"unparseable row: {exc}") from None
    d = bounds.dim
    table = ScoreTable(
        bounds=bounds,
        params=arr[:, :d].copy(),
        phi=arr[:, d].copy(),
        time_fraction=arr[:, d + 1].copy(),
        metric_sums=arr[:, d + 2:d + 6].copy(),
        failed=arr[:, d + 6] != 0,
        meta=meta,
    )
    if expect is not None:
        check_compatible(table, expect)
    return table


def check_compatible(table: ScoreTable, expect: ScoreTable | dict) -> None:
    if isinstance(expect, ScoreTable):
        expect = {"model": expect.meta.model_fingerprint, "thresholds": expect.meta.thresholds,
                  "bounds": expect.bounds.fingerprint()}
    actual = {"model": table.meta.model_fingerprint, "thresholds": table.meta.thresholds,
              "bounds": table.bounds.fingerprint()}
    for key, want in expect.items():
        if key not in actual:
            raise InvalidArgument(f"unknown fingerprint field {key!r}")
        if actual[key] != want:
            raise VersionError(f"table {key} fingerprint mismatch: {actual[key]!r} != {want!r}")

