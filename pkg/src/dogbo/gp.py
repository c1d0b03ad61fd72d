"""Gaussian-process regression with squared-exponential kernels.

All three kernel kinds share one functional form and differ only in the
feature space they act on:

* ``SE``          -- controller parameters (normalized to the search box),
* ``DoG``         -- the scalar gait score of each point,
* ``DoGAdjusted`` -- ``[score, predicted sim/hardware score mismatch]``.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from dogbo.errors import InvalidArgument, NumericalFailure

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
DEFAULT_NOISE = 1e-2
N_RESTARTS = 8


class KernelKind(str, enum.Enum):
    SE = "SE"
    DOG = "DoG"
    DOG_ADJUSTED = "DoGAdjusted"


class HyperMode(str, enum.Enum):
    FIXED = "Fixed"
    LEARNED = "Learned"


class HyperparameterFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hyperparams:
    """Kernel hyperparameters. ``length_scales`` holds l (not l**2)."""

    signal_variance: float
    length_scales: tuple[float, ...]
    noise_variance: float = DEFAULT_NOISE
    mode: HyperMode = HyperMode.FIXED
    converged: bool = True

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "mode", HyperMode(self.mode))
        vals = (self.signal_variance, self.noise_variance, *ls)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise InvalidArgument(f"hyperparameters must be strictly positive: {vals}")

    @property
    def dim(self) -> int:
        return len(self.length_scales)


def expected_dim(kind: KernelKind, hyper: Hyperparams) -> int:
    kind = KernelKind(kind)
    if kind is KernelKind.DOG:
        return 1
    if kind is KernelKind.DOG_ADJUSTED:
        return 2
    return hyper.dim


def _check_features(kind, x, hyper) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = expected_dim(kind, hyper)
    if x.shape[1] != d or hyper.dim != d:
        raise InvalidArgument(
            f"{KernelKind(kind).value} kernel expects {d}-D inputs "
            f"and {d} length scales, got {x.shape[1]}-D inputs and {hyper.dim}"
        )
    return x


def gram(kind, a, b, hyper: Hyperparams) -> np.ndarray:
    """Cross-covariance matrix between the rows of ``a`` and ``b``."""
    a = _check_features(kind, a, hyper) / hyper.length_scales
    b = _check_features(kind, b, hyper) / hyper.length_scales
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    np.maximum(sq, 0.0, out=sq)
    return hyper.signal_variance * np.exp(-0.5 * sq)


def kernel_eval(kind, a, b, hyper: Hyperparams) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise InvalidArgument(f"input shapes differ: {a.shape} vs {b.shape}")
    _check_features(kind, a, hyper)
    r = (a - b) / np.asarray(hyper.length_scales)
    return float(hyper.signal_variance * np.exp(-0.5 * float(r @ r)))


def stable_cholesky(k: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    scale = max(float(np.mean(np.diag(k))), 1.0) if k.size else 1.0
    for jitter in JITTER_LADDER:
        try:
            mat = k + (jitter * scale) * np.eye(k.shape[0]) if jitter else k
            return scipy.linalg.cholesky(mat, lower=True, check_finite=True), jitter * scale
        except (np.linalg.LinAlgError, ValueError):
            continue
    raise NumericalFailure("covariance matrix is not positive definite even with jitter")


@dataclass(frozen=True)
class GpModel:
    """A conditioned GP; immutable, so concurrent queries are safe."""

    kernel_kind: KernelKind
    hyper: Hyperparams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    covariance_factor: np.ndarray
    alpha: np.ndarray
    prior_mean: float = 0.0

    @property
    def n_train(self) -> int:
        return int(self.train_targets.shape[0])

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of ``query``."""
        q = _check_features(self.kernel_kind, query, self.hyper)
        prior_var = self.hyper.signal_variance + self.hyper.noise_variance
        if self.n_train == 0:
            return np.full(q.shape[0], self.prior_mean), np.full(q.shape[0], prior_var)
        ks = gram(self.kernel_kind, q, self.train_inputs, self.hyper)
        mean = self.prior_mean + ks @ self.alpha
        v = scipy.linalg.solve_triangular(self.covariance_factor, ks.T, lower=True)
        var = prior_var - np.sum(v * v, axis=0)
        if np.any(var < -1e-10 * max(prior_var, 1.0)):
            log.debug("clamping negative posterior variance %g", var.min())
        return mean, np.maximum(var, 0.0)


def fit_gp(kind, inputs, targets, hyper: Hyperparams, prior_mean: float = 0.0) -> GpModel:
    """Condition a zero-or-constant-mean GP on ``(inputs, targets)``."""
    kind = KernelKind(kind)
    y = np.asarray(targets, dtype=float).reshape(-1)
    d = expected_dim(kind, hyper)
    x = np.asarray(inputs, dtype=float).reshape(len(y), d) if len(y) else np.zeros((0, d))
    if len(y):
        x = _check_features(kind, x, hyper)
        k = gram(kind, x, x, hyper) + hyper.noise_variance * np.eye(len(y))
        chol, _ = stable_cholesky(k)
        alpha = scipy.linalg.cho_solve((chol, True), y - prior_mean)
    else:
        chol = np.zeros((0, 0))
        alpha = np.zeros(0)
    return GpModel(kind, hyper, x, y, chol, alpha, float(prior_mean))


def gp_posterior(model: GpModel, query) -> tuple[float, float]:
    mean, var = model.predict(np.atleast_2d(np.asarray(query, dtype=float)))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(kind, inputs, targets, hyper: Hyperparams, prior_mean: float = 0.0) -> float:
    y = np.asarray(targets, dtype=float).reshape(-1) - prior_mean
    x = _check_features(kind, np.asarray(inputs, float).reshape(len(y), -1), hyper)
    k = gram(kind, x, x, hyper) + hyper.noise_variance * np.eye(len(y))
    try:
        chol = scipy.linalg.cholesky(k, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    a = scipy.linalg.cho_solve((chol, True), y)
    return float(-0.5 * y @ a - np.sum(np.log(np.diag(chol))) - 0.5 * len(y) * np.log(2 * np.pi))


def _neg_lml(theta, sqdiff, y, noise):
    """Negative log marginal likelihood at ``theta = [log s2, log l_1..l_d]``.

    ``sqdiff[d]`` holds the pairwise squared differences along feature ``d``.
    """
    scaled = np.tensordot(np.exp(-2.0 * theta[1:]), sqdiff, axes=1)
    k = np.exp(theta[0]) * np.exp(-0.5 * scaled) + noise * np.eye(len(y))
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return 1e25
    a = scipy.linalg.cho_solve((chol, True), y, check_finite=False)
    return float(0.5 * y @ a + np.sum(np.log(np.diag(chol))) + 0.5 * len(y) * np.log(2 * np.pi))


def fit_hyperparams(
    inputs,
    targets,
    kind,
    mode: HyperMode | str = HyperMode.LEARNED,
    fixed: Hyperparams | None = None,
    seed: int = 0,
    noise_variance: float = DEFAULT_NOISE,
    prior_mean: float | None = None,
    n_restarts: int = N_RESTARTS,
) -> Hyperparams:
    """Maximize the log marginal likelihood over signal variance and length scales.

    Multi-start Nelder-Mead in log space; each parameter is bounded to
    [1e-3, 1e3] times its data scale. Noise variance stays at
    ``noise_variance``. ``prior_mean=None`` centers the targets on their
    sample mean. ``Fixed`` mode returns ``fixed`` untouched.
    """
    mode = HyperMode(mode)
    if mode is HyperMode.FIXED:
        if fixed is None:
            raise InvalidArgument("Fixed mode requires configured hyperparameters")
        return fixed
    kind = KernelKind(kind)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(y) < 2:
        raise InvalidArgument("need at least two training points to fit hyperparameters")
    x = np.asarray(inputs, dtype=float).reshape(len(y), -1)
    if kind is not KernelKind.SE and x.shape[1] != (1 if kind is KernelKind.DOG else 2):
        raise InvalidArgument(f"{kind.value} kernel got {x.shape[1]}-D inputs")
    m0 = float(np.mean(y)) if prior_mean is None else float(prior_mean)
    yc = y - m0

    var_scale = max(float(np.mean(yc ** 2)), noise_variance)
    span = np.ptp(x, axis=0)
    ls_scale = np.where(span > 0, span, 1.0)
    scales = np.concatenate([[var_scale], ls_scale])
    lo = np.log(scales * 1e-3)
    hi = np.log(scales * 1e3)
    sqdiff = (x.T[:, :, None] - x.T[:, None, :]) ** 2

    def unpack(theta):
        theta = np.clip(theta, lo, hi)
        return Hyperparams(float(np.exp(theta[0])), tuple(np.exp(theta[1:])),
                           noise_variance, HyperMode.LEARNED)

    rng = np.random.default_rng(seed)
    starts = [np.log(scales)]
    starts += [rng.uniform(lo, hi) for _ in range(max(n_restarts - 1, 0))]
    def objective(theta):
        if np.any(theta < lo) or np.any(theta > hi):
            return 1e25
        return _neg_lml(theta, sqdiff, yc, noise_variance)

    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = scipy.optimize.minimize(
            objective, theta0, method="Nelder-Mead",
            options={"maxfev": 100 * len(theta0), "xatol": 1e-3, "fatol": 1e-6},
        )
        if np.isfinite(res.fun) and res.fun < 1e25 and res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None:
        warnings.warn("all hyperparameter restarts failed; keeping data-scale defaults",
                      HyperparameterFitWarning, stacklevel=2)
        return replace(unpack(np.log(scales)), converged=False)
    return unpack(best_theta)


@dataclass(frozen=True)
class MismatchModel:
    """GP over controller features predicting sim-minus-hardware score."""

    hyper: Hyperparams
    inputs: tuple[tuple[float, ...], ...] = ()
    differences: tuple[float, ...] = ()
    _gp: GpModel | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self._gp is None:
            x = np.array(self.inputs, dtype=float).reshape(len(self.differences), self.hyper.dim)
            object.__setattr__(self, "_gp", fit_gp(KernelKind.SE, x, self.differences, self.hyper))

    @property
    def n_obs(self) -> int:
        return len(self.differences)

    def predict_mean(self, features) -> np.ndarray:
        """Posterior mean g* at each row; zero before any observation."""
        f = np.atleast_2d(np.asarray(features, dtype=float))
        if self.n_obs == 0:
            return np.zeros(f.shape[0])
        return self._gp.predict(f)[0]


def update_mismatch(model: MismatchModel, x, phi_sim: float, phi_hw: float) -> MismatchModel:
    """Append one observed score difference and refactorize."""
    x = tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))
    if len(x) != model.hyper.dim:
        raise InvalidArgument(f"mismatch model expects {model.hyper.dim}-D inputs")
    return MismatchModel(
        model.hyper,
        model.inputs + (x,),
        model.differences + (float(phi_sim) - float(phi_hw),),
    )
