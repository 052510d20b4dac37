"""Sample-based Gaussian filtering primitives.

A :class:`SampleSet` is a weighted point set with zero mean and identity
covariance. It is mapped affinely onto any Gaussian estimate, pushed through
a (batched) nonlinear function, and the resulting weighted moments drive a
standard Kalman measurement update. This is the linear-regression Kalman
filter family; the unscented filter and the smart-sampling filter differ
only in the sample set they use.

Functions passed to :func:`statistical_moments` and :func:`predict_sampled`
are batched: they map an ``(S, N)`` array of points to an ``(S, D)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm, qmc

SYMMETRY_RTOL = 1e-9


class FilterError(ArithmeticError):
    """Numerical breakdown inside the filter (non-PD or singular matrices)."""


def _chol(matrix: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise FilterError(f"{what} is not positive definite") from None


@dataclass(frozen=True, eq=False)
class GaussianEstimate:
    """Mean vector and symmetric positive-definite covariance.

    The lower Cholesky factor is computed on construction, which doubles as
    the positive-definiteness check.
    """

    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {n}")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > SYMMETRY_RTOL * scale:
            raise FilterError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", _chol(cov, "covariance"))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Symmetric positive-semidefinite noise covariance (R or Q)."""

    covariance: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.array(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"noise covariance must be square, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=SYMMETRY_RTOL, atol=0.0):
            raise ValueError("noise covariance is not symmetric")
        if cov.size and np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("noise covariance has negative eigenvalues")
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def diagonal(cls, values) -> "NoiseSpec":
        return cls(np.diag(np.asarray(values, dtype=float)))


def _noise_matrix(noise) -> np.ndarray:
    if isinstance(noise, NoiseSpec):
        return noise.covariance
    return NoiseSpec(noise).covariance


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Points of shape ``(S, N)`` with weights of shape ``(S,)``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] != w.shape[0]:
            raise ValueError("points must be (S, N) with one weight per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def covariance(self) -> np.ndarray:
        d = self.points - self.mean()
        return (self.weights[:, None] * d).T @ d


def default_kappa(dimension: int) -> float:
    """``3 - N``, raised where needed so that ``N + kappa >= 0.5``."""
    return max(3.0 - dimension, 0.5 - dimension)


def unscented_samples(dimension: int, kappa: float | None = None) -> SampleSet:
    """Symmetric 2N+1 sigma points at ``0`` and ``+-sqrt(N + kappa) e_i``."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if kappa is None:
        kappa = default_kappa(dimension)
    lam = dimension + kappa
    if not lam > 0:
        raise ValueError(f"N + kappa must be positive, got {lam}")
    spread = np.sqrt(lam) * np.eye(dimension)
    points = np.vstack([np.zeros(dimension), spread, -spread])
    weights = np.full(2 * dimension + 1, 0.5 / lam)
    weights[0] = kappa / lam
    return SampleSet(points, weights)


def smart_samples(dimension: int, count: int, seed: int = 0) -> SampleSet:
    """``count`` equally weighted points with exact zero mean and unit covariance.

    Points come from a scrambled Halton sequence pushed through the normal
    quantile function. When ``count >= 2N`` the set is made point-symmetric
    (antithetic pairs, plus the origin for odd counts) so odd moments vanish
    too. A final whitening transform forces the covariance to identity.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if count < dimension + 1:
        raise ValueError(f"need at least N + 1 = {dimension + 1} samples, got {count}")
    symmetric = count >= 2 * dimension
    n_draw = count // 2 if symmetric else count
    halton = qmc.Halton(d=dimension, scramble=True, seed=np.random.default_rng(seed))
    u = halton.random(n_draw)
    raw = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    if symmetric:
        parts = [raw, -raw]
        if count % 2:
            parts.insert(0, np.zeros((1, dimension)))
        pts = np.vstack(parts)
    else:
        pts = raw - raw.mean(axis=0)
    w = np.full(count, 1.0 / count)
    cov = (w[:, None] * pts).T @ pts
    L = _chol(cov, "raw sample covariance")
    pts = sla.solve_triangular(L, pts.T, lower=True).T
    if not symmetric:
        pts = pts - w @ pts
    return SampleSet(pts, w)


def map_to_gaussian(samples: SampleSet, estimate: GaussianEstimate) -> np.ndarray:
    """Affine map ``mean + L p`` of every standard sample ``p``; shape ``(S, N)``."""
    if samples.dim != estimate.dim:
        raise ValueError(f"sample dimension {samples.dim} != estimate dimension {estimate.dim}")
    return estimate.mean + samples.points @ estimate.cholesky.T


def _propagate(samples, estimate, f):
    x = map_to_gaussian(samples, estimate)
    y = np.asarray(f(x), dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != samples.count:
        raise ValueError("function must return one row per sample point")
    if not np.all(np.isfinite(y)):
        raise FilterError("function produced non-finite values")
    w = samples.weights
    ym = w @ y
    yc = y - ym
    return x, ym, yc, w


def statistical_moments(samples: SampleSet, estimate: GaussianEstimate, f, noise):
    """Sample estimates of ``E[f(x)]``, ``Cov[f(x)] + R`` and ``Cov[x, f(x)]``.

    ``x ~ N(estimate.mean, estimate.covariance)``. Returns ``(mean, C_m, C_xm)``.
    """
    x, ym, yc, w = _propagate(samples, estimate, f)
    R = _noise_matrix(noise)
    if R.shape != (ym.size, ym.size):
        raise ValueError(f"noise shape {R.shape} does not match output dimension {ym.size}")
    wyc = w[:, None] * yc
    cm = yc.T @ wyc
    cm = 0.5 * (cm + cm.T) + R
    cxm = (x - estimate.mean).T @ wyc
    return ym, cm, cxm


def kalman_update(prior: GaussianEstimate, moments, measurement) -> GaussianEstimate:
    """Kalman correction from precomputed measurement moments.

    ``mean + C_xm C_m^-1 (y - m)`` and ``C - C_xm C_m^-1 C_xm^T``. The
    innovation covariance is factorized, never inverted.

    Raises
    ------
    FilterError
        If ``C_m`` is not positive definite or the posterior covariance
        loses positive definiteness.
    """
    ym, cm, cxm = moments
    y = np.asarray(measurement, dtype=float).reshape(-1)
    if y.shape != ym.shape:
        raise ValueError(f"measurement length {y.size} != predicted length {ym.size}")
    L = _chol(cm, "innovation covariance")
    # U = C_xm L^-T, so K = U L^-1 and C_xm C_m^-1 C_xm^T = U U^T
    U = sla.solve_triangular(L, cxm.T, lower=True).T
    v = sla.solve_triangular(L, y - ym, lower=True)
    mean = prior.mean + U @ v
    cov = prior.covariance - U @ U.T
    cov = 0.5 * (cov + cov.T)
    try:
        return GaussianEstimate(mean, cov)
    except FilterError:
        raise FilterError("posterior covariance is not positive definite") from None


def predict_random_walk(prior: GaussianEstimate, noise) -> GaussianEstimate:
    """Closed-form random-walk prediction: mean kept, covariance plus Q."""
    Q = _noise_matrix(noise)
    if Q.shape != prior.covariance.shape:
        raise ValueError(f"process noise shape {Q.shape} != state covariance {prior.covariance.shape}")
    return GaussianEstimate(prior.mean.copy(), prior.covariance + Q)


def predict_sampled(prior: GaussianEstimate, a, noise, samples: SampleSet) -> GaussianEstimate:
    """Prediction through a nonlinear system function using the sample set."""
    Q = _noise_matrix(noise)
    _, ym, yc, w = _propagate(samples, prior, a)
    if Q.shape != (ym.size, ym.size):
        raise ValueError(f"process noise shape {Q.shape} does not match state dimension {ym.size}")
    cov = yc.T @ (w[:, None] * yc)
    return GaussianEstimate(ym, 0.5 * (cov + cov.T) + Q)


def make_samples(source: str, dimension: int, seed: int = 0) -> SampleSet:
    """Sample set from a source name: ``"unscented"`` or ``"smart:S"``."""
    source = source.strip().lower()
    if source == "unscented":
        return unscented_samples(dimension)
    if source.startswith("smart"):
        _, _, count = source.partition(":")
        return smart_samples(dimension, int(count) if count else 301, seed)
    raise ValueError(f"unknown sample source {source!r}; use 'unscented' or 'smart:S'")
