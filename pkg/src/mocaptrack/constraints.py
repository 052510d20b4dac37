"""Periodic reparameterization of bounded joint angles.

An unconstrained joint parameter ``Theta`` maps to a joint angle through

    theta = (u - l) / 2 * sin(Theta) + (l + u) / 2

so every real ``Theta`` yields an angle in ``[l, u]``. A Kalman filter can
then estimate ``Theta`` freely while the reported angles always respect the
joint limits. The sine is preferred over a sigmoid because its slope does
not vanish for large parameters, only periodically at the bounds.

Rejected alternatives (equality-constraint pseudo-measurements, projection
of the posterior mean, pdf truncation, sample truncation) are not provided.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

FROM_ANGLE_TOL = 1e-9
THETA_VARIANCE_LIMIT = (np.pi / 2) ** 2


class ThetaUncertaintyWarning(RuntimeWarning):
    """Joint-parameter variance is too large for the periodic mapping."""


@dataclass(frozen=True)
class JointBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("joint bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"lower bound {self.lower} must be below upper bound {self.upper}")


def to_angle(Theta, lower, upper):
    """Map joint parameters to angles inside ``[lower, upper]``.

    Works elementwise on scalars or arrays. The final ``clip`` only absorbs
    last-ulp rounding of the affine map; it never changes a value by more
    than one rounding step.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    half = 0.5 * (upper - lower)
    mid = 0.5 * (lower + upper)
    theta = half * np.sin(Theta) + mid
    return np.clip(theta, lower, upper)


def to_angles(Theta, model) -> np.ndarray:
    """Componentwise :func:`to_angle` for a ``(..., J)`` parameter array."""
    Theta = np.asarray(Theta, dtype=float)
    if Theta.shape[-1:] != (model.n_joints,):
        raise ValueError(f"expected {model.n_joints} joint parameters, got shape {Theta.shape}")
    return to_angle(Theta, model.lower, model.upper)


def angle_derivative(Theta, lower, upper):
    """d theta / d Theta."""
    return 0.5 * (np.asarray(upper) - np.asarray(lower)) * np.cos(Theta)


def from_angle(theta, lower, upper):
    """Principal-branch inverse of :func:`to_angle`; result in ``[-pi/2, pi/2]``.

    Raises
    ------
    ValueError
        If an angle lies outside its bounds by more than ``1e-9`` rad.
    """
    theta = np.asarray(theta, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(theta < lower - FROM_ANGLE_TOL) or np.any(theta > upper + FROM_ANGLE_TOL):
        raise ValueError("joint angle outside its bounds")
    z = (2.0 * theta - lower - upper) / (upper - lower)
    return np.arcsin(np.clip(z, -1.0, 1.0))


def from_angles(theta, model) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (model.n_joints,):
        raise ValueError(f"expected {model.n_joints} joint angles, got shape {theta.shape}")
    return from_angle(theta, model.lower, model.upper)


def check_theta_variance(variances, names=None) -> bool:
    """Warn when a joint-parameter variance exceeds ``(pi/2)**2``.

    Returns True when a warning was issued.
    """
    variances = np.asarray(variances)
    bad = np.flatnonzero(variances > THETA_VARIANCE_LIMIT)
    if bad.size == 0:
        return False
    which = [names[i] for i in bad] if names is not None else bad.tolist()
    warnings.warn(
        f"joint parameter variance above (pi/2)^2 for {which}; the periodic "
        "mapping may alias", ThetaUncertaintyWarning, stacklevel=2)
    return True
