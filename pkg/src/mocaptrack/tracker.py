"""Per-frame pose tracking from labeled marker measurements.

The state is ``[root position (3), root roll/pitch/yaw (3), joint
parameters (J)]``. Joint parameters are unconstrained; angles are recovered
through :func:`mocaptrack.constraints.to_angles`, so any state maps to a pose
that satisfies the joint limits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constraints import check_theta_variance, from_angles, to_angle, to_angles
from .gaussian import (
    FilterError,
    GaussianEstimate,
    NoiseSpec,
    SampleSet,
    kalman_update,
    make_samples,
    predict_random_walk,
    statistical_moments,
)
from .kinematics import KinematicModel, Pose


class TrackingError(RuntimeError):
    """A frame could not be processed; ``frame`` holds its index."""

    def __init__(self, message: str, frame: int | None = None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


@dataclass(frozen=True)
class StateLayout:
    n_joints: int
    joint_names: tuple[str, ...] = ()

    @classmethod
    def from_model(cls, model: KinematicModel) -> "StateLayout":
        return cls(model.n_joints, tuple(model.joint_names))

    @property
    def dim(self) -> int:
        return 6 + self.n_joints

    position = slice(0, 3)
    orientation = slice(3, 6)

    @property
    def joints(self) -> slice:
        return slice(6, 6 + self.n_joints)

    @property
    def names(self) -> list[str]:
        joints = list(self.joint_names) or [f"theta_{k + 1}" for k in range(self.n_joints)]
        return ["rx", "ry", "rz", "roll", "pitch", "yaw"] + joints

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass
class MarkerFrame:
    """One capture frame. Rows of ``positions`` follow ``labels``.

    Hidden markers may still carry a (ground-truth) position; the tracker
    ignores every row whose ``visible`` flag is False.
    """

    index: int
    time: float
    labels: tuple[str, ...]
    positions: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.positions = np.asarray(self.positions, dtype=float).reshape(len(self.labels), 3)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(len(self.labels))

    @property
    def visible_count(self) -> int:
        return int(self.visible.sum())

    def with_visibility(self, visible) -> "MarkerFrame":
        return MarkerFrame(self.index, self.time, self.labels, self.positions, visible)

    def position_of(self, label: str) -> np.ndarray:
        return self.positions[self.labels.index(label)]


# ---------------------------------------------------------------------------
# configuration

DEFAULT_MARKER_VARIANCE = 1e-4     # mm^2, per axis
DEFAULT_ROOT_POSITION_NOISE = 25.0 # mm^2 per frame
DEFAULT_ANGLE_NOISE = 1e-10        # rad^2 per frame
DEFAULT_INIT_ORIENTATION_VAR = 1e-6
DEFAULT_INIT_JOINT_VAR = 1e-10
SCATTER_FLOOR = 1e-6             # mm^2


def _as_3x3(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(3)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise ValueError(f"marker noise must be a scalar, 3-vector or 3x3 matrix, got {arr.shape}")


@dataclass
class TrackerConfig:
    """Noise model, sample source and initialization constants.

    Defaults reproduce the reference configuration: per-marker noise
    ``1e-4 I3`` mm^2 and process noise ``diag(25, 25, 25, 1e-10, ...)``.
    """

    marker_noise: object = DEFAULT_MARKER_VARIANCE
    marker_noise_overrides: Mapping[str, object] = field(default_factory=dict)
    root_position_noise: float = DEFAULT_ROOT_POSITION_NOISE
    orientation_noise: float = DEFAULT_ANGLE_NOISE
    joint_noise: float = DEFAULT_ANGLE_NOISE
    process_noise: np.ndarray | None = None
    init_orientation_variance: float = DEFAULT_INIT_ORIENTATION_VAR
    init_joint_variance: float = DEFAULT_INIT_JOINT_VAR
    scatter_floor: float = SCATTER_FLOOR
    samples: str = "smart:301"
    seed: int = 0
    initial_pose: Pose | None = None

    def process_matrix(self, layout: StateLayout) -> np.ndarray:
        if self.process_noise is not None:
            Q = np.asarray(self.process_noise, dtype=float)
            if Q.ndim == 1:
                Q = np.diag(Q)
            if Q.shape != (layout.dim, layout.dim):
                raise ValueError(f"process noise must be {layout.dim}x{layout.dim}")
            return NoiseSpec(Q).covariance
        diag = np.concatenate([
            np.full(3, self.root_position_noise),
            np.full(3, self.orientation_noise),
            np.full(layout.n_joints, self.joint_noise),
        ])
        return np.diag(diag)

    def marker_covariances(self, model: KinematicModel) -> np.ndarray:
        """``(M, 3, 3)`` per-marker noise blocks in model marker order."""
        base = _as_3x3(self.marker_noise)
        out = np.repeat(base[None], model.n_markers, axis=0)
        for label, value in self.marker_noise_overrides.items():
            out[model.marker_index(label)] = _as_3x3(value)
        for block in out:
            NoiseSpec(block)
        return out

    def sample_set(self, dimension: int) -> SampleSet:
        return make_samples(self.samples, dimension, self.seed)


# ---------------------------------------------------------------------------
# measurement stacking


def _visible_model_indices(frame: MarkerFrame, model: KinematicModel) -> np.ndarray:
    """Model marker indices of the frame's visible markers, in model order."""
    idx = []
    for label, vis in zip(frame.labels, frame.visible):
        try:
            k = model.marker_index(label)
        except KeyError:
            raise ValueError(f"frame {frame.index}: label {label!r} is not in the model") from None
        if vis:
            idx.append(k)
    return np.array(sorted(idx), dtype=int)


def _rows_by_model_index(frame: MarkerFrame, model: KinematicModel) -> dict[int, int]:
    return {model.marker_index(label): row for row, label in enumerate(frame.labels)}


def stack_measurement(frame: MarkerFrame, model: KinematicModel, marker_cov=None):
    """Stack visible markers in model order.

    Returns ``(y, labels, R)``: the ``3V`` measurement vector, the visible
    labels in stack order and the block-diagonal ``3V x 3V`` noise matrix.
    ``marker_cov`` is an ``(M, 3, 3)`` array; defaults to the reference noise.

    Raises
    ------
    ValueError
        If no marker is visible or a visible position is not finite.
    """
    if marker_cov is None:
        marker_cov = TrackerConfig().marker_covariances(model)
    idx = _visible_model_indices(frame, model)
    if idx.size == 0:
        raise ValueError(f"frame {frame.index}: no visible markers")
    rows = _rows_by_model_index(frame, model)
    y = np.concatenate([frame.positions[rows[k]] for k in idx])
    if not np.all(np.isfinite(y)):
        raise ValueError(f"frame {frame.index}: visible marker with non-finite position")
    R = np.zeros((3 * idx.size, 3 * idx.size))
    for n, k in enumerate(idx):
        R[3 * n:3 * n + 3, 3 * n:3 * n + 3] = marker_cov[k]
    labels = [model.markers[k].label for k in idx]
    return y, labels, R


def state_to_pose(state, model: KinematicModel) -> Pose:
    state = np.asarray(state, dtype=float)
    return Pose(state[:3], state[3:6], to_angles(state[6:], model))


def pose_to_state(pose: Pose, model: KinematicModel) -> np.ndarray:
    return np.concatenate([pose.root_position, pose.root_orientation,
                           from_angles(pose.joint_angles, model)])


def measurement_function(model: KinematicModel, labels: Sequence[str]):
    """Batched ``x -> stacked positions of `labels``` for states of shape ``(S, N)``."""
    idx = np.array([model.marker_index(label) for label in labels], dtype=int)
    lower, upper = model.lower, model.upper

    def h(x):
        x = np.asarray(x, dtype=float)
        theta = to_angle(x[..., 6:], lower, upper)
        pts = model.marker_positions(x[..., :3], x[..., 3:6], theta)
        sel = pts[..., idx, :]
        return np.ascontiguousarray(sel.reshape(sel.shape[:-2] + (3 * idx.size,)))

    h.labels = tuple(labels)
    return h


# ---------------------------------------------------------------------------
# filter steps


@dataclass
class TrackedPose:
    estimate: GaussianEstimate
    pose: Pose
    frame: int
    visible_markers: int
    runtime_s: float
    prediction_only: bool


def initialize(frame: MarkerFrame, model: KinematicModel, config: TrackerConfig | None = None) -> GaussianEstimate:
    """Initial estimate from the first frame.

    Root mean and covariance are the centroid and (biased) scatter of the
    visible markers, plus ``scatter_floor * I`` when the scatter is near
    singular. Orientation starts at zero and joint parameters at zero
    (mid-range angles) with small fixed variances.
    """
    config = config or TrackerConfig()
    layout = StateLayout.from_model(model)
    pts = frame.positions[frame.visible]
    if pts.shape[0] == 0:
        raise ValueError(f"frame {frame.index}: cannot initialize without visible markers")
    centroid = pts.mean(axis=0)
    d = pts - centroid
    scatter = d.T @ d / pts.shape[0]
    if np.linalg.eigvalsh(scatter).min() < config.scatter_floor:
        scatter = scatter + config.scatter_floor * np.eye(3)

    mean = np.zeros(layout.dim)
    if config.initial_pose is not None:
        mean[:] = pose_to_state(config.initial_pose, model)
    else:
        mean[layout.position] = centroid
    cov = np.zeros((layout.dim, layout.dim))
    cov[:3, :3] = scatter
    cov[3:6, 3:6] = config.init_orientation_variance * np.eye(3)
    cov[layout.joints, layout.joints] = config.init_joint_variance * np.eye(layout.n_joints)
    return GaussianEstimate(mean, cov)


class Tracker:
    """Recursive tracker bound to one model and configuration.

    Holds the sample set and noise matrices so repeated steps do not rebuild
    them. One instance tracks one sequence; use separate instances for
    independent runs.
    """

    def __init__(self, model: KinematicModel, config: TrackerConfig | None = None,
                 samples: SampleSet | None = None):
        self.model = model
        self.config = config or TrackerConfig()
        self.layout = StateLayout.from_model(model)
        self.Q = NoiseSpec(self.config.process_matrix(self.layout))
        self.marker_cov = self.config.marker_covariances(model)
        self.samples = samples if samples is not None else self.config.sample_set(self.layout.dim)
        if self.samples.dim != self.layout.dim:
            raise ValueError("sample set dimension does not match the state")
        self._h_all = measurement_function(model, model.marker_labels)
        M = model.n_markers
        R = np.zeros((3 * M, 3 * M))
        for k in range(M):
            R[3 * k:3 * k + 3, 3 * k:3 * k + 3] = self.marker_cov[k]
        self._R_all = NoiseSpec(R)

    def initialize(self, frame: MarkerFrame) -> GaussianEstimate:
        return initialize(frame, self.model, self.config)

    def step(self, state: GaussianEstimate, frame: MarkerFrame) -> TrackedPose:
        """Random-walk prediction, then a measurement update if any marker is visible."""
        t0 = time.perf_counter()
        try:
            est = predict_random_walk(state, self.Q)
            n_vis = frame.visible_count
            if n_vis:
                y, labels, _ = stack_measurement(frame, self.model, self.marker_cov)
                # Moments always cover every marker; hidden rows are then
                # deleted, so an occluded marker contributes nothing and the
                # result does not depend on how BLAS blocks smaller matrices.
                ym, cm, cxm = statistical_moments(self.samples, est, self._h_all, self._R_all)
                rows = (3 * np.array([self.model.marker_index(l) for l in labels])[:, None]
                        + np.arange(3)).reshape(-1)
                est = kalman_update(est, (ym[rows], cm[np.ix_(rows, rows)], cxm[:, rows]), y)
        except FilterError as exc:
            raise TrackingError(str(exc), frame.index) from exc
        runtime = time.perf_counter() - t0
        check_theta_variance(np.diag(est.covariance)[self.layout.joints], self.model.joint_names)
        return TrackedPose(est, state_to_pose(est.mean, self.model), frame.index, n_vis,
                           runtime, prediction_only=n_vis == 0)

    def track(self, frames: Iterable[MarkerFrame]) -> list[TrackedPose]:
        out: list[TrackedPose] = []
        state = None
        for frame in frames:
            if state is None:
                if frame.visible_count == 0:
                    raise TrackingError("first frame has no visible markers", frame.index)
                state = self.initialize(frame)
            tp = self.step(state, frame)
            state = tp.estimate
            out.append(tp)
        return out


def step(state: GaussianEstimate, frame: MarkerFrame, model: KinematicModel,
         config: TrackerConfig | None = None) -> TrackedPose:
    return Tracker(model, config).step(state, frame)


def track(frames: Iterable[MarkerFrame], model: KinematicModel,
          config: TrackerConfig | None = None) -> list[TrackedPose]:
    return Tracker(model, config).track(frames)
