"""Accuracy metrics, the per-frame least-squares baseline and the Monte Carlo
occlusion study."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kinematics import KinematicModel, Pose
from .synth import OcclusionConfig, apply_occlusion
from .tracker import MarkerFrame, Tracker, TrackerConfig, initialize, state_to_pose

TRANSIENT_FRAMES = 20
SETTLED_FRAMES = 50        # plateau and envelope-ratio window start
STEADY_OCCLUSION_FRAMES = 250  # hidden-count process is stationary to < 0.01 markers here


class BaselineDivergence(RuntimeWarning):
    """The least-squares fit ended with a larger residual than it started with."""


def reference_positions(model: KinematicModel, frame: MarkerFrame) -> np.ndarray:
    """``(M, 3)`` frame positions in model marker order, hidden markers included."""
    rows = {label: k for k, label in enumerate(frame.labels)}
    missing = [label for label in model.marker_labels if label not in rows]
    if missing:
        raise ValueError(f"frame {frame.index}: no reference position for {missing}")
    ref = frame.positions[[rows[label] for label in model.marker_labels]]
    if not np.all(np.isfinite(ref)):
        bad = [model.marker_labels[i] for i in np.flatnonzero(~np.isfinite(ref).all(axis=1))]
        raise ValueError(f"frame {frame.index}: no reference position for {bad}")
    return ref


def marker_distance(model: KinematicModel, pose: Pose, frame: MarkerFrame) -> float:
    """Mean Euclidean distance (mm) between FK markers of ``pose`` and ``frame``."""
    ref = reference_positions(model, frame)
    pts = model.marker_positions(pose.root_position, pose.root_orientation, pose.joint_angles)
    return float(np.linalg.norm(pts - ref, axis=1).mean())


def distances(model: KinematicModel, poses: Sequence[Pose], frames: Sequence[MarkerFrame]) -> np.ndarray:
    """Per-frame :func:`marker_distance`, batched."""
    if len(poses) != len(frames):
        raise ValueError("need one pose per frame")
    if not poses:
        return np.zeros(0)
    ref = np.array([reference_positions(model, f) for f in frames])
    pts = model.marker_positions(np.array([p.root_position for p in poses]),
                                 np.array([p.root_orientation for p in poses]),
                                 np.array([p.joint_angles for p in poses]))
    return np.linalg.norm(pts - ref, axis=2).mean(axis=1)


# ---------------------------------------------------------------------------
# baseline


@dataclass
class BaselineConfig:
    damping: float = 1e-2
    iterations: int = 50
    tolerance: float = 1e-10     # step norm
    fd_step: float = 1e-6
    fix_root: bool = False       # hold root position and orientation at the warm start


def _numeric_jacobian(model, q, idx, h, free):
    """Central differences of the visible-marker stack w.r.t. ``q[free]``, one batch."""
    n = free.size
    X = np.repeat(q[None], 2 * n, axis=0)
    X[np.arange(n), free] += h
    X[n + np.arange(n), free] -= h
    pts = model.marker_positions(X[:, :3], X[:, 3:6], X[:, 6:])[:, idx].reshape(2 * n, -1)
    return ((pts[:n] - pts[n:]) / (2 * h)).T


def baseline_fit(frame: MarkerFrame, model: KinematicModel, previous: Pose,
                 config: BaselineConfig | None = None) -> Pose:
    """Per-frame damped least-squares fit of the pose to the visible markers.

    Warm-started at ``previous``; each iteration solves
    ``(J^T J + damping^2 I) dq = J^T e`` and projects the joint angles back
    into their limits. Without a noise model or temporal prior.
    Warns with :class:`BaselineDivergence` and returns the best iterate when
    the final residual exceeds the starting one.
    """
    config = config or BaselineConfig()
    rows = {label: k for k, label in enumerate(frame.labels)}
    idx = np.array([model.marker_index(l) for l, v in zip(frame.labels, frame.visible) if v], dtype=int)
    if idx.size == 0:
        raise ValueError(f"frame {frame.index}: no visible markers")
    idx.sort()
    y = frame.positions[[rows[model.markers[k].label] for k in idx]].reshape(-1)
    lower, upper = model.lower, model.upper

    def residual(q):
        pts = model.marker_positions(q[:3], q[3:6], q[6:])[idx].reshape(-1)
        return y - pts

    q = previous.as_vector().copy()
    q[6:] = np.clip(q[6:], lower, upper)
    e = residual(q)
    start_cost = best_cost = cost = float(e @ e)
    best = q.copy()
    free = np.arange(6 if config.fix_root else 0, q.size)
    damp = config.damping ** 2 * np.eye(free.size)
    for _ in range(config.iterations):
        Jm = _numeric_jacobian(model, q, idx, config.fd_step, free)
        dq = np.linalg.solve(Jm.T @ Jm + damp, Jm.T @ e)
        q = q.copy()
        q[free] += dq
        q[6:] = np.clip(q[6:], lower, upper)
        e = residual(q)
        cost = float(e @ e)
        if cost < best_cost:
            best_cost, best = cost, q.copy()
        if np.linalg.norm(dq) < config.tolerance:
            break
    if cost > start_cost:
        warnings.warn(f"frame {frame.index}: baseline residual grew from {start_cost:.3g} to "
                      f"{cost:.3g} mm^2", BaselineDivergence, stacklevel=2)
    return Pose.from_vector(best)


def baseline_track(frames: Sequence[MarkerFrame], model: KinematicModel,
                   config: BaselineConfig | None = None, initial: Pose | None = None) -> list[Pose]:
    """Run :func:`baseline_fit` over a sequence, each frame warm-started by the last.

    The first warm start is the filter's uninformed initial pose (marker
    centroid, zero orientation, mid-range joints) unless ``initial`` is given.
    """
    poses: list[Pose] = []
    prev = initial
    for frame in frames:
        if prev is None:
            prev = state_to_pose(initialize(frame, model).mean, model)
        prev = baseline_fit(frame, model, prev, config)
        poses.append(prev)
    return poses


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MonteCarloSummary:
    """Per-frame envelopes over runs; arrays have one entry per frame."""

    dist_min: np.ndarray
    dist_mean: np.ndarray
    dist_max: np.ndarray
    hidden_mean: np.ndarray
    runs: int
    dist_unoccluded: np.ndarray | None = None
    max_hidden: int = 0
    finite: bool = True
    bound_violations: int = 0

    @property
    def mean_hidden(self) -> float:
        return float(self.hidden_mean.mean())

    def steady_hidden(self, after: int = STEADY_OCCLUSION_FRAMES) -> float:
        """Mean hidden count once the all-visible start has worn off."""
        if after >= self.hidden_mean.size:
            raise ValueError(f"sequence has no frames after {after}")
        return float(self.hidden_mean[after:].mean())

    def envelope_ratio(self, after: int = SETTLED_FRAMES) -> float:
        """Largest post-transient envelope maximum over the mean unoccluded distance."""
        if self.dist_unoccluded is None:
            raise ValueError("no unoccluded reference run")
        if after >= self.dist_max.size:
            raise ValueError(f"sequence has no frames after {after}")
        return float(self.dist_max[after:].max() / self.dist_unoccluded[after:].mean())


def _one_run(args):
    frames, model, config, occlusion, run = args
    occluded = apply_occlusion(frames, occlusion)
    try:
        out = Tracker(model, config).track(occluded)
    except Exception as exc:
        raise RuntimeError(f"Monte Carlo run {run} failed: {exc}") from exc
    poses = [tp.pose for tp in out]
    finite = all(np.all(np.isfinite(tp.estimate.mean)) for tp in out)
    q = np.array([p.joint_angles for p in poses])
    violations = int(np.count_nonzero((q < model.lower) | (q > model.upper)))
    d = distances(model, poses, frames)
    hidden = np.array([len(f.labels) - f.visible_count for f in occluded])
    return run, d, hidden, finite, violations


def run_seeds(master_seed: int, runs: int) -> list[int]:
    """Independent per-run occlusion seeds derived from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(runs)]


def montecarlo(frames: Sequence[MarkerFrame], model: KinematicModel, runs: int = 100,
               probability: float = 0.005, mean_duration: float = 100.0, seed: int = 0,
               config: TrackerConfig | None = None, workers: int | None = None,
               unoccluded: bool = True) -> MonteCarloSummary:
    """Track ``runs`` independently occluded copies of ``frames``.

    Distances are measured against the positions in ``frames`` for every
    marker, hidden or not. Runs are spread over ``workers`` processes
    (default: CPU count); results are reduced in run order.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    config = config or TrackerConfig()
    seeds = run_seeds(seed, runs)
    jobs = [(frames, model, config, OcclusionConfig(probability, mean_duration, s), r)
            for r, s in enumerate(seeds)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    D = np.array([r[1] for r in results])
    H = np.array([r[2] for r in results])
    ref = None
    if unoccluded:
        out = Tracker(model, config).track(frames)
        ref = distances(model, [tp.pose for tp in out], frames)
    return MonteCarloSummary(
        dist_min=D.min(axis=0), dist_mean=D.mean(axis=0), dist_max=D.max(axis=0),
        hidden_mean=H.mean(axis=0), runs=runs, dist_unoccluded=ref,
        max_hidden=int(H.max()), finite=all(r[3] for r in results) and bool(np.all(np.isfinite(D))),
        bound_violations=sum(r[4] for r in results),
    )
