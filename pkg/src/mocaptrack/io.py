"""Delimited-text readers and writers for frames, poses, metrics and Monte
Carlo summaries, plus the tracker configuration file."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .kinematics import KinematicModel, Pose
from .tracker import MarkerFrame, TrackerConfig

FRAME_HEADER = ("frame", "time_s", "label", "x_mm", "y_mm", "z_mm", "visible")
POSE_PREFIX = ("frame", "time_s", "rx", "ry", "rz", "roll", "pitch", "yaw")
METRICS_HEADER = ("frame", "avg_marker_dist_mm", "visible_markers", "runtime_s")
SUMMARY_HEADER = ("frame", "dist_min_mm", "dist_mean_mm", "dist_max_mm", "hidden_mean",
                  "dist_unoccluded_mm")


class FormatError(ValueError):
    """Malformed input file."""


def fmt(value: float) -> str:
    """Shortest repr that round-trips exactly; stable across runs."""
    return repr(float(value))


def _reader(path):
    f = open(path, newline="")
    return f, csv.reader(f)


def _check_header(path, header, expected, prefix=False):
    got = tuple(h.strip() for h in header)
    ok = got[:len(expected)] == tuple(expected) if prefix else got == tuple(expected)
    if not ok:
        raise FormatError(f"{path}: expected header {','.join(expected)}, got {','.join(got)}")
    return got


# ---------------------------------------------------------------------------
# marker frames


def write_frames(path, frames: Sequence[MarkerFrame]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FRAME_HEADER)
        for fr in frames:
            for label, p, v in zip(fr.labels, fr.positions, fr.visible):
                w.writerow([fr.index, fmt(fr.time), label, fmt(p[0]), fmt(p[1]), fmt(p[2]), int(bool(v))])


def read_frames(path) -> list[MarkerFrame]:
    """Group rows by frame index, keeping file order within and across frames.

    Raises
    ------
    FormatError
        On a wrong header, malformed row, mixed times within a frame or a
        label repeated inside one frame.
    """
    f, rows = _reader(path)
    with f:
        try:
            header = next(rows)
        except StopIteration:
            return []
        _check_header(path, header, FRAME_HEADER)
        grouped: dict[int, dict] = {}
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(FRAME_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(FRAME_HEADER)} fields, got {len(row)}")
            try:
                k, t = int(row[0]), float(row[1])
                xyz = [float(v) for v in row[3:6]]
                vis = int(row[6])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if vis not in (0, 1):
                raise FormatError(f"{path}:{lineno}: visible must be 0 or 1")
            g = grouped.setdefault(k, {"time": t, "labels": [], "pos": [], "vis": []})
            if g["time"] != t:
                raise FormatError(f"{path}:{lineno}: frame {k} has inconsistent times")
            if row[2] in g["labels"]:
                raise FormatError(f"{path}:{lineno}: label {row[2]!r} repeated in frame {k}")
            g["labels"].append(row[2])
            g["pos"].append(xyz)
            g["vis"].append(bool(vis))
    return [MarkerFrame(k, g["time"], tuple(g["labels"]), np.array(g["pos"]), np.array(g["vis"]))
            for k, g in grouped.items()]


# ---------------------------------------------------------------------------
# poses


def pose_header(model: KinematicModel) -> tuple[str, ...]:
    return POSE_PREFIX + tuple(f"theta_{k + 1}" for k in range(model.n_joints))


def write_poses(path, poses: Sequence[Pose], times: Sequence[float], model: KinematicModel,
                indices: Sequence[int] | None = None) -> None:
    if len(poses) != len(times):
        raise ValueError("need one time per pose")
    indices = range(len(poses)) if indices is None else indices
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(pose_header(model))
        for k, t, p in zip(indices, times, poses):
            w.writerow([k, fmt(t)] + [fmt(v) for v in p.as_vector()])


def read_poses(path, model: KinematicModel | None = None) -> tuple[list[int], np.ndarray, list[Pose]]:
    """Return ``(frame indices, times, poses)``."""
    f, rows = _reader(path)
    with f:
        try:
            header = next(rows)
        except StopIteration:
            return [], np.zeros(0), []
        got = _check_header(path, header, POSE_PREFIX, prefix=True)
        n_joints = len(got) - len(POSE_PREFIX)
        if model is not None and n_joints != model.n_joints:
            raise FormatError(f"{path}: {n_joints} joint columns, model has {model.n_joints}")
        idx, times, poses = [], [], []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(got):
                raise FormatError(f"{path}:{lineno}: expected {len(got)} fields, got {len(row)}")
            try:
                vals = np.array([float(v) for v in row[2:]])
                idx.append(int(row[0]))
                times.append(float(row[1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            poses.append(Pose.from_vector(vals))
    return idx, np.array(times), poses


# ---------------------------------------------------------------------------
# metrics and summaries


def write_metrics(path, frames: Sequence[int], dist, visible, runtime) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for k, d, v, r in zip(frames, dist, visible, runtime):
            w.writerow([int(k), fmt(d), int(v), fmt(r)])


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        _check_header(path, f.readline().strip().split(","), METRICS_HEADER)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(METRICS_HEADER)}


def write_summary(path, summary) -> None:
    ref = summary.dist_unoccluded
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for k in range(summary.dist_mean.size):
            w.writerow([k, fmt(summary.dist_min[k]), fmt(summary.dist_mean[k]), fmt(summary.dist_max[k]),
                        fmt(summary.hidden_mean[k]), "" if ref is None else fmt(ref[k])])


# ---------------------------------------------------------------------------
# configuration

_CONFIG_KEYS = {
    "marker_noise", "marker_noise_overrides", "root_position_noise", "orientation_noise",
    "joint_noise", "process_noise", "init_orientation_variance", "init_joint_variance",
    "scatter_floor", "samples", "seed",
}


def config_from_mapping(data: Mapping | None, base: TrackerConfig | None = None) -> TrackerConfig:
    """Tracker configuration from a mapping; unknown keys are rejected."""
    base = base or TrackerConfig()
    data = dict(data or {})
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown configuration keys {sorted(unknown)}")
    fields = {k: getattr(base, k) for k in _CONFIG_KEYS}
    fields["initial_pose"] = base.initial_pose
    for key, value in data.items():
        if key in ("marker_noise", "process_noise") and value is not None:
            value = np.asarray(value, dtype=float)
        elif key == "marker_noise_overrides":
            value = {str(k): np.asarray(v, dtype=float) for k, v in (value or {}).items()}
        elif key == "samples":
            value = str(value)
        elif key == "seed":
            value = int(value)
        elif value is not None:
            value = float(value)
        fields[key] = value
    return TrackerConfig(**fields)


def load_config(path) -> TrackerConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: invalid YAML: {exc}") from None
    if data is not None and not isinstance(data, Mapping):
        raise ValueError(f"{path}: configuration must be a mapping")
    return config_from_mapping(data)

