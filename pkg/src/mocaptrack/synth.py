"""Synthetic motion capture: ground-truth trajectories, noisy markers, occlusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .kinematics import KinematicModel, Pose
from .tracker import MarkerFrame

ROOT_CHANNELS = ("rx", "ry", "rz", "roll", "pitch", "yaw")


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t, duration):
        return np.full_like(t, self.value, dtype=float)


@dataclass(frozen=True)
class Ramp:
    """Linear from ``start`` at t=0 to ``end`` at t=duration."""

    start: float
    end: float

    def __call__(self, t, duration):
        return self.start + (self.end - self.start) * (t / duration)


@dataclass(frozen=True)
class Sine:
    """``offset + amplitude * sin(2 pi frequency t + phase)``."""

    offset: float
    amplitude: float
    frequency: float
    phase: float = 0.0

    def __call__(self, t, duration):
        return self.offset + self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)


def channel_from_mapping(entry) -> Constant | Ramp | Sine:
    if isinstance(entry, (int, float)):
        return Constant(float(entry))
    kind = entry.get("type", "constant")
    if kind == "constant":
        return Constant(float(entry["value"]))
    if kind == "ramp":
        return Ramp(float(entry["start"]), float(entry["end"]))
    if kind == "sine":
        return Sine(float(entry.get("offset", 0.0)), float(entry["amplitude"]),
                    float(entry["frequency"]), float(entry.get("phase", 0.0)))
    raise ValueError(f"unknown channel type {kind!r}")


@dataclass
class MotionScript:
    """Per-channel trajectory description.

    ``root`` keys are ``rx, ry, rz`` (mm) and ``roll, pitch, yaw`` (rad);
    ``joints`` keys are joint names. Joints without a channel stay at the
    middle of their range.
    """

    duration: float
    rate: float
    root: Mapping[str, object] = field(default_factory=dict)
    joints: Mapping[str, object] = field(default_factory=dict)
    name: str = "script"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        unknown = set(self.root) - set(ROOT_CHANNELS)
        if unknown:
            raise ValueError(f"unknown root channels {sorted(unknown)}")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.rate))

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.rate

    @classmethod
    def from_mapping(cls, data: Mapping) -> "MotionScript":
        return cls(
            duration=float(data["duration"]),
            rate=float(data["rate"]),
            root={k: channel_from_mapping(v) for k, v in (data.get("root") or {}).items()},
            joints={k: channel_from_mapping(v) for k, v in (data.get("joints") or {}).items()},
            name=str(data.get("name", "script")),
        )


def generate_truth(script: MotionScript, model: KinematicModel) -> list[Pose]:
    """Evaluate the script at ``k / rate`` for every frame; angles clipped to limits."""
    names = model.joint_names
    unknown = set(script.joints) - set(names)
    if unknown:
        raise ValueError(f"script channels for unknown joints: {sorted(unknown)}")
    t = script.times()
    root = np.zeros((t.size, 6))
    for k, ch in enumerate(ROOT_CHANNELS):
        if ch in script.root:
            root[:, k] = script.root[ch](t, script.duration)
    mid = 0.5 * (model.lower + model.upper)
    theta = np.tile(mid, (t.size, 1))
    for k, name in enumerate(names):
        if name in script.joints:
            theta[:, k] = script.joints[name](t, script.duration)
    theta = np.clip(theta, model.lower, model.upper)
    return [Pose(root[i, :3], root[i, 3:], theta[i]) for i in range(t.size)]


def _noise_factor(cov) -> np.ndarray:
    """Symmetric square root of a PSD 3x3 covariance (zero allowed)."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(3)
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-12:
        raise ValueError("marker noise covariance has negative eigenvalues")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def render_markers(poses: Sequence[Pose], model: KinematicModel, noise=0.0, seed: int = 0,
                   rate: float = 100.0) -> list[MarkerFrame]:
    """Marker frames ``FK(pose) + v`` with independent ``v ~ N(0, noise)`` per marker.

    ``noise`` is a scalar variance, a 3x3 covariance shared by all markers,
    or an ``(M, 3, 3)`` array of per-marker covariances (mm^2).
    """
    n = len(poses)
    if n == 0:
        return []
    M = model.n_markers
    r = np.array([p.root_position for p in poses])
    o = np.array([p.root_orientation for p in poses])
    q = np.array([p.joint_angles for p in poses])
    pts = model.marker_positions(r, o, q)

    noise = np.asarray(noise, dtype=float)
    if noise.ndim == 3:
        factors = np.array([_noise_factor(c) for c in noise])
    else:
        factors = np.repeat(_noise_factor(noise)[None], M, axis=0)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, M, 3))
    pts = pts + np.einsum("mij,nmj->nmi", factors, z)

    labels = tuple(model.marker_labels)
    visible = np.ones(M, dtype=bool)
    return [MarkerFrame(k, k / rate, labels, pts[k], visible) for k in range(n)]


@dataclass(frozen=True)
class OcclusionConfig:
    """Per-frame trigger probability and Poisson mean of the hidden run length."""

    probability: float = 0.005
    mean_duration: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("occlusion probability must be in [0, 1]")
        if self.mean_duration < 0:
            raise ValueError("mean hidden duration must be >= 0")


def occlusion_mask(n_frames: int, n_markers: int, config: OcclusionConfig) -> np.ndarray:
    """Boolean ``(n_frames, n_markers)`` visibility mask.

    A visible marker triggers with ``probability`` in a frame and is then
    hidden for the next ``d ~ Poisson(mean_duration)`` frames. Hidden markers
    cannot trigger again; they become eligible on the frame they reappear.
    ``d = 0`` leaves the marker visible.
    """
    rng = np.random.default_rng(config.seed)
    visible = np.ones((n_frames, n_markers), dtype=bool)
    remaining = np.zeros(n_markers, dtype=np.int64)
    for k in range(n_frames):
        hidden = remaining > 0
        visible[k] = ~hidden
        remaining[hidden] -= 1
        u = rng.random(n_markers)
        trig = ~hidden & (u < config.probability)
        if trig.any():
            remaining[trig] = rng.poisson(config.mean_duration, size=int(trig.sum()))
    return visible


def apply_occlusion(frames: Sequence[MarkerFrame], config: OcclusionConfig) -> list[MarkerFrame]:
    """Clear visibility flags by the trigger/Poisson-duration process.

    Positions are left untouched so hidden markers keep their ground truth.
    Markers already hidden in the input stay hidden.
    """
    if not frames:
        return []
    if config.probability == 0.0:
        return list(frames)
    mask = occlusion_mask(len(frames), len(frames[0].labels), config)
    return [f.with_visibility(f.visible & mask[k]) for k, f in enumerate(frames)]


# ---------------------------------------------------------------------------
# bundled scripts

BUNDLED_SCRIPTS = ("sine_sweep_40dof", "root_excursion")
BUNDLED_FRAMES = 675
BUNDLED_RATE = 100.0

_GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def sine_sweep(model: KinematicModel, n_frames: int = BUNDLED_FRAMES, rate: float = BUNDLED_RATE,
               amplitude_fraction: float = 0.25, max_amplitude: float = 0.3,
               frequencies: tuple[float, float] = (0.05, 0.2)) -> MotionScript:
    """Every joint oscillates about mid-range at its own frequency.

    Frequencies are spread evenly over ``frequencies`` (Hz) in joint order.
    """
    J = model.n_joints
    joints = {}
    for k, j in enumerate(model.joints):
        half = 0.5 * (j.upper - j.lower)
        joints[j.name] = Sine(
            offset=0.5 * (j.lower + j.upper),
            amplitude=min(amplitude_fraction * half, max_amplitude),
            frequency=frequencies[0] + (frequencies[1] - frequencies[0]) * k / max(J - 1, 1),
            phase=(k * _GOLDEN) % (2 * np.pi),
        )
    root = {
        "rx": Sine(0.0, 100.0, 0.20, 0.0),
        "ry": Sine(0.0, 50.0, 0.15, 1.0),
        "rz": Sine(950.0, 30.0, 0.25, 2.0),
        "roll": Sine(0.0, 0.08, 0.17, 0.5),
        "pitch": Sine(0.0, 0.10, 0.13, 1.5),
        "yaw": Sine(0.0, 0.30, 0.11, 2.5),
    }
    return MotionScript(n_frames / rate, rate, root, joints, name="sine_sweep_40dof")


def root_excursion(model: KinematicModel, n_frames: int = BUNDLED_FRAMES,
                   rate: float = BUNDLED_RATE) -> MotionScript:
    """Large root translation and turn with small joint motion."""
    joints = {}
    for k, j in enumerate(model.joints):
        half = 0.5 * (j.upper - j.lower)
        joints[j.name] = Sine(0.5 * (j.lower + j.upper), min(0.1 * half, 0.1),
                              0.1 + 0.2 * k / max(model.n_joints - 1, 1), (k * _GOLDEN) % (2 * np.pi))
    root = {
        "rx": Ramp(0.0, 1500.0),
        "ry": Sine(0.0, 300.0, 0.1, 0.0),
        "rz": Constant(950.0),
        "roll": Sine(0.0, 0.2, 0.12, 0.0),
        "pitch": Sine(0.0, 0.3, 0.09, 0.7),
        "yaw": Ramp(0.0, 1.2),
    }
    return MotionScript(n_frames / rate, rate, root, joints, name="root_excursion")


def bundled_script(name: str, model: KinematicModel) -> MotionScript:
    if name == "sine_sweep_40dof":
        return sine_sweep(model)
    if name == "root_excursion":
        return root_excursion(model)
    raise ValueError(f"unknown bundled script {name!r}; choose from {BUNDLED_SCRIPTS}")
