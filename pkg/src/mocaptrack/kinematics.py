"""Articulated joint-tree model with virtual markers.

Units are millimeters for lengths and radians for angles. Orientations
(root and joint origins) use intrinsic roll-pitch-yaw, i.e.
``R = Rx(roll) @ Ry(pitch) @ Rz(yaw)``.

Every joint owns the body segment that it moves, and that segment carries
the joint's name. The root segment is named by the model's ``root`` field
(``"root"`` by default) and is placed by the root position and orientation
of a :class:`Pose`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

AXIS_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model file cannot be parsed or fails validation."""


def rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(rpy) -> np.ndarray:
    """Rotation matrices for roll-pitch-yaw angles of shape ``(..., 3)``.

    Returns an array of shape ``(..., 3, 3)``.
    """
    rpy = np.asarray(rpy, dtype=float)
    ca, cb, cc = np.cos(rpy[..., 0]), np.cos(rpy[..., 1]), np.cos(rpy[..., 2])
    sa, sb, sc = np.sin(rpy[..., 0]), np.sin(rpy[..., 1]), np.sin(rpy[..., 2])
    out = np.empty(rpy.shape[:-1] + (3, 3))
    out[..., 0, 0] = cb * cc
    out[..., 0, 1] = -cb * sc
    out[..., 0, 2] = sb
    out[..., 1, 0] = sa * sb * cc + ca * sc
    out[..., 1, 1] = ca * cc - sa * sb * sc
    out[..., 1, 2] = -sa * cb
    out[..., 2, 0] = sa * sc - ca * sb * cc
    out[..., 2, 1] = ca * sb * sc + sa * cc
    out[..., 2, 2] = ca * cb
    return out


def _skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Joint:
    """A revolute joint. ``parent`` names the segment it is mounted on."""

    name: str
    parent: str
    origin_xyz: tuple[float, float, float]
    origin_rpy: tuple[float, float, float]
    axis: tuple[float, float, float]
    lower: float
    upper: float
    kind: str = "revolute"


@dataclass(frozen=True)
class MarkerAttachment:
    label: str
    segment: str
    offset: tuple[float, float, float]


@dataclass
class Pose:
    """Root position (mm), root roll/pitch/yaw (rad) and joint angles (rad)."""

    root_position: np.ndarray
    root_orientation: np.ndarray
    joint_angles: np.ndarray

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=float).reshape(3)
        self.root_orientation = np.asarray(self.root_orientation, dtype=float).reshape(3)
        self.joint_angles = np.asarray(self.joint_angles, dtype=float).reshape(-1)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.root_position, self.root_orientation, self.joint_angles])

    @classmethod
    def from_vector(cls, vec) -> "Pose":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:6], vec[6:])


@dataclass(frozen=True, eq=False)
class KinematicModel:
    """Validated joint tree. Joints are stored in topological order.

    Build instances with :func:`load_model` or :meth:`from_mapping`; the
    constructor validates and precomputes the batched FK tables.
    """

    name: str
    joints: tuple[Joint, ...]
    markers: tuple[MarkerAttachment, ...]
    root: str = "root"
    _tables: dict = field(init=False, repr=False)

    def __post_init__(self):
        joints = _topological(self.joints, self.root)
        object.__setattr__(self, "joints", joints)
        _validate(self)
        object.__setattr__(self, "_tables", _build_tables(self))

    # -- basic accessors -------------------------------------------------
    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_markers(self) -> int:
        return len(self.markers)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def marker_labels(self) -> list[str]:
        return [m.label for m in self.markers]

    @property
    def lower(self) -> np.ndarray:
        return self._tables["lower"]

    @property
    def upper(self) -> np.ndarray:
        return self._tables["upper"]

    def marker_index(self, label: str) -> int:
        try:
            return self._tables["marker_index"][label]
        except KeyError:
            raise KeyError(f"unknown marker label {label!r}") from None

    def segment_of(self, label: str) -> str:
        return self.markers[self.marker_index(label)].segment

    def midpoint_pose(self) -> Pose:
        return Pose(np.zeros(3), np.zeros(3), 0.5 * (self.lower + self.upper))

    # -- construction ----------------------------------------------------
    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "KinematicModel":
        return _model_from_mapping(data)

    # -- forward kinematics ----------------------------------------------
    def marker_positions(self, root_position, root_orientation, joint_angles) -> np.ndarray:
        """World positions of all markers for a batch of poses.

        Inputs have shapes ``(..., 3)``, ``(..., 3)`` and ``(..., J)`` with a
        common leading batch shape; the result has shape ``(..., M, 3)`` in
        declared marker order.
        """
        t = self._tables
        r = np.asarray(root_position, dtype=float)
        o = np.asarray(root_orientation, dtype=float)
        q = np.asarray(joint_angles, dtype=float)
        batch = np.broadcast_shapes(r.shape[:-1], o.shape[:-1], q.shape[:-1])
        if q.shape[-1] != self.n_joints:
            raise ValueError(f"expected {self.n_joints} joint angles, got {q.shape[-1]}")
        r = np.broadcast_to(r, batch + (3,)).reshape(-1, 3)
        o = np.broadcast_to(o, batch + (3,)).reshape(-1, 3)
        q = np.broadcast_to(q, batch + (self.n_joints,)).reshape(-1, self.n_joints)
        rot0 = rpy_matrix(o)
        s = np.sin(q)
        vc = 1.0 - np.cos(q)
        if _fk_kernel is not None and self.n_joints:
            out = _fk_kernel(rot0, np.ascontiguousarray(r), s, vc, t["parent"], t["A0"], t["A1"], t["A2"],
                             t["origin_xyz"], t["marker_segment"], t["marker_offset"])
        else:
            out = _fk_numpy(t, rot0, r, s, vc)
        return out.reshape(batch + (self.n_markers, 3))


def _fk_numpy(t: dict, rot0, pos0, s, vc) -> np.ndarray:
    """Level-by-level batched FK; joints of equal depth are composed together."""
    B, J = s.shape
    rot = np.empty((B, J + 1, 3, 3))
    pos = np.empty((B, J + 1, 3))
    rot[:, 0] = rot0
    pos[:, 0] = pos0
    for idx, parents in t["levels"]:
        rp = rot[:, parents]
        local = (t["A0"][idx] + s[:, idx, None, None] * t["A1"][idx]
                 + vc[:, idx, None, None] * t["A2"][idx])
        rot[:, idx + 1] = rp @ local
        pos[:, idx + 1] = pos[:, parents] + np.einsum("bnij,nj->bni", rp, t["origin_xyz"][idx])
    seg = t["marker_segment"]
    return pos[:, seg] + np.einsum("bmij,mj->bmi", rot[:, seg], t["marker_offset"])


def _fk_loops(rot0, pos0, s, vc, parent, A0, A1, A2, oxyz, mseg, moff):
    B, J = s.shape
    M = mseg.shape[0]
    out = np.empty((B, M, 3))
    R = np.empty((J + 1, 3, 3))
    P = np.empty((J + 1, 3))
    L = np.empty((3, 3))
    for b in range(B):
        R[0] = rot0[b]
        P[0] = pos0[b]
        for j in range(J):
            p = parent[j]
            for u in range(3):
                for v in range(3):
                    L[u, v] = A0[j, u, v] + s[b, j] * A1[j, u, v] + vc[b, j] * A2[j, u, v]
            for u in range(3):
                acc = P[p, u]
                for v in range(3):
                    acc += R[p, u, v] * oxyz[j, v]
                P[j + 1, u] = acc
                for v in range(3):
                    acc = 0.0
                    for w in range(3):
                        acc += R[p, u, w] * L[w, v]
                    R[j + 1, u, v] = acc
        for m in range(M):
            g = mseg[m]
            for u in range(3):
                acc = P[g, u]
                for v in range(3):
                    acc += R[g, u, v] * moff[m, v]
                out[b, m, u] = acc
    return out


try:
    import numba
except ImportError:  # pragma: no cover
    _fk_kernel = None
else:
    _fk_kernel = numba.njit(cache=True)(_fk_loops)


def forward_kinematics(model: KinematicModel, pose: Pose, label: str) -> np.ndarray:
    """World position (mm) of one marker."""
    i = model.marker_index(label)
    return forward_kinematics_all_array(model, pose)[i]


def forward_kinematics_all_array(model: KinematicModel, pose: Pose) -> np.ndarray:
    return model.marker_positions(pose.root_position, pose.root_orientation, pose.joint_angles)


def forward_kinematics_all(model: KinematicModel, pose: Pose) -> list[tuple[str, np.ndarray]]:
    """``(label, position)`` pairs in the model's declared marker order."""
    pts = forward_kinematics_all_array(model, pose)
    return [(label, pts[i]) for i, label in enumerate(model.marker_labels)]


# ---------------------------------------------------------------------------
# loading / validation


def _vec3(value, what: str) -> tuple[float, float, float]:
    try:
        arr = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ModelError(f"{what}: expected a list of 3 numbers, got {value!r}") from None
    if len(arr) != 3:
        raise ModelError(f"{what}: expected 3 components, got {len(arr)}")
    if not all(np.isfinite(arr)):
        raise ModelError(f"{what}: components must be finite")
    return tuple(arr)  # type: ignore[return-value]


def _model_from_mapping(data: Mapping[str, Any]) -> KinematicModel:
    if not isinstance(data, Mapping):
        raise ModelError("model file must contain a mapping at top level")
    for key in ("name", "joints", "markers"):
        if key not in data:
            raise ModelError(f"missing top-level field {key!r}")
    root = str(data.get("root", "root"))
    joints = []
    for k, jd in enumerate(data["joints"] or []):
        where = f"joints[{k}]"
        if not isinstance(jd, Mapping):
            raise ModelError(f"{where}: expected a mapping")
        try:
            name = str(jd["name"])
            where = f"joint {name!r}"
            origin = jd.get("origin", {}) or {}
            limits = jd["limits"]
            joints.append(
                Joint(
                    name=name,
                    parent=str(jd["parent"]),
                    origin_xyz=_vec3(origin.get("xyz", (0, 0, 0)), f"{where} origin.xyz"),
                    origin_rpy=_vec3(origin.get("rpy", (0, 0, 0)), f"{where} origin.rpy"),
                    axis=_vec3(jd["axis"], f"{where} axis"),
                    lower=float(limits["lower"]),
                    upper=float(limits["upper"]),
                    kind=str(jd.get("kind", "revolute")),
                )
            )
        except KeyError as exc:
            raise ModelError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"{where}: {exc}") from None
    markers = []
    for k, md in enumerate(data["markers"] or []):
        where = f"markers[{k}]"
        if not isinstance(md, Mapping):
            raise ModelError(f"{where}: expected a mapping")
        try:
            label = str(md["label"])
            markers.append(
                MarkerAttachment(label, str(md["segment"]),
                                 _vec3(md.get("offset", (0, 0, 0)), f"marker {label!r} offset"))
            )
        except KeyError as exc:
            raise ModelError(f"{where}: missing field {exc.args[0]!r}") from None
    return KinematicModel(name=str(data["name"]), joints=tuple(joints),
                          markers=tuple(markers), root=root)


def _topological(joints: Iterable[Joint], root: str) -> tuple[Joint, ...]:
    """Stable topological order; declared order is kept when already valid."""
    joints = list(joints)
    names = [j.name for j in joints]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ModelError(f"duplicate joint name {dup!r}")
    if root in names:
        raise ModelError(f"joint {root!r} clashes with the root segment name")
    placed = {root}
    ordered: list[Joint] = []
    pending = joints
    while pending:
        rest = [j for j in pending if j.parent not in placed]
        ready = [j for j in pending if j.parent in placed]
        if not ready:
            j = rest[0]
            if j.parent not in names:
                raise ModelError(f"joint {j.name!r}: unknown parent segment {j.parent!r}")
            raise ModelError(f"joint {j.name!r}: cycle in joint tree")
        # take only the first ready joint to keep declaration order stable
        first = ready[0]
        ordered.append(first)
        placed.add(first.name)
        pending = [j for j in pending if j is not first]
    return tuple(ordered)


def _validate(model: KinematicModel) -> None:
    for j in model.joints:
        if j.kind != "revolute":
            raise ModelError(f"joint {j.name!r}: unsupported kind {j.kind!r} (only revolute)")
        if not (np.isfinite(j.lower) and np.isfinite(j.upper)):
            raise ModelError(f"joint {j.name!r}: limits must be finite")
        if not j.lower < j.upper:
            raise ModelError(
                f"joint {j.name!r}: lower limit {j.lower} must be below upper limit {j.upper}")
        if abs(np.linalg.norm(j.axis) - 1.0) > AXIS_TOL:
            raise ModelError(f"joint {j.name!r}: axis {j.axis} is not a unit vector")
    segments = {model.root} | {j.name for j in model.joints}
    seen = set()
    for m in model.markers:
        if not m.label:
            raise ModelError("marker with empty label")
        if m.label in seen:
            raise ModelError(f"duplicate marker label {m.label!r}")
        seen.add(m.label)
        if m.segment not in segments:
            raise ModelError(f"marker {m.label!r}: unknown segment {m.segment!r}")


def _build_tables(model: KinematicModel) -> dict:
    J = model.n_joints
    seg_index = {model.root: 0}
    for k, j in enumerate(model.joints):
        seg_index[j.name] = k + 1
    parent = np.array([seg_index[j.parent] for j in model.joints], dtype=int)
    depth = np.zeros(J + 1, dtype=int)
    for k in range(J):
        depth[k + 1] = depth[parent[k]] + 1

    A0 = np.empty((J, 3, 3))
    A1 = np.empty((J, 3, 3))
    A2 = np.empty((J, 3, 3))
    for k, j in enumerate(model.joints):
        r0 = rpy_matrix(np.array(j.origin_rpy))
        K = _skew(j.axis)
        # R0 @ Rot(axis, q) = A0 + sin(q) A1 + (1 - cos(q)) A2  (Rodrigues)
        A0[k] = r0
        A1[k] = r0 @ K
        A2[k] = r0 @ K @ K

    levels = []
    for d in range(1, depth.max() + 1 if J else 1):
        idx = np.flatnonzero(depth[1:] == d)
        levels.append((idx, parent[idx]))

    return {
        "lower": np.array([j.lower for j in model.joints]),
        "upper": np.array([j.upper for j in model.joints]),
        "origin_xyz": np.array([j.origin_xyz for j in model.joints]).reshape(J, 3),
        "A0": A0, "A1": A1, "A2": A2,
        "levels": levels,
        "parent": parent,
        "marker_segment": np.array([seg_index[m.segment] for m in model.markers], dtype=int),
        "marker_offset": np.array([m.offset for m in model.markers], dtype=float).reshape(-1, 3),
        "marker_index": {m.label: i for i, m in enumerate(model.markers)},
    }


BUNDLED_MODELS = ("minimal_1dof", "humanoid40")


def load_model(source: str | Path) -> KinematicModel:
    """Load a model from YAML text, a file path, or a bundled model name.

    Raises
    ------
    ModelError
        On YAML syntax errors (with line/column) or schema violations.
    """
    text: str
    if isinstance(source, Path):
        text = source.read_text()
    elif source in BUNDLED_MODELS:
        text = resources.files("mocaptrack.models").joinpath(f"{source}.yaml").read_text()
    elif "\n" not in source and Path(source).is_file():
        text = Path(source).read_text()
    else:
        text = source
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ModelError(f"model file parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return _model_from_mapping(data)


def model_to_mapping(model: KinematicModel) -> dict:
    return {
        "name": model.name,
        "root": model.root,
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "origin": {"xyz": list(j.origin_xyz), "rpy": list(j.origin_rpy)},
                "axis": list(j.axis),
                "limits": {"lower": j.lower, "upper": j.upper},
            }
            for j in model.joints
        ],
        "markers": [
            {"label": m.label, "segment": m.segment, "offset": list(m.offset)}
            for m in model.markers
        ],
    }


def dump_model(model: KinematicModel) -> str:
    return yaml.safe_dump(model_to_mapping(model), sort_keys=False, default_flow_style=None)


def subtree_markers(model: KinematicModel, segment: str) -> list[str]:
    """Labels of markers on ``segment`` or any segment below it."""
    below = {segment}
    for j in model.joints:
        if j.parent in below:
            below.add(j.name)
    return [m.label for m in model.markers if m.segment in below]
