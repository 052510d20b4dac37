import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import reference_fk
from mocaptrack import kinematics as kin
from mocaptrack.constraints import to_angles
from mocaptrack.kinematics import (
    KinematicModel,
    ModelError,
    Pose,
    dump_model,
    forward_kinematics,
    forward_kinematics_all,
    load_model,
)

PLANAR = """
name: planar2
root: base
joints:
  - name: shoulder
    parent: base
    axis: [0, 0, 1]
    limits: {lower: -3, upper: 3}
  - name: elbow
    parent: shoulder
    origin: {xyz: [100, 0, 0]}
    axis: [0, 0, 1]
    limits: {lower: -3, upper: 3}
markers:
  - {label: end, segment: elbow, offset: [100, 0, 0]}
  - {label: mid, segment: shoulder, offset: [50, 0, 0]}
  - {label: base_mark, segment: base, offset: [100, 0, 0]}
"""


def one_joint(lower=-1.0, upper=1.0, axis=(0, 0, 1), kind="revolute"):
    return {
        "name": "one", "root": "base",
        "joints": [{"name": "j", "parent": "base", "axis": list(axis), "kind": kind,
                    "limits": {"lower": lower, "upper": upper}}],
        "markers": [{"label": "m", "segment": "j", "offset": [1, 0, 0]}],
    }


def random_pose(model, rng):
    q = rng.uniform(model.lower, model.upper)
    return Pose(rng.normal(0, 500, 3), rng.uniform(-np.pi, np.pi, 3), q)


# -- loading ---------------------------------------------------------------


def test_minimal_model_dimensions(minimal):
    assert (minimal.n_joints, minimal.n_markers) == (1, 1)


def test_humanoid_dimensions(humanoid):
    assert (humanoid.n_joints, humanoid.n_markers) == (40, 50)
    assert len(set(humanoid.marker_labels)) == 50


def test_reversed_limits_name_the_joint():
    with pytest.raises(ModelError, match="'j'"):
        KinematicModel.from_mapping(one_joint(lower=1.0, upper=-1.0))


def test_zero_width_range_rejected():
    with pytest.raises(ModelError):
        KinematicModel.from_mapping(one_joint(lower=0.5, upper=0.5))


@pytest.mark.parametrize("change, match", [
    (lambda d: d["joints"][0].update(axis=[0, 0, 2]), "unit"),
    (lambda d: d["joints"][0].update(kind="prismatic"), "revolute"),
    (lambda d: d["joints"][0].update(parent="nowhere"), "nowhere"),
    (lambda d: d["markers"].append({"label": "m", "segment": "j"}), "'m'"),
    (lambda d: d["markers"].append({"label": "x", "segment": "ghost"}), "ghost"),
    (lambda d: d["markers"].append({"label": "", "segment": "j"}), "label"),
    (lambda d: d["joints"].append(dict(d["joints"][0])), "'j'"),
    (lambda d: d["joints"][0]["limits"].update(upper=float("inf")), "finite"),
])
def test_invalid_models_rejected(change, match):
    data = one_joint()
    change(data)
    with pytest.raises(ModelError, match=match):
        KinematicModel.from_mapping(data)


def test_cycle_rejected():
    data = one_joint()
    data["joints"] = [
        {"name": "a", "parent": "b", "axis": [1, 0, 0], "limits": {"lower": -1, "upper": 1}},
        {"name": "b", "parent": "a", "axis": [1, 0, 0], "limits": {"lower": -1, "upper": 1}},
    ]
    data["markers"] = [{"label": "m", "segment": "a"}]
    with pytest.raises(ModelError, match="cycle|reach"):
        KinematicModel.from_mapping(data)


def test_parse_error_reports_position():
    with pytest.raises(ModelError, match="line"):
        load_model("name: x\njoints: [\n  - bad")


def test_missing_field_is_named():
    data = one_joint()
    del data["joints"][0]["axis"]
    with pytest.raises(ModelError, match="axis"):
        KinematicModel.from_mapping(data)


def test_children_declared_before_parents_are_sorted():
    model = load_model(PLANAR)
    data = kin.model_to_mapping(model)
    data["joints"].reverse()
    shuffled = KinematicModel.from_mapping(data)
    assert shuffled.joint_names == ["shoulder", "elbow"]
    parents = {j.name: k for k, j in enumerate(shuffled.joints)}
    for k, j in enumerate(shuffled.joints):
        assert j.parent == shuffled.root or parents[j.parent] < k


def test_dump_round_trip(humanoid):
    again = load_model(dump_model(humanoid))
    pose = random_pose(humanoid, np.random.default_rng(3))
    assert again.marker_labels == humanoid.marker_labels
    np.testing.assert_array_equal(kin.forward_kinematics_all_array(again, pose),
                                  kin.forward_kinematics_all_array(humanoid, pose))


def test_load_from_file(tmp_path):
    path = tmp_path / "planar.yaml"
    path.write_text(PLANAR)
    assert load_model(path).n_joints == 2
    assert load_model(str(path)).name == "planar2"


# -- forward kinematics ------------------------------------------------------


def test_identity_chain_root_marker():
    model = load_model(PLANAR)
    pose = Pose(np.zeros(3), np.zeros(3), np.zeros(2))
    np.testing.assert_allclose(forward_kinematics(model, pose, "base_mark"), [100, 0, 0], atol=1e-12)


def test_quarter_turn_about_z():
    data = one_joint(lower=-2, upper=2)
    model = KinematicModel.from_mapping(data)
    pose = Pose([10, 20, 30], np.zeros(3), [np.pi / 2])
    np.testing.assert_allclose(forward_kinematics(model, pose, "m"), [10, 21, 30], atol=1e-12)


def test_two_link_planar_symbolic():
    model = load_model(PLANAR)
    a, b = np.pi / 6, np.pi / 4
    pose = Pose(np.zeros(3), np.zeros(3), [a, b])
    expected = [100 * np.cos(a) + 100 * np.cos(a + b), 100 * np.sin(a) + 100 * np.sin(a + b), 0]
    np.testing.assert_allclose(forward_kinematics(model, pose, "end"), expected, atol=1e-10)


def test_unknown_label(humanoid):
    with pytest.raises(KeyError):
        forward_kinematics(humanoid, humanoid.midpoint_pose(), "NOPE")


def test_all_markers_singleton(minimal):
    pose = Pose([1, 2, 3], [0.1, 0.2, 0.3], [0.4])
    entries = forward_kinematics_all(minimal, pose)
    assert [label for label, _ in entries] == ["tip"]
    np.testing.assert_array_equal(entries[0][1], forward_kinematics(minimal, pose, "tip"))


def test_all_markers_order_and_cross_check(humanoid):
    pose = random_pose(humanoid, np.random.default_rng(0))
    first = forward_kinematics_all(humanoid, pose)
    second = forward_kinematics_all(humanoid, pose)
    assert [l for l, _ in first] == humanoid.marker_labels == [l for l, _ in second]
    for (label, p), (_, p2) in zip(first, second):
        np.testing.assert_array_equal(p, p2)
        np.testing.assert_array_equal(p, forward_kinematics(humanoid, pose, label))


def test_matches_independent_recursion(humanoid):
    rng = np.random.default_rng(1)
    for _ in range(20):
        pose = random_pose(humanoid, rng)
        np.testing.assert_allclose(kin.forward_kinematics_all_array(humanoid, pose),
                                   reference_fk(humanoid, pose), atol=1e-9)


def test_compiled_and_numpy_paths_agree(humanoid):
    rng = np.random.default_rng(2)
    B = 64
    r = rng.normal(0, 300, (B, 3))
    o = rng.uniform(-3, 3, (B, 3))
    q = rng.uniform(humanoid.lower, humanoid.upper, (B, humanoid.n_joints))
    fast = humanoid.marker_positions(r, o, q)
    slow = kin._fk_numpy(humanoid._tables, kin.rpy_matrix(o), r, np.sin(q), 1 - np.cos(q))
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-9)


def test_batch_shapes(humanoid):
    q = np.tile(0.5 * (humanoid.lower + humanoid.upper), (2, 3, 1))
    out = humanoid.marker_positions(np.zeros(3), np.zeros(3), q)
    assert out.shape == (2, 3, 50, 3)


def test_rpy_is_intrinsic_xyz():
    rpy = np.array([0.3, -0.7, 1.1])
    expected = kin.rotation_x(rpy[0]) @ kin.rotation_y(rpy[1]) @ kin.rotation_z(rpy[2])
    np.testing.assert_allclose(kin.rpy_matrix(rpy), expected, atol=1e-15)


# -- properties ----------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rigid_segments(seed):
    model = load_model("humanoid40")
    rng = np.random.default_rng(seed)
    p1, p2 = random_pose(model, rng), random_pose(model, rng)
    a = kin.forward_kinematics_all_array(model, p1)
    b = kin.forward_kinematics_all_array(model, p2)
    seg = np.array([model.segment_of(l) for l in model.marker_labels])
    for s in set(seg):
        idx = np.flatnonzero(seg == s)
        da = np.linalg.norm(a[idx, None] - a[None, idx], axis=-1)
        db = np.linalg.norm(b[idx, None] - b[None, idx], axis=-1)
        np.testing.assert_allclose(da, db, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_root_frame_composition(seed):
    model = load_model("humanoid40")
    rng = np.random.default_rng(seed)
    pose = random_pose(model, rng)
    local = kin.forward_kinematics_all_array(model, Pose(np.zeros(3), np.zeros(3), pose.joint_angles))
    R0 = kin.rpy_matrix(pose.root_orientation)
    world = kin.forward_kinematics_all_array(model, pose)
    np.testing.assert_allclose(world, local @ R0.T + pose.root_position, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=40, max_size=40))
def test_transformed_parameters_give_in_bounds_poses(theta_params):
    model = load_model("humanoid40")
    q = to_angles(np.array(theta_params), model)
    assert np.all(q >= model.lower) and np.all(q <= model.upper)
    pts = model.marker_positions(np.zeros(3), np.zeros(3), q)
    assert np.all(np.isfinite(pts))
