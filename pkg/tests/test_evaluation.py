import warnings

import numpy as np
import pytest

from conftest import reference_fk
from mocaptrack import evaluation
from mocaptrack.evaluation import (
    TRANSIENT_FRAMES,
    BaselineConfig,
    BaselineDivergence,
    baseline_fit,
    baseline_track,
    distances,
    marker_distance,
    montecarlo,
    run_seeds,
)
from mocaptrack.kinematics import Pose
from mocaptrack.synth import BUNDLED_SCRIPTS, bundled_script, generate_truth, render_markers
from mocaptrack.tracker import MarkerFrame, Tracker, initialize, state_to_pose

from test_kinematics import random_pose


def frame_from_positions(model, pts, index=0, visible=None):
    vis = np.ones(len(pts), bool) if visible is None else visible
    return MarkerFrame(index, index / 100, tuple(model.marker_labels), pts, vis)


# -- marker distance ------------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED_SCRIPTS)
def test_truth_against_noiseless_frames_is_zero(humanoid, name):
    truth = generate_truth(bundled_script(name, humanoid), humanoid)
    frames = render_markers(truth, humanoid, 0.0)
    d = distances(humanoid, truth, frames)
    assert d.shape == (675,)
    assert np.all(d == 0.0)


def test_uniform_offset_gives_its_length(humanoid):
    pose = random_pose(humanoid, np.random.default_rng(4))
    pts = reference_fk(humanoid, pose)
    shift = np.array([3.0, -4.0, 12.0])
    assert marker_distance(humanoid, pose, frame_from_positions(humanoid, pts + shift)) == pytest.approx(13.0, abs=1e-9)


def test_random_pose_pair_matches_oracle(humanoid):
    rng = np.random.default_rng(5)
    for _ in range(10):
        a, b = random_pose(humanoid, rng), random_pose(humanoid, rng)
        want = np.linalg.norm(reference_fk(humanoid, a) - reference_fk(humanoid, b), axis=1).mean()
        frame = frame_from_positions(humanoid, reference_fk(humanoid, b))
        assert marker_distance(humanoid, a, frame) == pytest.approx(want, rel=1e-10)


def test_hidden_markers_still_count(humanoid):
    pose = humanoid.midpoint_pose()
    pts = reference_fk(humanoid, pose)
    pts[0] += [0.0, 0.0, 50.0]
    vis = np.ones(50, bool)
    vis[0] = False
    frame = frame_from_positions(humanoid, pts, visible=vis)
    assert marker_distance(humanoid, pose, frame) == pytest.approx(1.0, abs=1e-9)


def test_missing_reference_rejected(humanoid):
    pose = humanoid.midpoint_pose()
    pts = reference_fk(humanoid, pose)
    short = MarkerFrame(0, 0.0, tuple(humanoid.marker_labels[1:]), pts[1:], np.ones(49, bool))
    with pytest.raises(ValueError, match=humanoid.marker_labels[0]):
        marker_distance(humanoid, pose, short)
    pts[3] = np.nan
    with pytest.raises(ValueError, match="reference"):
        marker_distance(humanoid, pose, frame_from_positions(humanoid, pts))
    with pytest.raises(ValueError):
        distances(humanoid, [pose], [])


# -- baseline --------------------------------------------------------------------


def test_baseline_fixed_point(humanoid, sweep_truth):
    truth = sweep_truth[300]
    frame = render_markers([truth], humanoid, 0.0)[0]
    fit = baseline_fit(frame, humanoid, truth)
    assert marker_distance(humanoid, fit, frame) < 1e-6


def test_baseline_respects_bounds(humanoid, sweep_frames):
    for pose in baseline_track(sweep_frames[:5], humanoid, BaselineConfig(iterations=5)):
        assert np.all(pose.joint_angles >= humanoid.lower) and np.all(pose.joint_angles <= humanoid.upper)


def test_baseline_needs_a_visible_marker(humanoid, sweep_frames):
    frame = sweep_frames[0].with_visibility(np.zeros(50, bool))
    with pytest.raises(ValueError, match="visible"):
        baseline_fit(frame, humanoid, humanoid.midpoint_pose())


def test_baseline_far_warm_start_loses_to_filter(humanoid, sweep_frames, sweep_tracked):
    # frame 100 sits in the fastest part of the sweep; the warm start is the
    # uninformed initial pose built from that same frame
    k = 100
    frame = sweep_frames[k]
    far = state_to_pose(initialize(frame, humanoid).mean, humanoid)
    fit = baseline_fit(frame, humanoid, far)
    assert marker_distance(humanoid, fit, frame) > marker_distance(humanoid, sweep_tracked[k].pose, frame)


@pytest.mark.parametrize("name", BUNDLED_SCRIPTS)
def test_filter_beats_baseline_after_transient(humanoid, name):
    truth = generate_truth(bundled_script(name, humanoid), humanoid)
    frames = render_markers(truth, humanoid, 1e-4, seed=1)
    filt = distances(humanoid, [tp.pose for tp in Tracker(humanoid).track(frames)], frames)
    base = distances(humanoid, baseline_track(frames, humanoid), frames)
    assert filt[TRANSIENT_FRAMES:].mean() <= base[TRANSIENT_FRAMES:].mean()


def scalar_gauss_newton(q, target, damping, steps):
    """Hand iteration for a 100 mm arm turning about z."""
    y = 100 * np.array([np.cos(target), np.sin(target), 0.0])
    for _ in range(steps):
        e = y - 100 * np.array([np.cos(q), np.sin(q), 0.0])
        J = 100 * np.array([-np.sin(q), np.cos(q), 0.0])
        q = q + J @ e / (J @ J + damping ** 2)
    return q


@pytest.mark.parametrize("steps", [1, 2, 4])
@pytest.mark.parametrize("damping", [1e-2, 30.0])
def test_one_dof_matches_scalar_gauss_newton(minimal, steps, damping):
    target, start = 0.9, -0.6
    pts = minimal.marker_positions(np.zeros(3), np.zeros(3), [target])
    frame = MarkerFrame(0, 0.0, ("tip",), pts, [True])
    config = BaselineConfig(damping=damping, iterations=steps, tolerance=0.0, fix_root=True)
    fit = baseline_fit(frame, minimal, Pose(np.zeros(3), np.zeros(3), [start]), config)
    assert fit.joint_angles[0] == pytest.approx(scalar_gauss_newton(start, target, damping, steps), rel=1e-7)
    np.testing.assert_array_equal(fit.root_position, 0.0)


def test_divergence_warns_and_returns_best(minimal, monkeypatch):
    real = evaluation._numeric_jacobian
    monkeypatch.setattr(evaluation, "_numeric_jacobian", lambda *a: -real(*a))
    pts = minimal.marker_positions(np.zeros(3), np.zeros(3), [0.5])
    frame = MarkerFrame(0, 0.0, ("tip",), pts, [True])
    start = Pose(np.zeros(3), np.zeros(3), [0.2])
    with pytest.warns(BaselineDivergence, match="grew"):
        fit = baseline_fit(frame, minimal, start, BaselineConfig(iterations=5, fix_root=True))
    assert fit.joint_angles[0] == 0.2


def test_converging_fit_is_silent(minimal):
    pts = minimal.marker_positions(np.zeros(3), np.zeros(3), [0.5])
    frame = MarkerFrame(0, 0.0, ("tip",), pts, [True])
    with warnings.catch_warnings():
        warnings.simplefilter("error", BaselineDivergence)
        baseline_fit(frame, minimal, Pose(np.zeros(3), np.zeros(3), [0.2]))


# -- Monte Carlo -------------------------------------------------------------------


@pytest.fixture(scope="module")
def short_frames(sweep_frames):
    return sweep_frames[:60]


def test_single_run_envelope_collapses(humanoid, short_frames):
    s = montecarlo(short_frames, humanoid, runs=1, probability=0.05, mean_duration=10, workers=1)
    np.testing.assert_array_equal(s.dist_min, s.dist_max)
    np.testing.assert_array_equal(s.dist_mean, s.dist_max)


def test_envelope_ordering_and_determinism(humanoid, short_frames):
    a = montecarlo(short_frames, humanoid, runs=3, probability=0.05, mean_duration=10, seed=11, workers=1)
    b = montecarlo(short_frames, humanoid, runs=3, probability=0.05, mean_duration=10, seed=11, workers=1)
    assert a.finite and a.runs == 3 and a.bound_violations == 0
    assert np.all(a.dist_min <= a.dist_mean) and np.all(a.dist_mean <= a.dist_max)
    for field in ("dist_min", "dist_mean", "dist_max", "hidden_mean", "dist_unoccluded"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.hidden_mean.max() > 0


def test_parallel_and_serial_runs_agree(humanoid, short_frames):
    kw = dict(runs=2, probability=0.05, mean_duration=10, seed=3, unoccluded=False)
    a = montecarlo(short_frames, humanoid, workers=1, **kw)
    b = montecarlo(short_frames, humanoid, workers=2, **kw)
    np.testing.assert_array_equal(a.dist_max, b.dist_max)
    np.testing.assert_array_equal(a.hidden_mean, b.hidden_mean)


def test_run_seeds_distinct_and_reproducible():
    s = run_seeds(0, 100)
    assert len(set(s)) == 100 and s == run_seeds(0, 100)
    assert s != run_seeds(1, 100)


def test_failed_run_names_its_index(humanoid, short_frames, monkeypatch):
    class Broken:
        def __init__(self, *a, **k):
            pass

        def track(self, frames):
            raise FloatingPointError("boom")

    monkeypatch.setattr(evaluation, "Tracker", Broken)
    with pytest.raises(RuntimeError, match="run 0 failed: boom"):
        montecarlo(short_frames, humanoid, runs=2, workers=1)


def test_runs_must_be_positive(humanoid, short_frames):
    with pytest.raises(ValueError):
        montecarlo(short_frames, humanoid, runs=0)


def test_ratio_needs_reference(humanoid, short_frames):
    s = montecarlo(short_frames[:5], humanoid, runs=1, workers=1, unoccluded=False)
    with pytest.raises(ValueError):
        s.envelope_ratio(0)


def test_windows_past_the_end_rejected(humanoid, short_frames):
    s = montecarlo(short_frames[:5], humanoid, runs=1, workers=1)
    with pytest.raises(ValueError, match="after"):
        s.steady_hidden()
    with pytest.raises(ValueError, match="after"):
        s.envelope_ratio(5)
