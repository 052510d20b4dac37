import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from mocaptrack.kinematics import load_model
from mocaptrack.synth import bundled_script, generate_truth, render_markers
from mocaptrack.tracker import Tracker

MARKER_VARIANCE = 1e-4


@pytest.fixture(scope="session")
def humanoid():
    return load_model("humanoid40")


@pytest.fixture(scope="session")
def minimal():
    return load_model("minimal_1dof")


@pytest.fixture(scope="session")
def sweep_truth(humanoid):
    return generate_truth(bundled_script("sine_sweep_40dof", humanoid), humanoid)


@pytest.fixture(scope="session")
def sweep_frames(humanoid, sweep_truth):
    return render_markers(sweep_truth, humanoid, MARKER_VARIANCE, seed=1)


@pytest.fixture(scope="session")
def sweep_tracked(humanoid, sweep_frames):
    return Tracker(humanoid).track(sweep_frames)


def reference_fk(model, pose):
    """Marker positions by plain recursion over parents with scipy rotations."""
    frames = {model.root: (Rotation.from_euler("XYZ", pose.root_orientation),
                           np.asarray(pose.root_position, dtype=float))}
    joints = {j.name: (k, j) for k, j in enumerate(model.joints)}

    def frame_of(name):
        if name in frames:
            return frames[name]
        k, j = joints[name]
        rot, pos = frame_of(j.parent)
        origin = Rotation.from_euler("XYZ", j.origin_rpy)
        pos = pos + rot.apply(j.origin_xyz)
        rot = rot * origin * Rotation.from_rotvec(np.asarray(j.axis) * pose.joint_angles[k])
        frames[name] = (rot, pos)
        return frames[name]

    out = []
    for mk in model.markers:
        rot, pos = frame_of(mk.segment)
        out.append(pos + rot.apply(mk.offset))
    return np.array(out)


# one line per acceptance criterion, filled by test_acceptance.record
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
