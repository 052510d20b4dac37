"""Marker-based human pose tracking with a sample-based Kalman filter on a
joint-limited kinematic tree."""

from .constraints import from_angle, from_angles, to_angle, to_angles
from .evaluation import (
    BaselineConfig,
    MonteCarloSummary,
    baseline_fit,
    baseline_track,
    distances,
    marker_distance,
    montecarlo,
)
from .gaussian import (
    FilterError,
    GaussianEstimate,
    NoiseSpec,
    SampleSet,
    kalman_update,
    make_samples,
    predict_random_walk,
    predict_sampled,
    smart_samples,
    statistical_moments,
    unscented_samples,
)
from .kinematics import (
    Joint,
    KinematicModel,
    MarkerAttachment,
    ModelError,
    Pose,
    forward_kinematics,
    forward_kinematics_all,
    load_model,
)
from .synth import OcclusionConfig, apply_occlusion, bundled_script, generate_truth, render_markers
from .tracker import MarkerFrame, TrackedPose, Tracker, TrackerConfig, TrackingError, initialize, step, track

__version__ = "0.1.0"
