"""Command-line entry point: ``mocaptrack {synth,track,baseline,montecarlo}``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import yaml

from . import io
from .evaluation import SETTLED_FRAMES, STEADY_OCCLUSION_FRAMES, TRANSIENT_FRAMES, BaselineConfig, baseline_track, distances, montecarlo
from .kinematics import load_model
from .synth import (
    BUNDLED_SCRIPTS,
    MotionScript,
    OcclusionConfig,
    apply_occlusion,
    bundled_script,
    generate_truth,
    render_markers,
)
from .tracker import Tracker, TrackerConfig, TrackingError


class CLIError(Exception):
    pass


def parse_occlusion(text: str) -> tuple[float, float]:
    """``"p=0.005,lambda=100"`` -> ``(0.005, 100.0)``."""
    values = {"p": 0.005, "lambda": 100.0}
    for part in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = part.partition("=")
        key = key.strip().lower()
        if not sep or key not in values:
            raise argparse.ArgumentTypeError(f"bad occlusion item {part!r}; use p=..,lambda=..")
        try:
            values[key] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad occlusion value {value!r}") from None
    return values["p"], values["lambda"]


def _samples_arg(text: str) -> str:
    t = text.strip().lower()
    if t == "unscented":
        return t
    head, _, count = t.partition(":")
    if head == "smart" and count.isdigit() and int(count) > 0:
        return t
    raise argparse.ArgumentTypeError("samples must be 'unscented' or 'smart:S'")


def _tracker_config(args) -> TrackerConfig:
    config = io.load_config(args.config) if args.config else TrackerConfig()
    if args.samples:
        config.samples = args.samples
    if args.seed is not None:
        config.seed = args.seed
    return config


def _load_frames(path):
    frames = io.read_frames(path)
    if not frames:
        raise CLIError(f"{path}: no frames")
    return frames


def _load_script(name: str, model) -> MotionScript:
    if name in BUNDLED_SCRIPTS:
        return bundled_script(name, model)
    path = Path(name)
    if not path.exists():
        raise CLIError(f"unknown script {name!r}; bundled scripts: {', '.join(BUNDLED_SCRIPTS)}")
    return MotionScript.from_mapping(yaml.safe_load(path.read_text()))


def _reference(args, frames):
    if not args.reference:
        return frames
    ref = _load_frames(args.reference)
    if len(ref) != len(frames):
        raise CLIError("reference and input frames differ in length")
    return ref


def cmd_synth(args) -> int:
    model = load_model(args.model)
    script = _load_script(args.script, model)
    truth = generate_truth(script, model)
    frames = render_markers(truth, model, args.noise, seed=args.seed, rate=script.rate)
    if args.occlusion:
        p, lam = args.occlusion
        frames = apply_occlusion(frames, OcclusionConfig(p, lam, args.seed))
    io.write_frames(args.out, frames)
    if args.truth:
        io.write_poses(args.truth, truth, [f.time for f in frames], model)
    hidden = sum(len(f.labels) - f.visible_count for f in frames) / len(frames)
    print(f"{len(frames)} frames at {script.rate:g} Hz, {model.n_markers} markers, "
          f"mean hidden {hidden:.2f} -> {args.out}")
    return 0


def _report(model, frames, reference, poses, visible, runtime, args, what):
    d = distances(model, poses, reference)
    if args.out:
        io.write_poses(args.out, poses, [f.time for f in frames], model, [f.index for f in frames])
    if args.metrics:
        io.write_metrics(args.metrics, [f.index for f in frames], d, visible, runtime)
    after = d[TRANSIENT_FRAMES:] if d.size > TRANSIENT_FRAMES else d
    print(f"{what}: {len(frames)} frames, mean distance after frame {TRANSIENT_FRAMES} "
          f"{after.mean():.4f} mm, max runtime {max(runtime) * 1e3:.3f} ms")


def cmd_track(args) -> int:
    model = load_model(args.model)
    frames = _load_frames(args.frames)
    reference = _reference(args, frames)
    out = Tracker(model, _tracker_config(args)).track(frames)
    runtime = [0.0 if args.no_timing else tp.runtime_s for tp in out]
    _report(model, frames, reference, [tp.pose for tp in out], [tp.visible_markers for tp in out],
            runtime, args, "track")
    return 0


def cmd_baseline(args) -> int:
    model = load_model(args.model)
    frames = _load_frames(args.frames)
    reference = _reference(args, frames)
    config = BaselineConfig(damping=args.damping, iterations=args.iterations)
    poses, runtime = [], []
    prev = None
    for frame in frames:
        t0 = time.perf_counter()
        prev = baseline_track([frame], model, config, initial=prev)[0]
        runtime.append(0.0 if args.no_timing else time.perf_counter() - t0)
        poses.append(prev)
    _report(model, frames, reference, poses, [f.visible_count for f in frames], runtime, args, "baseline")
    return 0


def cmd_montecarlo(args) -> int:
    model = load_model(args.model)
    frames = _load_frames(args.frames)
    p, lam = args.occlusion or (0.005, 100.0)
    summary = montecarlo(frames, model, runs=args.runs, probability=p, mean_duration=lam,
                         seed=args.seed or 0, config=_tracker_config(args), workers=args.workers)
    if args.out:
        io.write_summary(args.out, summary)
    n = summary.dist_max.size
    parts = [f"montecarlo: {summary.runs} runs, mean hidden {summary.mean_hidden:.2f} (max {summary.max_hidden})"]
    if n > STEADY_OCCLUSION_FRAMES:
        parts.append(f"steady state hidden {summary.steady_hidden():.2f}")
    if n > args.after:
        parts.append(f"envelope max / unoccluded after frame {args.after} {summary.envelope_ratio(args.after):.3f}")
    parts.append(f"finite {summary.finite}, bound violations {summary.bound_violations}")
    print(", ".join(parts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mocaptrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, frames=True):
        p.add_argument("--model", default="humanoid40", help="bundled model name or model file")
        if frames:
            p.add_argument("--frames", required=True, help="marker frames CSV")
        p.add_argument("--seed", type=int, default=None)

    def tracking(p):
        p.add_argument("--samples", type=_samples_arg, default=None, help="unscented or smart:S")
        p.add_argument("--config", help="YAML tracker configuration")

    def outputs(p):
        p.add_argument("--out", help="pose trajectory CSV")
        p.add_argument("--metrics", help="per-frame metrics CSV")
        p.add_argument("--reference", help="frames CSV with reference positions (default: --frames)")
        p.add_argument("--no-timing", action="store_true",
                       help="write runtime 0 so metrics files are reproducible byte for byte")

    p = sub.add_parser("synth", help="generate synthetic marker frames")
    common(p, frames=False)
    p.add_argument("--script", default="sine_sweep_40dof",
                   help=f"bundled script ({', '.join(BUNDLED_SCRIPTS)}) or YAML script file")
    p.add_argument("--noise", type=float, default=1e-4, help="marker noise variance, mm^2")
    p.add_argument("--occlusion", type=parse_occlusion, help="p=..,lambda=..")
    p.add_argument("--out", required=True, help="marker frames CSV")
    p.add_argument("--truth", help="ground-truth pose CSV")
    p.set_defaults(func=cmd_synth, seed=0)

    p = sub.add_parser("track", help="run the filter on a frames file")
    common(p)
    tracking(p)
    outputs(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("baseline", help="run the per-frame least-squares fit")
    common(p)
    outputs(p)
    p.add_argument("--damping", type=float, default=BaselineConfig.damping)
    p.add_argument("--iterations", type=int, default=BaselineConfig.iterations)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("montecarlo", help="occlusion Monte Carlo study")
    common(p)
    tracking(p)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--occlusion", type=parse_occlusion, help="p=..,lambda=.. (default p=0.005,lambda=100)")
    p.add_argument("--workers", type=int, default=None, help="processes (default: CPU count)")
    p.add_argument("--after", type=int, default=SETTLED_FRAMES, help="first frame of the envelope ratio window")
    p.add_argument("--out", help="summary CSV")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, OSError, ValueError, TrackingError) as exc:
        print(f"mocaptrack: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
