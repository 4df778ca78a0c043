"""Command-line entry point: a thin dispatcher over the library modules.

Exit codes: 0 success, 1 domain error (printed with its taxonomy name),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import FORMAT_VERSIONS
from .align import align_recording
from .errors import InsufficientData, SchemaError, WheelArmError
from .evaluation import SeqModel, evaluate, write_overlays, write_report_csv
from .features import TrajectoryFeatures, featurize
from .model_io import load_model, save_model
from .recorder import Recording, read_container, write_container
from .robot import RobotDescription, default_robot
from .scene import _rpy_matrix, load_scene
from .se3 import RigidTransform, ik_newton_raphson, matrix_from_quat
from .session import load_script, scripted_replay
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def _version_text() -> str:
    try:
        from importlib.metadata import version

        release = version("wheelarm")
    except Exception:
        release = "unknown"
    lines = [f"wheelarm {release}"]
    lines += [f"{kind}: {tag}" for kind, tag in FORMAT_VERSIONS.items()]
    return "\n".join(lines)


class _VersionAction(argparse.Action):
    # argparse's stock version action re-wraps the text; print it verbatim.
    def __init__(self, option_strings, dest, **kwargs):
        super().__init__(option_strings, dest, nargs=0, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        print(_version_text())
        parser.exit()


def _load_robot(path):
    return RobotDescription.from_file(path) if path else None


def _load_scene(path):
    return load_scene(path) if path else None


def _resolve_script(name_or_path: str):
    """A script argument is a file path, or failing that a shipped script name."""
    if Path(name_or_path).exists():
        return load_script(name_or_path)
    from .demos import load_shipped_script, shipped_script_names

    if name_or_path in shipped_script_names():
        return load_shipped_script(name_or_path)
    raise SchemaError("script", f"{name_or_path!r} is neither a file nor a shipped script")


def _replay(args) -> int:
    script = _resolve_script(args.script)
    if args.seed is not None:
        script.manifest = replace(script.manifest, seed=args.seed)
    result = scripted_replay(
        script,
        out_dir=args.out,
        robot_description=_load_robot(args.robot),
        scene=_load_scene(args.scene),
    )
    rejected = sum(1 for a in result.acks if not a["ok"])
    print(f"container: {result.container_path}")
    print(f"samples: {result.recording.sample_count}")
    print(f"acks: {len(result.acks) - rejected} ok, {rejected} rejected")
    return 0


def cmd_replay(args) -> int:
    return _replay(args)


def cmd_serve(args) -> int:
    if args.replay is not None:
        if args.port is not None or args.serve_ui is not None:
            print("usage: serve --replay is headless; drop --port/--serve-ui",
                  file=sys.stderr)
            return 2
        args.script = args.replay
        return _replay(args)
    from .server import serve

    serve(
        port=args.port if args.port is not None else 8765,
        robot_description=_load_robot(args.robot),
        scene=_load_scene(args.scene),
        out_dir=args.out,
        ui_dir=args.serve_ui,
    )
    return 0


def cmd_align(args) -> int:
    recording = read_container(args.raw)
    if not isinstance(recording, Recording):
        raise SchemaError("align.input", "expected a raw recording container")
    aligned = align_recording(recording)
    path = write_container(aligned, args.out)
    print(f"container: {path}")
    print(f"rows: {aligned.rows}")
    return 0


def cmd_inspect(args) -> int:
    obj = read_container(args.container)
    m = obj.manifest
    raw = isinstance(obj, Recording)
    print(f"kind: {'raw' if raw else 'aligned'}")
    print(f"session: {m.session_id}  file: {m.file_name}  seed: {m.seed}")
    print(f"instruction: {m.instruction}")
    print(f"label: {m.task_label}  window: {m.start_time:.3f}s .. {m.end_time:.3f}s")
    header = f"{'topic':<22}{'rows':>7}{'channels':>10}{'span':>10}{'max gap':>10}"
    print(header)
    print("-" * len(header))

    def row(name, n, channels, times, gap=None):
        span = float(times[-1] - times[0]) if len(times) > 1 else 0.0
        if gap is None:
            gap = float(np.max(np.diff(times))) if len(times) > 1 else 0.0
        print(f"{name:<22}{n:>7}{channels:>10}{span:>9.3f}s{gap:>9.3f}s")

    if raw:
        for name in sorted(obj.topics):
            buf = obj.topics[name]
            row(name, buf.timestamps.size, buf.values.shape[1], buf.timestamps)
    else:
        ref = obj.reference_timestamps
        for name in sorted(obj.topics):
            mat = obj.topics[name]
            row(name, mat.shape[0], mat.shape[1], ref, gap=obj.stats.get(name, 0.0))
    for cam in sorted(obj.frames):
        fs = obj.frames[cam]
        shape = fs.rgb[0].shape if fs.rgb else (0, 0, 3)
        gap = None if raw else obj.stats.get(f"frames/{cam}", 0.0)
        row(f"frames/{cam}", len(fs), f"{shape[1]}x{shape[0]}x3", fs.timestamps, gap=gap)
    return 0


def _aligned_features(data_dir) -> list:
    """Featurize every aligned container under data_dir; raw ones are skipped
    so a directory holding both stages of the pipeline still works."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise SchemaError("data", f"{data_dir} is not a directory")
    out = []
    for child in sorted(data_dir.iterdir()):
        if not (child / "index.json").exists():
            continue
        obj = read_container(child)
        if isinstance(obj, Recording):
            log.info("skipping raw container %s", child.name)
            continue
        out.append(featurize(obj))
    if not out:
        raise InsufficientData(f"no aligned containers under {data_dir}")
    return out


def _split_rows(feats: TrajectoryFeatures, fraction: float) -> list:
    """Slice one trajectory into time-contiguous train/val pseudo-trajectories
    so a single recording can still exercise the training loop."""
    cut = min(max(int(round(fraction * feats.steps)), 1), feats.steps - 1)
    halves = []
    for tag, sl in (("train", slice(None, cut)), ("val", slice(cut, None))):
        t = feats.timestamp[sl]
        halves.append(
            TrajectoryFeatures(
                name=f"{feats.name}/{tag}",
                rgb=feats.rgb[sl],
                depth=feats.depth[sl],
                bag=feats.bag,
                state=feats.state[sl],
                timestamp=t - t[0],
                targets=feats.targets[sl],
            )
        )
    return halves


def cmd_train(args) -> int:
    feats = _aligned_features(args.data)
    config = TrainConfig()
    if args.config is not None:
        config = TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if len(feats) == 1:
        log.info("single trajectory: splitting its rows %.0f/%.0f; the validation "
                 "loss is indicative only", 100 * config.train_fraction,
                 100 * (1 - config.train_fraction))
        feats = _split_rows(feats[0], config.train_fraction)
    result = train(feats, config=config)
    model = SeqModel(params=result.params, normalization=result.normalization)
    path = save_model(model, args.out, seed=config.seed, train_config=config.to_dict())
    best = result.history[result.best_epoch]
    print(f"model: {path}")
    print(f"epochs: {len(result.history)}  best: {result.best_epoch}")
    print(f"train mse: {best['train_loss']:.6f}  val mse: {best['val_loss']:.6f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    feats = _aligned_features(args.data)
    report = evaluate(model, feats)
    write_report_csv(report, args.report)
    print(f"report: {args.report}")
    if args.overlays is not None:
        paths = write_overlays(report, args.overlays)
        print(f"overlays: {len(paths)} file(s) under {args.overlays}")
    worst = max(report.channels, key=lambda c: c["max_mse"])
    print(f"worst channel: {worst['channel']}  max mse: {worst['max_mse']:.6g}")
    return 0


def cmd_ik(args) -> int:
    description = _load_robot(args.robot) or default_robot()
    chain = description.chain
    doc = json.loads(Path(args.target).read_text())
    if not isinstance(doc, dict) or "xyz" not in doc:
        raise SchemaError("target.xyz", "target file needs an xyz translation")
    xyz = np.asarray(doc["xyz"], dtype=float)
    if "quaternion" in doc:
        rotation = matrix_from_quat(np.asarray(doc["quaternion"], dtype=float))
    else:
        rotation = _rpy_matrix(*doc.get("rpy", (0.0, 0.0, 0.0)))
    target = RigidTransform(rotation, xyz)
    q0 = description.initial_q if args.q0 is None else np.asarray(args.q0, dtype=float)
    result = ik_newton_raphson(chain, target, q0)
    print("joints: " + " ".join(f"{v:.9f}" for v in result.q))
    print(f"residual: {result.residual:.3e}")
    print(f"iterations: {result.iterations}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wheelarm", description=__doc__)
    parser.add_argument("--version", action=_VersionAction)
    parser.add_argument("--seed", type=int, default=None,
                        help="override the manifest / training seed")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("serve", help="run the interactive WebSocket service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--scene", default=None)
    p.add_argument("--robot", default=None)
    p.add_argument("--replay", default=None, metavar="SCRIPT",
                   help="replay a script headless instead of serving")
    p.add_argument("--out", default=None)
    p.add_argument("--serve-ui", default=None, metavar="DIR",
                   help="also serve a built UI from this directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay a script to a raw container")
    p.add_argument("script", help="script file or shipped script name")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", default=None)
    p.add_argument("--robot", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("align", help="resample a raw recording onto camera time")
    p.add_argument("raw", help="raw container directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("inspect", help="print a container's topic table")
    p.add_argument("container")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", help="train the baseline sequence model")
    p.add_argument("--data", required=True, help="directory of aligned containers")
    p.add_argument("--config", default=None, help="training config JSON")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model over aligned containers")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--overlays", default=None, help="output directory for overlays")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ik", help="solve one end-effector pose")
    p.add_argument("--robot", default=None)
    p.add_argument("--target", required=True, help="pose JSON: xyz + quaternion|rpy")
    p.add_argument("--q0", type=float, nargs="+", default=None,
                   help="initial joint guess (defaults to the robot rest pose)")
    p.set_defaults(func=cmd_ik)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or version text
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WheelArmError as exc:
        print(f"error [{exc.taxonomy}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
