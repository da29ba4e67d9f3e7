"""charpipe command-line interface.

Subcommands: retarget, render, dataset, reenact, serve. A JSON file given
via --config supplies defaults; explicitly passed flags override it.
Exit codes: 0 ok, 2 validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import CharpipeError
from .kinematics import load_motion, load_rig, save_motion
from .pipeline import DatasetConfig, ReenactConfig, build_dataset, reenact, validate_manifest
from .retarget import RetargetConfig, retarget_sequence


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _merge(config: dict, args: argparse.Namespace, mapping: dict[str, str]) -> dict:
    """config-file values first, explicit CLI flags override."""
    out = dict(config)
    for arg_name, key in mapping.items():
        if hasattr(args, arg_name):
            out[key] = getattr(args, arg_name)
    return out


def cmd_retarget(args) -> int:
    src_skel = load_rig(args.source_rig)
    src_motion = load_motion(args.source_motion)
    trgt_skel = load_rig(args.target_rig)
    cfg = RetargetConfig(
        max_iterations=args.max_iterations,
        damping=args.damping,
        residual_tol=args.residual_tol,
        step_tol=args.step_tol,
        init_from_previous=not args.cold_start,
    )
    motion, report = retarget_sequence(src_skel, src_motion, trgt_skel, cfg)
    save_motion(motion, args.out)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    worst = max(report.residuals) if report.residuals else 0.0
    print(f"retargeted {len(motion)} frames, worst residual {worst:.3e}")
    return 0


def cmd_render(args) -> int:
    from .charmesh import PosedMesh, load_character, skin
    from .conditioning import ConditioningMode, compose, write_stack_preview
    from .kinematics import Pose
    from .raster import (
        DiffuseShading,
        RoomBackground,
        background_from_dict,
        load_camera,
        make_default_camera,
        render,
        render_background,
        render_skeleton,
        save_png,
    )

    mesh, skel = load_character(args.character)
    cam = load_camera(args.camera) if args.camera else make_default_camera(args.res, args.res)
    if args.motion:
        motion = load_motion(args.motion)
        pose = motion.frames[args.frame]
    else:
        pose = Pose.rest(skel)
    posed = skin(mesh, skel, pose)
    scene = background_from_dict(json.loads(args.background)) if args.background else RoomBackground()

    out_path = Path(args.out)
    if args.what == "skeleton":
        save_png(render_skeleton(skel, pose, cam), out_path)
    elif args.what == "stack":
        bg = render_background(scene, cam)
        out = render(posed, cam, supersample=args.supersample)
        skel_img = render_skeleton(skel, pose, cam)
        stack = compose(out, bg, ConditioningMode(args.mode), skeleton_rgb=skel_img)
        write_stack_preview(stack, out_path)
    elif args.what == "composite":
        from .pipeline import DatasetConfig, _ground_truth_frame

        bg = render_background(scene, cam)
        cfg = DatasetConfig(supersample=args.supersample)
        save_png(_ground_truth_frame(posed, cam, bg, scene, cfg), out_path)
    else:
        out = render(posed, cam, supersample=args.supersample)
        if args.what == "color":
            save_png(out.color, out_path)
        elif args.what == "depth":
            save_png(out.depth, out_path)
        elif args.what == "masks":
            palette = np.array(
                [[0, 0, 0], [230, 60, 60], [60, 180, 60], [60, 90, 230],
                 [230, 200, 60], [180, 60, 200], [60, 210, 210]],
                dtype=np.uint8,
            )
            from PIL import Image

            Image.fromarray(palette[out.label]).save(out_path)
    print(f"wrote {out_path}")
    return 0


_DATASET_FLAGS = {
    "out": "out_dir",
    "res": "resolution",
    "mode": "mode",
    "frames": "n_frames",
    "fps": "fps",
    "seed": "seed",
    "motion_kind": "motion_kind",
    "motion": "motion_path",
    "character": "character_path",
    "camera": "camera_path",
    "smoothing_sigma": "smoothing_sigma",
    "val_fraction": "val_fraction",
    "supersample": "supersample",
    "workers": "workers",
    "resume": "resume",
    "preview": "preview",
}


def cmd_dataset(args) -> int:
    merged = _merge(_load_config(args.config), args, _DATASET_FLAGS)
    cfg = DatasetConfig.from_dict(merged)
    manifest = build_dataset(cfg)
    if args.validate:
        validate_manifest(Path(cfg.out_dir) / "manifest.json")
    print(f"dataset: {len(manifest['entries'])} pairs in {cfg.out_dir}")
    return 0


_REENACT_FLAGS = {
    "source_rig": "source_rig",
    "source_motion": "source_motion",
    "target_character": "target_character",
    "out": "out_dir",
    "mode": "mode",
    "camera": "camera_path",
    "res": "resolution",
    "train_motion": "train_motion",
    "smoothing_sigma": "smoothing_sigma",
    "supersample": "supersample",
    "preview": "preview",
}


def cmd_reenact(args) -> int:
    merged = _merge(_load_config(args.config), args, _REENACT_FLAGS)
    cfg = ReenactConfig.from_dict(merged)
    index = reenact(cfg)
    print(f"reenacted {len(index['entries'])} frames into {cfg.out_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .editservice import create_app

    app = create_app(
        default_character=args.character,
        default_camera=args.camera,
        resolution=args.resolution,
        translator_url=args.translator_url,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="charpipe")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retarget", help="retarget a motion file between rigs")
    p.add_argument("--source-rig", required=True)
    p.add_argument("--source-motion", required=True)
    p.add_argument("--target-rig", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--damping", type=float, default=1e-3)
    p.add_argument("--residual-tol", type=float, default=1e-10)
    p.add_argument("--step-tol", type=float, default=1e-8)
    p.add_argument("--cold-start", action="store_true")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("render", help="render one frame of a character")
    p.add_argument("--character", required=True)
    p.add_argument("--camera")
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--motion")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument(
        "--what",
        choices=["color", "depth", "masks", "skeleton", "composite", "stack"],
        default="composite",
    )
    p.add_argument("--mode", default="rgbd_parts")
    p.add_argument("--background", help="inline JSON background spec")
    p.add_argument("--supersample", type=int, default=1, choices=[1, 2])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("dataset", help="build a paired training corpus")
    p.add_argument("--config")
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.add_argument("--res", type=int, default=argparse.SUPPRESS)
    p.add_argument(
        "--mode",
        choices=["skeleton", "rgb_mask", "rgb_parts", "rgbd_mask", "rgbd_parts"],
        default=argparse.SUPPRESS,
    )
    p.add_argument("--frames", type=int, default=argparse.SUPPRESS)
    p.add_argument("--fps", type=float, default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--motion-kind", dest="motion_kind", default=argparse.SUPPRESS)
    p.add_argument("--motion", default=argparse.SUPPRESS, help="motion JSON instead of procedural")
    p.add_argument("--character", default=argparse.SUPPRESS, help="character.obj path")
    p.add_argument("--camera", default=argparse.SUPPRESS)
    p.add_argument("--smoothing-sigma", dest="smoothing_sigma", type=float, default=argparse.SUPPRESS)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=argparse.SUPPRESS)
    p.add_argument("--supersample", type=int, choices=[1, 2], default=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    p.add_argument("--resume", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--preview", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--validate", action="store_true", help="validate manifest after build")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("reenact", help="drive a target character with source motion")
    p.add_argument("--config")
    p.add_argument("--source-rig", dest="source_rig", default=argparse.SUPPRESS)
    p.add_argument("--source-motion", dest="source_motion", default=argparse.SUPPRESS)
    p.add_argument("--target-character", dest="target_character", default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.add_argument(
        "--mode",
        choices=["skeleton", "rgb_mask", "rgb_parts", "rgbd_mask", "rgbd_parts"],
        default=argparse.SUPPRESS,
    )
    p.add_argument("--camera", default=argparse.SUPPRESS)
    p.add_argument("--res", type=int, default=argparse.SUPPRESS)
    p.add_argument("--train-motion", dest="train_motion", default=argparse.SUPPRESS)
    p.add_argument("--smoothing-sigma", dest="smoothing_sigma", type=float, default=argparse.SUPPRESS)
    p.add_argument("--supersample", type=int, choices=[1, 2], default=argparse.SUPPRESS)
    p.add_argument("--preview", action="store_true", default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_reenact)

    p = sub.add_parser("serve", help="run the interactive pose-editing service")
    p.add_argument("--character", required=True)
    p.add_argument("--camera")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--translator-url", dest="translator_url")
    p.add_argument("--ui-dir", dest="ui_dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CharpipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
