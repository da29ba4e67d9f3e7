"""char2image command line: train, eval, infer, serve."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import Char2ImageError


def cmd_train(args) -> int:
    from .train import TrainConfig, train

    cfg = TrainConfig(
        mode=args.mode,
        resolution=args.res,
        steps=args.steps,
        lambda_l1=args.lambda_l1,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        batch_size=args.batch,
        seed=args.seed,
        base_width=args.base_width,
        d_base_width=args.d_base_width,
        alternating=args.alternating,
    )
    history = train(args.manifest, args.out, cfg, device=args.device, progress=True)
    print(
        f"trained {cfg.steps} steps; final smoothed foreground L1 "
        f"{history['smoothed_fg_l1'][-1]:.4f}; checkpoint in {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate, save_metrics
    from .train import load_generator

    G, _ = load_generator(args.ckpt, device=args.device)
    metrics = evaluate(G, args.manifest, split=args.split, device=args.device)
    if args.out:
        save_metrics(metrics, args.out)
    print(
        f"{args.split}: mean foreground L2 {metrics['mean_l2']:.3f}, "
        f"mean foreground SSIM {metrics['mean_ssim']:.4f}"
    )
    return 0


def cmd_infer(args) -> int:
    from PIL import Image

    from . import nrcs
    from .train import infer, load_generator

    G, _ = load_generator(args.ckpt, device=args.device)
    stack = nrcs.read(args.stack)
    img, ms = infer(G, stack.channels, device=args.device)
    u8 = np.clip(np.round(127.5 * (np.moveaxis(img, 0, -1) + 1.0)), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(args.out)
    print(f"wrote {args.out} ({ms:.1f} ms forward pass)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt, device=args.device)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="char2image")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", default="rgbd_parts")
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lambda", dest="lambda_l1", type=float, default=100.0)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.99)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--base-width", dest="base_width", type=int, default=64)
    p.add_argument("--d-base-width", dest="d_base_width", type=int, default=64)
    p.add_argument("--alternating", action="store_true")
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--device", default="cpu")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("serve")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8788)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Char2ImageError as exc:
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
