"""Command-line front end mirroring ExtractConfig."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layf-extract",
        description="Export per-layer class-token embeddings of a frozen vision "
        "transformer over an image-folder dataset into a LAYF stream file.",
    )
    parser.add_argument("--model", default="vit_b_16",
                        help="backbone id (vit_b_16, vit_s_32, vit_xs_32, or vit:image=..,patch=..,layers=..,heads=..,hidden=..,mlp=..)")
    parser.add_argument("--dataset", required=True, help="image folder (one subdirectory per class)")
    parser.add_argument("--split", default=None, help="optional subdirectory of the dataset root")
    parser.add_argument("--classes-per-task", default=None,
                        help="CSV class counts per task, e.g. 5,5 (default: one task)")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True, help="output .layf path")
    parser.add_argument("--token", choices=["cls", "mean"], default="cls")
    parser.add_argument("--weights", default=None,
                        help="local state-dict checkpoint; random init with --init-seed when absent")
    parser.add_argument("--init-seed", type=int, default=0)
    parser.add_argument("--no-normalize", action="store_true",
                        help="skip ImageNet channel normalization")
    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    classes_per_task = None
    if args.classes_per_task:
        classes_per_task = tuple(int(n) for n in args.classes_per_task.split(","))
    cfg = ExtractConfig(
        model_id=args.model,
        dataset_path=args.dataset,
        split=args.split,
        classes_per_task=classes_per_task,
        batch_size=args.batch_size,
        device=args.device,
        output_path=args.out,
        token=args.token,
        weights_path=args.weights,
        init_seed=args.init_seed,
        normalize=not args.no_normalize,
    )
    try:
        path = extract(cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    print(f"wrote {path} (+ manifest)")


if __name__ == "__main__":
    main()
