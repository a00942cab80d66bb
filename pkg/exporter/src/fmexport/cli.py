"""Command-line interface: `fmexport export --images DIR --out DIR`."""

from __future__ import annotations

import argparse
import sys

from .export import POOL_LAYERS, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmexport",
        description="Export CNN max-pooling activations as GGFM filter-map files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export activations for an image directory")
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--out", required=True, help="output directory for .ggfm + manifest")
    p.add_argument("--model", default="vgg16", choices=["vgg16"])
    p.add_argument("--weights", default="pretrained",
                   help='"pretrained", "random", or a path to a state-dict file')
    p.add_argument("--layers", default="all",
                   help='"all" or comma-separated pool names (pool1..pool5)')
    p.add_argument("--resize", type=int, default=256, help="shorter-side resize")
    p.add_argument("--crop", type=int, default=224, help="center-crop size")
    p.add_argument("--dev-count", type=int, default=0,
                   help="declare the last N instances as development rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--notes", default="")
    p.set_defaults(func=_cmd_export)
    return parser


def _cmd_export(args) -> int:
    layers = POOL_LAYERS if args.layers == "all" else tuple(
        s.strip() for s in args.layers.split(",") if s.strip())
    job = ExportJob(
        image_dir=args.images,
        out_dir=args.out,
        model=args.model,
        weights=args.weights,
        layers=layers,
        resize=args.resize,
        crop=args.crop,
        dev_count=args.dev_count,
        seed=args.seed,
        notes=args.notes,
    )
    result = export(job)
    counts = ", ".join(f"{layer}:{c}" for layer, c in result.channel_counts.items())
    print(f"exported {len(result.instance_ids)} instances "
          f"({len(result.skipped)} skipped) to {args.out}")
    print(f"channels per layer: {counts}")
    print(f"manifest: {result.manifest_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"fmexport: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
