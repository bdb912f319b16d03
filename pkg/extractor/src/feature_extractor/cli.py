"""Command-line frontend mirroring the ExtractionJob fields."""

import argparse
import logging
import sys
from pathlib import Path

from .extract import ExtractionError, ExtractionJob, extract, merge_into_manifest


def build_parser():
    p = argparse.ArgumentParser(
        prog="extract-features",
        description="Export layer-wise image embeddings from a vision model "
                    "as manifest + NPY tensors")
    p.add_argument("--model", required=True, help="hub name or checkpoint path")
    p.add_argument("--images", required=True, help="stimulus image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--layers", default="all",
                   help="'all' or comma-separated block indices")
    p.add_argument("--token-pool", choices=["mean_patches", "mean_all"],
                   default="mean_patches")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.add_argument("--dtype", choices=["<f4", "<f8"], default="<f4")
    p.add_argument("--on-error", choices=["abort", "skip"], default="abort")
    p.add_argument("--extraction-point",
                   choices=["vision_encoder", "decoder"], default="vision_encoder")
    p.add_argument("--model-id", default=None,
                   help="override the sanitized model id")
    p.add_argument("--merge-manifest", default=None,
                   help="EEG dataset manifest to merge the features into")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if args.verbose else logging.WARNING)
    layers = "all"
    if args.layers != "all":
        try:
            layers = [int(tok) for tok in args.layers.split(",") if tok.strip()]
        except ValueError:
            print(f"extract-features: bad --layers {args.layers!r}", file=sys.stderr)
            return 1
    try:
        job = ExtractionJob(
            model=args.model, image_dir=args.images, out_dir=args.out,
            layers=layers, token_pool=args.token_pool,
            batch_size=args.batch_size, device=args.device, dtype=args.dtype,
            on_error=args.on_error, extraction_point=args.extraction_point,
            model_id=args.model_id,
        )
        manifest = extract(job)
        print(manifest)
        if args.merge_manifest:
            merged = merge_into_manifest(manifest, args.merge_manifest,
                                         Path(args.out) / "merged_manifest.json")
            print(merged)
        return 0
    except ExtractionError as exc:
        print(f"extract-features: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"extract-features: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
