"""Command line for the content embedding export."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoder import EncoderLoadError
from .export import ExportJob, run_export
from .projection import ProjectionError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="content-export",
        description="Encode item descriptions with a local pretrained "
        "sentence encoder and write a WDR1 embedding file",
    )
    parser.add_argument("--items", required=True, help="items-content.csv path")
    parser.add_argument("--out", required=True, help="output embedding file path")
    parser.add_argument("--dim", required=True, type=int, help="output dimension")
    parser.add_argument("--batch", type=int, default=32, help="encoder batch size")
    parser.add_argument("--encoder", required=True,
                        help="directory with the local encoder assets")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    job = ExportJob(
        items_csv=args.items,
        out_path=args.out,
        dim=args.dim,
        encoder_path=args.encoder,
        batch_size=args.batch,
    )
    try:
        result = run_export(job)
    except (EncoderLoadError, ProjectionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.rows} rows of dim {result.dim} to {args.out} "
          f"({result.empty_items} empty)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
