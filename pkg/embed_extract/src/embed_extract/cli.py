"""Command-line entry point: convert public annotations, extract embeddings."""

from __future__ import annotations

import argparse
import sys

from .api_client import EmbeddingServiceError
from .convert import CONVERTERS, convert_annotations
from .jobs import ExtractionJob, extract_embeddings
from .writer import ConversionError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Convert public annotation releases and frozen embeddings "
        "into the softalign dataset formats.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("convert", help="annotation release -> annotations.jsonl + metadata")
    p.add_argument("--source", required=True, choices=sorted(CONVERTERS))
    p.add_argument("--input", required=True, help="path to the upstream release file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("extract", help="compute embeddings and write a loadable manifest")
    p.add_argument("--source-dir", required=True, help="directory written by convert")
    p.add_argument(
        "--backbone",
        required=True,
        help="debug-<dim>, dinov2-small/base/large, or api:<model>",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-dir", default=None, help="images named <sample id>.<ext>")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--endpoint", default=None, help="override the embeddings API URL")
    p.add_argument("--credentials-env", default="OPENAI_API_KEY")
    p.add_argument("--cache-dir", default=None, help="on-disk embedding cache")
    p.set_defaults(func=_cmd_extract)

    return parser


def _cmd_convert(args) -> int:
    path = convert_annotations(args.source, args.input, args.out_dir)
    print(f"wrote {path}")
    return 0


def _cmd_extract(args) -> int:
    job = ExtractionJob(
        source_dir=args.source_dir,
        backbone=args.backbone,
        output_dir=args.out_dir,
        batch_size=args.batch_size,
        image_dir=args.image_dir,
        endpoint=args.endpoint,
        credentials_env=args.credentials_env,
        cache_dir=args.cache_dir,
    )
    manifest = extract_embeddings(job)
    print(f"wrote {manifest}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EmbeddingServiceError as exc:
        print(f"embedding service error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
