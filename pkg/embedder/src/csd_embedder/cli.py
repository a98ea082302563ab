"""Command line: `embed file` batches a corpus into an embedding file,
`embed serve` runs the /embed HTTP service."""

from __future__ import annotations

import argparse
import sys

from .files import CorpusError, embed_file
from .models import MODEL_ENV, ModelError, load_encoder
from .service import ProviderConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("file", help="embed a corpus into an embedding file")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--out", required=True, help="output embedding file")
    p.add_argument("--format", choices=["binary", "jsonl"], default="binary")
    p.add_argument("--model", help=f"model spec (default ${MODEL_ENV} or all-MiniLM-L6-v2)")
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("serve", help="run the /embed HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8441", help="listen address host:port")
    p.add_argument("--model", help=f"model spec (default ${MODEL_ENV} or all-MiniLM-L6-v2)")
    p.add_argument("--batch-size", type=int, default=32)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "file":
            encoder = load_encoder(args.model)
            count = embed_file(
                args.corpus,
                args.out,
                encoder,
                format=args.format,
                batch_size=args.batch_size,
            )
            print(f"embedded {count} articles with {encoder.name} -> {args.out}", file=sys.stderr)
            return 0
        serve(ProviderConfig(model=args.model, batch_size=args.batch_size, addr=args.addr))
        return 0
    except (CorpusError, ModelError, OSError, ValueError) as exc:
        print(f"embed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
