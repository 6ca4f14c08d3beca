"""Command line front end: export a corpus, optionally validate the result."""

from __future__ import annotations

import argparse
import logging
import subprocess
import sys

from . import __version__
from .errors import ExportError
from .export import ExportConfig, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="chde-export",
        description="Encode corpus documents with a pretrained transformer and "
        "write a CHDE embedding store with subtoken alignment.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--corpus", required=True, help="document file or directory of *.json documents")
    ap.add_argument("--model", required=True, help="pretrained model name or local path")
    ap.add_argument("--out", required=True, help="store file to write")
    ap.add_argument(
        "--policy",
        default="first",
        choices=("first", "strict"),
        help="subtoken alignment policy (default: the token owning the first character wins)",
    )
    ap.add_argument("--window", type=int, default=None, help="content subtokens per chunk (default: model limit)")
    ap.add_argument("--overlap", type=int, default=None, help="chunk overlap in subtokens (default: window // 4)")
    ap.add_argument("--check", action="store_true", help="run the resolver's export-check on the written store")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cfg = ExportConfig(
        model=args.model,
        corpus=args.corpus,
        out=args.out,
        alignment_policy=args.policy,
        window=args.window,
        overlap=args.overlap,
    )
    try:
        path = export_embeddings(cfg)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}", flush=True)  # before export-check output interleaves
    if args.check:
        cmd = [sys.executable, "-m", "discoref.cli", "export-check", "--store", str(path), "--corpus", args.corpus]
        return subprocess.run(cmd).returncode
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
