"""Command line front end for the serving loop."""

from __future__ import annotations

import argparse
import sys

from .backends import EchoBackend
from .server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vtrbridge",
        description="Serve embedding and relative-pose models over stdin/stdout.",
    )
    parser.add_argument("--backend", choices=("echo",), default="echo",
                        help="model backend to expose")
    parser.add_argument("--delay-ms", type=float, default=0.0,
                        help="artificial delay per model call, for timeout tests")
    args = parser.parse_args(argv)
    if args.delay_ms < 0.0:
        parser.error("--delay-ms must be non-negative")

    serve(EchoBackend(), delay_s=args.delay_ms / 1000.0)
    return 0


def entrypoint() -> None:
    sys.exit(main())
