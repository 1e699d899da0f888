"""Command-line entry: `foldbridge serve` speaks the protocol on stdio."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .server import BridgeConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldbridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="answer evaluator requests on stdin/stdout")
    p.add_argument("--fold", choices=["mock", "external", "none"], default="mock")
    p.add_argument("--energy", choices=["mock", "external"], default="mock")
    p.add_argument("--ss", choices=["derive", "external"], default="derive")
    p.add_argument("--fold-command", default="",
                   help="template with {fasta} and {pdb} placeholders")
    p.add_argument("--energy-command", default="",
                   help="template with {pdb}; must print a score")
    p.add_argument("--ss-command", default="",
                   help="template with {pdb}; must print one H/E/L line")
    p.add_argument("--workdir", default="foldbridge-work")
    p.add_argument("--call-timeout", type=float, default=120.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = BridgeConfig(
        fold_backend=args.fold,
        energy_backend=args.energy,
        ss_backend=args.ss,
        fold_command=args.fold_command,
        energy_command=args.energy_command,
        ss_command=args.ss_command,
        working_dir=Path(args.workdir),
        call_timeout=args.call_timeout,
    )
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())
