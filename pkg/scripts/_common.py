"""Shared helpers for the experiment scripts."""
import argparse
import sys
from pathlib import Path

from mimo_ae.cli import main


def parser(description: str, out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out-dir", default=f"results/{out}")
    p.add_argument("--seed", default="0")
    p.add_argument("--updates", default=None, help="override the training recipe (quick runs)")
    p.add_argument("--max-symbols", default="10000000")
    p.add_argument("--min-errors", default="100")
    p.add_argument("--threads", default="1")
    return p


def run(*argv) -> None:
    argv = [str(a) for a in argv]
    print("mimo-ae " + " ".join(argv), file=sys.stderr, flush=True)
    code = main(argv)
    if code:
        sys.exit(code)


def sweep_flags(args) -> list[str]:
    return ["--seed", args.seed, "--max-symbols", args.max_symbols, "--min-errors", args.min_errors, "--threads", args.threads]


def train_flags(args) -> list[str]:
    return ["--seed", args.seed] + (["--updates", args.updates] if args.updates else [])


def out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d
