"""Command-line front end.

Subcommands: ``train``, ``eval``, ``baseline``, ``shape`` and ``compare``.
Exit codes are 0 on success, 2 for usage errors, 3 when training diverges and
4 for malformed model or constellation files. Resolved settings are printed
to stderr before any computation.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import ae, baseline, nn
from . import constellation as cst
from .linalg import InvalidInputError
from .ser import StoppingRule, SerCurve, ser_sweep, snr_grid, write_combined_csv, write_csv

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_FORMAT = 0, 2, 3, 4
SYSTEMS = ("siso", "open-loop", "closed-loop", "mu-mimo")
SCHEMES = ("alamouti", "svd", "svd-alloc", "zf", "awgn")
THREADS_ENV = "MIMO_AE_THREADS"


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits: {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(float(text)) if "e" in text.lower() else int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of key=value lines; explicit flags win")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--threads", type=_positive_int, default=None, help=f"evaluation threads (env {THREADS_ENV}, default 1)")
    p.add_argument("--parallel-batch", action="store_true", help="allow multithreaded BLAS (not bit-reproducible)")


def _add_sweep(p: argparse.ArgumentParser) -> None:
    p.add_argument("--snr-start", type=float, default=0.0)
    p.add_argument("--snr-stop", type=float, default=24.0)
    p.add_argument("--snr-step", type=float, default=2.0)
    p.add_argument("--min-errors", type=_positive_int, default=100)
    p.add_argument("--max-symbols", type=_positive_int, default=10**7)
    p.add_argument("--chunk-blocks", type=_positive_int, default=10_000)


def _add_training(p: argparse.ArgumentParser, snr_default=None) -> None:
    p.add_argument("--snr-db", type=float, default=snr_default, help="training SNR (default: recipe of the system)")
    p.add_argument("--updates", type=_positive_int, default=None)
    p.add_argument("--batch-size", type=_positive_int, default=2048)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--loss-out", default=None, help="loss trace CSV (default: loss.csv beside --out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimo-ae", description="MIMO autoencoders and classical baselines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an autoencoder and write its model container")
    _add_common(p)
    p.add_argument("--system", choices=SYSTEMS, required=True)
    p.add_argument("--m", type=_positive_int, default=16, help="messages per user or per slot")
    _add_training(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="SER sweep of a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    _add_sweep(p)
    p.add_argument("--per-user", action="store_true", help="also write one CSV per message slot")
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", help="SER sweep of a classical scheme")
    _add_common(p)
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--constellation", default="qpsk", help="catalog name or constellation file")
    p.add_argument("--m", type=_positive_int, default=16, help="messages per channel use for svd-alloc")
    _add_sweep(p)
    p.add_argument("--per-user", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("shape", help="learn a shaped constellation with a SISO autoencoder")
    _add_common(p)
    p.add_argument("--m", type=_positive_int, default=16)
    _add_training(p, snr_default=ae.TRAIN_SNR_DB["siso"])
    p.add_argument("--model-out", default=None, help="also write the SISO model container")
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="autoencoder and baselines on one SNR grid")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--baselines", default=None, help="comma-separated schemes (default: the reference for the system)")
    p.add_argument("--constellation", default=None, help="baseline constellation (default: catalog entry of size m)")
    _add_sweep(p)
    p.add_argument("--scatter", default=None, help="write the learned codebook as CSV")
    p.add_argument("--out", required=True)
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _apply_config(sub_parser, path: str) -> None:
    """Install config values as defaults so explicit flags override them."""
    try:
        values = _read_config(path)
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None
    actions = {a.dest: a for a in sub_parser._actions}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        a = actions[key]
        if a.nargs == 0:
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = a.type(raw) if a.type else raw
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise UsageError(f"config {key}: {e}") from None
            if a.choices and val not in a.choices:
                raise UsageError(f"config {key}: {val!r} not in {a.choices}")
        sub_parser.set_defaults(**{key: val})
        a.required = False


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if a in COMMANDS), None)
        if command is not None:
            sub = parser._subparsers._group_actions[0].choices[command]
            _apply_config(sub, known.config)
    return parser.parse_args(argv)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return n
    return 1


def _print_settings(args) -> None:
    for k, v in sorted(vars(args).items()):
        print(f"# {k}={v}", file=sys.stderr)


def _rule(args) -> StoppingRule:
    return StoppingRule(args.min_errors, args.max_symbols, args.chunk_blocks)


def _snrs(args) -> list[float]:
    return snr_grid(args.snr_start, args.snr_stop, args.snr_step)


def _loss_path(args) -> Path:
    return Path(args.loss_out) if args.loss_out else Path(args.out).parent / "loss.csv"


def _progress(total):
    step = max(1, total // 20)

    def cb(k, loss):
        if k % step == 0 or k == total - 1:
            print(f"update {k + 1}/{total} loss {loss:.6f}", file=sys.stderr, flush=True)

    return cb


def _write_per_user(curve: SerCurve, out: str) -> None:
    slots = len(curve.points[0].errors_per_slot)
    if slots < 2:
        return
    base = Path(out)
    for i in range(slots):
        write_csv(curve.per_slot(i), base.with_name(f"{base.stem}.user{i}{base.suffix}"))


def cmd_train(args) -> int:
    kind = ae.normalize_kind(args.system)
    cfg = ae.default_train_config(
        kind, args.m, snr_db=args.snr_db, updates=args.updates, batch_size=args.batch_size, lr=args.lr, seed=args.seed
    )
    print(f"# training {cfg}", file=sys.stderr)
    result = ae.new_trained_system(kind, args.m, cfg, callback=_progress(cfg.updates))
    ae.save_system(result.system, args.out)
    ae.write_loss_csv(result.losses, _loss_path(args))
    return EXIT_OK


def cmd_shape(args) -> int:
    cfg = ae.TrainConfig(
        args.snr_db, args.batch_size, args.lr, args.updates or ae.TRAIN_UPDATES["siso"], args.seed
    )
    print(f"# training {cfg}", file=sys.stderr)
    c, result = ae.train_siso_shaping(args.m, args.snr_db, cfg, args.out, callback=_progress(cfg.updates))
    if args.model_out:
        ae.save_system(result.system, args.model_out)
    ae.write_loss_csv(result.losses, _loss_path(args))
    return EXIT_OK


def make_baseline(scheme: str, constellation: cst.Constellation | None, m: int):
    if scheme == "alamouti":
        return baseline.AlamoutiScheme(constellation)
    if scheme == "zf":
        return baseline.ZfScheme(constellation)
    if scheme == "awgn":
        return baseline.AwgnScheme(constellation)
    if scheme == "svd-alloc":
        return baseline.SvdScheme(m, "alloc")
    if scheme == "svd":
        # plain closed-loop reference: equal power, the chosen constellation on both streams
        c = constellation
        return baseline.SvdScheme(c.size**2, baseline.Allocation((c.name, c.name), (0.5, 0.5), float("nan")))
    raise UsageError(f"unknown scheme {scheme!r}")


def cmd_baseline(args) -> int:
    c = cst.resolve(args.constellation)
    if args.scheme == "svd" and c.grid is None:
        raise UsageError("svd needs a catalog constellation")
    scheme = make_baseline(args.scheme, c, args.m)
    curve = ser_sweep(scheme, _snrs(args), _rule(args), args.seed, threads=_threads(args), tag=scheme.name)
    write_csv(curve, args.out)
    if args.per_user:
        _write_per_user(curve, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    system = ae.load_system(args.model)
    scheme = ae.AeScheme(system)
    curve = ser_sweep(scheme, _snrs(args), _rule(args), args.seed, threads=_threads(args), tag=scheme.name)
    write_csv(curve, args.out)
    if args.per_user:
        _write_per_user(curve, args.out)
    return EXIT_OK


# reference schemes per system kind
_DEFAULT_BASELINES = {
    "siso": ("awgn",),
    "open_loop": ("alamouti",),
    "closed_loop": ("svd", "svd-alloc"),
    "mu_mimo": ("zf",),
}
_CATALOG_BY_SIZE = {2: "bpsk", 4: "qpsk", 8: "qam8", 16: "qam16"}


def cmd_compare(args) -> int:
    system = ae.load_system(args.model)
    names = args.baselines.split(",") if args.baselines else list(_DEFAULT_BASELINES[system.kind])
    for n in names:
        if n not in SCHEMES:
            raise UsageError(f"unknown baseline {n!r}; choose from {SCHEMES}")
    if args.constellation:
        c = cst.resolve(args.constellation)
    else:
        # closed loop sends m messages over two streams, so each stream carries sqrt(m)
        size = int(round(system.m**0.5)) if system.kind == "closed_loop" else system.m
        if size not in _CATALOG_BY_SIZE:
            raise UsageError(f"no catalog constellation of size {size}; pass --constellation")
        c = cst.build(_CATALOG_BY_SIZE[size])
    schemes = [ae.AeScheme(system)] + [make_baseline(n, c, system.m) for n in names]
    snrs, rule, threads = _snrs(args), _rule(args), _threads(args)
    curves = [ser_sweep(s, snrs, rule, args.seed, threads=threads, tag=s.name) for s in schemes]
    write_combined_csv(curves, args.out)
    if args.scatter:
        if system.kind not in ("siso", "open_loop"):
            raise UsageError("codebook scatter exists only for siso and open-loop systems")
        ae.write_scatter_csv(ae.extract_codebook(system), args.scatter)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline, "shape": cmd_shape, "compare": cmd_compare}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"mimo-ae: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        _threads(args)
        _print_settings(args)
        limits = contextlib.nullcontext() if args.parallel_batch else threadpool_limits(1)
        with limits:
            return COMMANDS[args.command](args)
    except (UsageError, InvalidInputError) as e:
        print(f"mimo-ae {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ae.TrainingDivergedError as e:
        print(f"mimo-ae {args.command}: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (nn.ModelFormatError, cst.ConstellationFileError) as e:
        print(f"mimo-ae {args.command}: format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as e:
        print(f"mimo-ae {args.command}: {e}", file=sys.stderr)
        return EXIT_FORMAT if args.command in ("eval", "compare") else EXIT_USAGE
