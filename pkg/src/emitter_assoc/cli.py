"""
Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 I/O error,
4 shape/architecture mismatch.
"""

import argparse
import dataclasses
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from . import config as config_mod
from .dataset import read_dataset, write_dataset
from .errors import (ArchMismatch, BadConfig, BadMagic, ShapeMismatch, SplitIntegrityError, TruncatedFile,
                     VersionMismatch)
from .experiment import build_model, generate, manifest, manifest_text, run_arch, train_config
from .models import evaluate, load_model, save_model, train
from .nn import functional as F
from .verify import run_checks

log = logging.getLogger("emitter_assoc")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO, EXIT_SHAPE = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _snr(text):
    if text.lower() == "none":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'none', got {text!r}")


def _load_cfg(args) -> config_mod.ExperimentConfig:
    try:
        cfg = config_mod.load_config(args.config) if args.config else config_mod.ExperimentConfig()
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config: {exc}")
    except BadConfig as exc:
        raise CliError(EXIT_CONFIG, f"bad config: {exc}")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if hasattr(args, "snr_db"):
        overrides["snr_db"] = args.snr_db
    return dataclasses.replace(cfg, **overrides)


def _write(path, data, mode="w"):
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}")


def _read_ds(path):
    try:
        return read_dataset(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read dataset {path}: {exc}")
    except (BadMagic, VersionMismatch, TruncatedFile, SplitIntegrityError) as exc:
        raise CliError(EXIT_IO, f"invalid dataset {path}: {exc}")


def cmd_generate(args):
    cfg = _load_cfg(args)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    if not os.path.isdir(out_dir):
        raise CliError(EXIT_IO, f"output directory {out_dir} does not exist")
    ds = generate(cfg)
    try:
        write_dataset(ds, args.out)
        with open(args.out, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    m = manifest(cfg, ds, blob)
    _write(args.out + ".manifest.json", manifest_text(m))
    print(f"wrote {len(ds)} examples to {args.out} (config {m['config_hash'][:12]})")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_cfg(args)
    ds = _read_ds(args.dataset)
    try:
        model = build_model(cfg, args.arch)
        history = train(model, ds, train_config(cfg))
    except (ShapeMismatch, ArchMismatch) as exc:
        raise CliError(EXIT_SHAPE, f"{args.arch} does not fit dataset: {exc}")
    try:
        save_model(model, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    _write(args.out + ".history.csv", history.to_csv())
    print(f"trained {args.arch} for {len(history)} epochs (best {history.best_epoch}) -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    ds = _read_ds(args.dataset)
    try:
        model = load_model(args.model, arch=args.arch)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read model {args.model}: {exc}")
    except (BadMagic, TruncatedFile, VersionMismatch) as exc:
        raise CliError(EXIT_IO, f"invalid model file {args.model}: {exc}")
    except ArchMismatch as exc:
        raise CliError(EXIT_SHAPE, str(exc))
    try:
        report = evaluate(model, ds, "EVAL")
    except (ShapeMismatch, ArchMismatch) as exc:
        raise CliError(EXIT_SHAPE, f"model does not fit dataset: {exc}")
    _write(args.out, report.confusion_csv())
    _write(_summary_path(args.out), report.summary_line() + "\n")
    print(report.summary_line())
    return EXIT_OK


def _summary_path(out):
    stem, _ = os.path.splitext(out)
    return stem + ".summary.txt"


def cmd_verify(args):
    if args.inject_fault:
        F.FAULTS.add(args.inject_fault)
    try:
        failed = run_checks()
    finally:
        F.FAULTS.clear()
    print(f"{len(failed)} check(s) failed" if failed else "all checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_e2e(args):
    cfg = _load_cfg(args)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {args.out}: {exc}")
    ds = generate(cfg)
    ds_path = os.path.join(args.out, "dataset.eacf")
    write_dataset(ds, ds_path)
    with open(ds_path, "rb") as fh:
        _write(ds_path + ".manifest.json", manifest_text(manifest(cfg, ds, fh.read())))
    rows = []
    for arch in ("dcnn", "mcm"):
        model, history, report, wall = run_arch(cfg, ds, arch, shuffle_labels=args.shuffle_labels)
        save_model(model, os.path.join(args.out, f"{arch}.eawt"))
        _write(os.path.join(args.out, f"{arch}.history.csv"), history.to_csv())
        _write(os.path.join(args.out, f"{arch}.confusion.csv"), report.confusion_csv())
        _write(os.path.join(args.out, f"{arch}.summary.txt"), report.summary_line() + "\n")
        rows.append((arch, report.accuracy, len(history), wall))
    table = ["arch,eval_accuracy,epochs,wall_time_s"]
    table += [f"{a},{acc:.6f},{ep},{w:.2f}" for a, acc, ep, w in rows]
    _write(os.path.join(args.out, "results.csv"), "\n".join(table) + "\n")
    print(f"{'arch':<6} {'eval_acc':>9} {'epochs':>7} {'wall_s':>8}")
    for a, acc, ep, w in rows:
        print(f"{a:<6} {acc:>9.4f} {ep:>7d} {w:>8.1f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="emitter-assoc", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        if seed:
            p.add_argument("--seed", type=int, help="root seed override")
            p.add_argument("--snr-db", type=_snr, default=argparse.SUPPRESS, help="SNR in dB, or 'none'")

    p = sub.add_parser("generate", help="simulate soundings and write a dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", choices=("dcnn", "mcm"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on the EVAL split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", choices=("dcnn", "mcm"), help="expected architecture")
    p.add_argument("--out", required=True, help="confusion matrix CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the fast invariant suite")
    p.add_argument("--inject-fault", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("e2e", help="generate, train and evaluate both architectures")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--shuffle-labels", action="store_true", help="label-permutation control run")
    p.set_defaults(func=cmd_e2e)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = int(os.environ.get("EA_THREADS", "1"))
    with threadpool_limits(limits=max(1, threads)):
        try:
            return args.func(args)
        except CliError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return exc.code


if __name__ == "__main__":
    sys.exit(main())
