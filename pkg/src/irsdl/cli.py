"""Command-line entry point: ``irsdl gen | train | eval | sweep``.

Every command resolves its configuration in the same order: the built-in
profile, then ``--config FILE``, then ``--set key=value`` pairs, then the
dedicated flags (``--seed``, ``--T``, ``--pilot-dBm``, ...). Each run writes
``manifest.json`` next to its outputs.

Exit codes: 0 success, 2 configuration error, 3 dimension or precondition
error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import PROFILES, Profile, derive_seed, load_profile, parse_overrides
from .errors import ConfigError, DimensionError, NumericalError
from .experiments import (TEST, check_method, evaluate, load_dataset, make_experiment_dataset,
                          pilot_power_sweep, rate_cdf, read_dataset_header, save_dataset,
                          train_method)
from .nn import TrainConfig, load_model, save_model

EXIT_OK, EXIT_CONFIG, EXIT_DIMENSION, EXIT_NUMERICAL = 0, 2, 3, 4

DATASET_FILE = "dataset.irsds"
MANIFEST_FILE = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def resolve_profile(args) -> Profile:
    """Profile file, then ``--config``, then ``--set`` pairs, then flags."""
    overrides = parse_overrides("\n".join(args.set or []))
    flags = {"seed": args.seed, "T": getattr(args, "T", None),
             "pilot_dBm": getattr(args, "pilot_dBm", None)}
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return load_profile(args.profile, args.config, overrides)


def train_config(args, seed: int, label: str) -> TrainConfig:
    changes = {"seed": derive_seed(seed, label)}
    for name, key in (("lr", "lr0"), ("batch", "batch"), ("max_epochs", "max_epochs")):
        value = getattr(args, name, None)
        if value is not None:
            changes[key] = value
    try:
        return TrainConfig(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def workers(args) -> int:
    return max(1, args.threads or os.cpu_count() or 1)


class Manifest:
    """Provenance record written as ``manifest.json`` into the output directory."""

    def __init__(self, command: str, args, out: Path):
        self.out = out
        self.data = {"command": command, "argv": sys.argv[1:], "version": __version__,
                     "config_path": str(args.config) if args.config else None,
                     "profile": args.profile, "output_dir": str(out), "artifacts": {},
                     "started": _now()}

    def add(self, key: str, path: Path) -> Path:
        self.data["artifacts"][key] = str(path)
        return path

    def write(self, **fields) -> Path:
        self.data.update(fields)
        self.data["finished"] = _now()
        path = self.out / MANIFEST_FILE
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    profile = resolve_profile(args)
    cfg = profile.system
    if args.method is not None and args.T is None:
        cfg = cfg.replace(T=cfg.N + 1 if args.method == 1 else profile.T_short)
    n_test = profile.n_test if args.n_test is None else args.n_test
    n_train = profile.n_train if args.samples is None else args.samples - n_test
    if n_train < 2 or n_test < 1:
        raise ConfigError(f"--samples must leave at least 2 training samples after {n_test} test samples")
    out = _out_dir(args.out)
    manifest = Manifest("gen", args, out)
    ds = make_experiment_dataset(cfg, n_train, n_test, cfg.seed, workers=workers(args))
    save_dataset(ds, manifest.add("dataset", out / DATASET_FILE))
    manifest.write(system=cfg.to_dict(), profile_values=profile.to_dict(),
                   seeds={"master": cfg.seed}, counts=ds.counts(), workers=workers(args))
    print(f"wrote {len(ds)} samples ({ds.counts()}) to {out / DATASET_FILE}")
    return EXIT_OK


def cmd_train(args) -> int:
    profile = resolve_profile(args)
    ds = load_dataset(args.dataset)
    check_method(args.method, ds.T, ds.N)
    hidden = args.hidden or (profile.hidden1 if args.method == 1 else profile.hidden2)
    seed = ds.seed if args.seed is None else args.seed
    tc = train_config(args, seed, f"train/method{args.method}")
    out = _out_dir(args.out)
    manifest = Manifest("train", args, out)
    log = (lambda h: print(f"epoch {h['epoch']:3d} train {h['train_mse']:.5f} "
                           f"val {h['val_mse']:.5f} lr {h['lr']:.2e}")) if args.verbose else None
    model, history = train_method(ds, args.method, hidden, tc, log=log)
    model_path = manifest.add("model", out / f"dl{args.method}.irsmlp")
    save_model(model, model_path)
    rows = [[h["epoch"], repr(h["train_mse"]), repr(h["val_mse"]), repr(h["lr"])] for h in history]
    _write_csv(manifest.add("history", out / "history.csv"), ["epoch", "train_mse", "val_mse", "lr"], rows)
    manifest.write(dataset=str(args.dataset), system=ds.cfg.to_dict(),
                   train_config=dataclasses.asdict(tc), layer_sizes=model.layer_sizes,
                   seeds={"master": seed, "train": tc.seed}, epochs=len(history))
    best = min(h["val_mse"] for h in history)
    print(f"trained DL method {args.method} for {len(history)} epochs, best val MSE {best:.5f}")
    return EXIT_OK


def _method_order(names):
    order = ["optimum", "DL1", "DL2", "LS", "random", "direct"]
    return sorted(names, key=lambda n: (order.index(n) if n in order else len(order), n))


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    if not np.any(ds.split == TEST):
        raise DimensionError(f"{args.dataset} has no test split")
    models = {}
    for path in args.model or []:
        model = load_model(path)
        tag = f"DL{model.meta.get('method', len(models) + 1)}"
        if tag in models:
            raise DimensionError(f"two models for {tag}")
        models[tag] = model
    out = _out_dir(args.out)
    manifest = Manifest("eval", args, out)
    report = evaluate(ds, models, ls=args.baselines, baselines=args.baselines)

    rows = []
    for name in _method_order(report.rates):
        x, p = rate_cdf(report.rates[name])
        rows += [[name, repr(float(r)), repr(float(c))] for r, c in zip(x, p)]
    _write_csv(manifest.add("se_cdf", out / "se_cdf.csv"), ["method", "rate", "cdf"], rows)

    rows = [[name, repr(float(report.pilot_dBm)), repr(float(report.nmse[name]))]
            for name in _method_order(report.nmse)]
    _write_csv(manifest.add("nmse", out / "nmse.csv"), ["method", "power_dBm", "nmse"], rows)

    rows = []
    for name in _method_order(report.mismatch):
        x, p = rate_cdf(report.mismatch[name])
        rows += [[name, repr(float(m)), repr(float(c))] for m, c in zip(x, p)]
    _write_csv(manifest.add("mismatch_cdf", out / "mismatch_cdf.csv"), ["method", "mismatch", "cdf"], rows)

    medians = {name: report.median_rate(name) for name in _method_order(report.rates)}
    manifest.write(dataset=str(args.dataset), models=[str(p) for p in args.model or []],
                   system=ds.cfg.to_dict(), seeds={"master": ds.seed}, median_rate=medians,
                   nmse=report.nmse)
    for name, value in medians.items():
        print(f"{name:8s} median rate {value:.4f} bit/s/Hz")
    return EXIT_OK


def cmd_sweep(args) -> int:
    profile = resolve_profile(args)
    cfg = profile.system
    tc = train_config(args, cfg.seed, "train/method1")
    n_test = profile.n_test if args.n_test is None else args.n_test
    n_train = profile.n_train if args.samples is None else args.samples - n_test
    if n_train < 2 or n_test < 1:
        raise ConfigError(f"--samples must leave at least 2 training samples after {n_test} test samples")
    out = _out_dir(args.out)
    manifest = Manifest("sweep", args, out)
    log = (lambda p, nm: print(f"{p:g} dBm: " + ", ".join(f"{k} {v:.4f}" for k, v in nm.items())))
    table, models = pilot_power_sweep(args.powers, cfg, n_train, n_test, cfg.seed,
                                      args.hidden or profile.hidden1, tc, workers(args), log)
    for p, model in models.items():
        save_model(model, manifest.add(f"model_{p:g}dBm", out / f"dl1_{p:g}dBm.irsmlp"))
    rows = [[m, repr(float(p)), repr(float(v))] for (m, p), v in sorted(table.items())]
    _write_csv(manifest.add("nmse", out / "nmse.csv"), ["method", "power_dBm", "nmse"], rows)
    manifest.write(system=cfg.to_dict(), train_config=dataclasses.asdict(tc),
                   seeds={"master": cfg.seed, "train": tc.seed}, powers=args.powers)
    return EXIT_OK


def cmd_info(args) -> int:
    print(json.dumps(read_dataset_header(args.dataset), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=PROFILES, default="desk", help="built-in parameter set")
    p.add_argument("--config", type=Path, help="key = value file applied on top of the profile")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="single override, repeatable")
    p.add_argument("--seed", type=int, help="master seed")


def _train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=_int_list, help="hidden widths, e.g. 128,128,64")
    p.add_argument("--lr", type=float, help="initial Adam learning rate")
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsdl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a train/val/test dataset")
    _config_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, help="total sample count (training pool plus test set)")
    p.add_argument("--n-test", type=int, dest="n_test", help="test samples (default: profile)")
    p.add_argument("--method", type=int, choices=(1, 2), help="pick T = N+1 (1) or T_short (2)")
    p.add_argument("--T", type=int, help="pilot length")
    p.add_argument("--pilot-dBm", type=float, dest="pilot_dBm", help="pilot transmit power")
    p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train DL method 1 or 2 on a dataset")
    _config_options(p)
    _train_options(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--method", type=int, choices=(1, 2), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="print one line per epoch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score models and baselines on the test split")
    _config_options(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--model", action="append", type=Path, help="trained model file, repeatable")
    p.add_argument("--baselines", action=argparse.BooleanOptionalAction, default=True,
                   help="include LS, random-phase and direct-path methods")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="LS and DL1 NMSE versus pilot power, retraining per power")
    _config_options(p)
    _train_options(p)
    p.add_argument("--powers", type=_float_list, default=[15.0, 25.0, 35.0, 45.0])
    p.add_argument("--samples", type=int, help="total sample count per power point")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("info", help="print a dataset header")
    p.add_argument("dataset", type=Path)
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION


if __name__ == "__main__":
    sys.exit(main())
