"""Command-line interface.

Subcommands:

* ``train``            fit a model from a config file and dataset dir
* ``eval``             score a checkpoint on a dataset split
* ``generate``         write synthetic dataset splits from a spec
* ``export-alignment`` dump alignment matrices and figures for one instance
* ``gradcheck``        run the finite-difference gradient suite
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .checks import GRADIENT_TOLERANCE, run_gradient_suite
from .config import (ConfigError, generator_spec_from_file,
                     model_config_from_file, train_config_from_file)
from .dataio import DatasetFormatError, load_dataset
from .export import export_alignment
from .synthetic import write_splits
from .train import DivergenceError, evaluate_model, train

__all__ = ["main"]


def _load_split(data_dir, split: str):
    path = Path(data_dir) / f"{split}.txt"
    if not path.exists():
        raise DatasetFormatError(f"missing dataset file: {path}")
    return load_dataset(path)


def _cmd_train(args) -> int:
    train_config = train_config_from_file(args.config, out_dir=args.out,
                                          seed=args.seed)
    train_inst, k = _load_split(args.data, "train")
    val_inst, k_val = _load_split(args.data, "val")
    if k_val != k:
        raise DatasetFormatError("train and val splits disagree on variate count")
    model_config = model_config_from_file(args.config, num_variates=k)
    train(model_config, train_config, train_inst, val_inst)
    return 0


def _cmd_eval(args) -> int:
    model, norm, _, extra = load_checkpoint(args.checkpoint)
    instances, k = _load_split(args.data, args.split)
    if k != model.config.num_variates:
        raise DatasetFormatError(
            f"checkpoint expects {model.config.num_variates} variates, "
            f"dataset has {k}")
    report = evaluate_model(model, instances, norm, batch_size=args.batch_size)
    parts = [f"split={args.split}", f"instances={len(instances)}"]
    parts += [f"{key}={report[key]!r}" for key in sorted(report)]
    print("eval_summary " + " ".join(parts))
    return 0


def _cmd_generate(args) -> int:
    spec, counts = generator_spec_from_file(args.spec)
    for split in ("train", "val", "test"):
        override = getattr(args, f"{split}_count")
        if override is not None:
            counts[split] = override
    if not counts:
        raise ConfigError("no split counts given (config or command line)")
    paths = write_splits(spec, args.out, counts, seed=args.seed)
    for split, path in sorted(paths.items()):
        print(f"wrote {split}: {path}")
    return 0


def _cmd_export_alignment(args) -> int:
    model, norm, _, _ = load_checkpoint(args.checkpoint)
    instances, _ = load_dataset(args.data)
    matches = [inst for inst in instances if inst.instance_id == args.instance]
    if not matches:
        raise DatasetFormatError(
            f"instance {args.instance!r} not found in {args.data}")
    paths = export_alignment(model, norm, matches[0], args.out)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    samples = 2 if args.quick else 4
    results = run_gradient_suite(seed=args.seed, samples_per_param=samples,
                                 include_model=not args.quick)
    failed = 0
    for name in sorted(results):
        err = results[name]
        ok = err < GRADIENT_TOLERANCE
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: max_rel_err={err:.3e}")
    print(f"gradcheck {'passed' if not failed else 'FAILED'}: "
          f"{len(results) - failed}/{len(results)} under {GRADIENT_TOLERANCE}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tswarp",
        description="Multi-scale classifiers for irregularly sampled time series.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", required=True, help="config file with [model]/[train]")
    t.add_argument("--data", required=True, help="directory with train.txt/val.txt")
    t.add_argument("--out", required=True, help="output directory for artifacts")
    t.add_argument("--seed", type=int, default=None, help="override [train] seed")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="directory with <split>.txt")
    e.add_argument("--split", default="test")
    e.add_argument("--batch-size", type=int, default=64)
    e.set_defaults(func=_cmd_eval)

    g = sub.add_parser("generate", help="write synthetic dataset splits")
    g.add_argument("--spec", required=True, help="config file with [generator]")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    for split in ("train", "val", "test"):
        g.add_argument(f"--{split}-count", type=int, default=None,
                       help=f"override the {split} instance count")
    g.set_defaults(func=_cmd_generate)

    x = sub.add_parser("export-alignment",
                       help="dump alignment matrices for one instance")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--data", required=True, help="dataset file holding the instance")
    x.add_argument("--instance", required=True, help="instance id to export")
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_export_alignment)

    c = sub.add_parser("gradcheck", help="run the gradient suite")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--quick", action="store_true",
                   help="fewer samples, skip the end-to-end model check")
    c.set_defaults(func=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CheckpointError, ConfigError, DatasetFormatError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
