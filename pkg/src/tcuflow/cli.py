"""Command-line toolchain: arch / compile / sim / bench / data.

Exit codes: 0 success, 1 domain error (any TcuflowError), 2 usage or io
error. All behavior is controlled by flags and input files; every seeded
operation exposes its seed, so runs are reproducible by construction.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .arch import (ZYNQ7000_BUDGET, check_fit, estimate_resources,
                   load_arch_config, load_budget, utilization_pct)
from .compiler.bundle import emit, load_bundle
from .compiler.lower import lower
from .ecg import (AugmentConfig, add_gaussian_noise, benchmark, load_csv,
                  save_csv, smote_resample, stratified_split)
from .errors import FormatError, TcuflowError
from .nnir.modelio import load_model
from .quant import dequantize_array
from .tcusim import run

_CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")
DEFAULT_ARCH = os.path.join(_CONFIG_DIR, "pynq_z1.arch")
DEFAULT_BUDGET = os.path.join(_CONFIG_DIR, "zynq7000.budget")


def _load_arch(path):
    return load_arch_config(path if path else DEFAULT_ARCH)


def _write_json(payload, out_path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_arch(args):
    cfg = _load_arch(args.config)
    budget = load_budget(args.budget) if args.budget else ZYNQ7000_BUDGET
    est = estimate_resources(cfg)
    pct = utilization_pct(est, budget)
    used = est.as_dict()
    print(f"{'resource':<10} {'used':>10} {'available':>10} {'pct':>8}")
    for name in ("lut", "ff", "bram", "io", "dsp"):
        print(f"{name.upper():<10} {used[name]:>10} "
              f"{getattr(budget, name):>10} {pct[name]:>8.2f}")
    over = check_fit(est, budget)
    if over:
        for name, use, avail in over:
            print(f"does not fit: {name.upper()} needs {use}, "
                  f"budget is {avail}")
        return 1
    print("fits within budget")
    return 0


def cmd_compile(args):
    g = load_model(args.model)
    cfg = _load_arch(args.arch)
    prog = lower(g, cfg)
    os.makedirs(args.out, exist_ok=True)
    stem_name = os.path.splitext(os.path.basename(args.model))[0]
    paths = emit(prog, os.path.join(args.out, stem_name))
    print(f"model {prog.model_name}: {len(prog.instructions)} instructions, "
          f"{prog.constants.shape[0]} constant vectors, "
          f"{prog.macs_graph} MACs")
    for kind in ("manifest", "program", "constants"):
        print(f"wrote {paths[kind]}")
    return 0


def _load_tensor(path, shape):
    try:
        values = np.loadtxt(path, dtype=np.float64).reshape(-1)
    except ValueError as exc:
        raise FormatError(f"{path}: cannot parse tensor file: {exc}")
    want = int(np.prod(shape))
    if values.size != want:
        raise FormatError(f"{path}: expected {want} values for shape "
                          f"{tuple(shape)}, got {values.size}")
    return values.reshape(shape)


def cmd_sim(args):
    prog = load_bundle(args.bundle,
                       expected_arch=_load_arch(args.arch) if args.arch
                       else None)
    x = _load_tensor(args.input, prog.input.shape)
    out, report = run(prog, x)
    payload = {"report": report.as_dict(),
               "output": dequantize_array(out.raw, out.fmt).tolist()}
    _write_json(payload, args.out)
    return 0


def cmd_bench(args):
    g = load_model(args.model)
    cfg = _load_arch(args.arch)
    ds = load_csv(args.data)
    report = benchmark(g, ds, cfg, n_beats=args.beats, workers=args.workers)
    _write_json(report.as_dict(), args.out)
    return 0


def cmd_data(args):
    ds = load_csv(getattr(args, "in"))
    stages = {"loaded": ds.class_counts().tolist()}
    if args.noise_sigma is not None:
        ds = add_gaussian_noise(
            ds, AugmentConfig(noise_sigma=args.noise_sigma, seed=args.seed))
        stages["noised"] = ds.class_counts().tolist()
    if args.smote:
        ds = smote_resample(ds, k=args.smote_k, seed=args.seed)
        stages["smote"] = ds.class_counts().tolist()
    if args.split is not None:
        if not (args.train_out and args.val_out):
            raise FormatError("--split needs --train-out and --val-out")
        train, val = stratified_split(ds, train_frac=args.split,
                                      seed=args.seed)
        save_csv(train, args.train_out)
        save_csv(val, args.val_out)
        stages["train"] = train.class_counts().tolist()
        stages["val"] = val.class_counts().tolist()
    else:
        if not args.out:
            raise FormatError("--out is required unless --split is given")
        save_csv(ds, args.out)
    _write_json(stages, None)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tcuflow",
        description="Compile small neural nets onto a simulated tensor "
                    "compute unit and measure them.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("arch", help="estimate resources and check fit")
    p.add_argument("--config", help="architecture file (default: bundled)")
    p.add_argument("--budget", help="resource budget file (default: bundled "
                                    "Zynq-7000)")
    p.set_defaults(func=cmd_arch)

    p = sub.add_parser("compile", help="compile a model to an artifact "
                                       "bundle")
    p.add_argument("--model", required=True, help="model manifest (.model)")
    p.add_argument("--arch", help="architecture file (default: bundled)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sim", help="run a bundle on one input tensor")
    p.add_argument("--bundle", required=True, help="bundle manifest "
                                                   "(.tmodel)")
    p.add_argument("--input", required=True, help="text tensor file")
    p.add_argument("--arch", help="require the bundle to match this "
                                  "architecture file")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("bench", help="benchmark a model over beats")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="beat CSV")
    p.add_argument("--arch")
    p.add_argument("--beats", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("data", help="augment/rebalance/split a beat CSV")
    p.add_argument("--in", required=True, dest="in", metavar="CSV")
    p.add_argument("--out", help="transformed CSV path")
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--smote", action="store_true")
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--split", type=float, default=None,
                   help="train fraction; writes --train-out/--val-out")
    p.add_argument("--train-out")
    p.add_argument("--val-out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TcuflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
