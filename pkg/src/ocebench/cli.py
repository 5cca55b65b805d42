"""Command line entry point.

Subcommands: simulate, preprocess, velocity, train, evaluate, report.
Exit codes: 0 success, 1 domain error (one-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .core import read_manifest
from .errors import OcebenchError
from .evalharness import (
    MODEL_ORDER,
    ProtocolConfig,
    fig3_csv,
    load_report,
    make_sixfold_plan,
    predictions_to_csv,
    render_report,
    run_protocol,
    save_report,
)
from .pipeline import ensure_stages, run_preprocess, run_velocity
from .presets import cnn_train_config, get_preset, mlp_train_config, resolve_threads
from .wavesim import DatasetConfig, generate_dataset


def _write_run_meta(out_dir: str, name: str, args_dict: dict, started: float) -> None:
    from . import kernels

    meta = {
        "subcommand": name,
        "args": args_dict,
        "versions": {"ocebench": __version__, "numpy": np.__version__, "kernels": kernels.BACKEND},
        "elapsed_s": round(time.time() - started, 3),
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"run_meta_{name}.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = DatasetConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = DatasetConfig.from_dict(json.load(fh))
    threads = resolve_threads(args.threads)
    samples = generate_dataset(cfg, args.seed, args.out, threads=threads)
    _write_run_meta(args.out, "simulate", {"seed": args.seed, "samples": len(samples)}, started)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    started = time.time()
    preset = get_preset(args.preset)
    threads = resolve_threads(args.threads)
    pm = run_preprocess(args.manifest, args.out, preset, threads)
    _write_run_meta(args.out, "preprocess", {"preset": args.preset}, started)
    print(f"preprocessed {len(pm['samples'])} samples to {args.out}")
    return 0


def cmd_velocity(args) -> int:
    started = time.time()
    velocities = run_velocity(args.manifest, args.preproc, args.out)
    ok = sum(1 for v in velocities.values() if v == v)
    _write_run_meta(os.path.dirname(os.path.abspath(args.out)) or ".", "velocity",
                    {"n": len(velocities), "extracted": ok}, started)
    print(f"velocity extracted for {ok}/{len(velocities)} samples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    preset = get_preset(args.preset)
    threads = resolve_threads(args.threads)
    prepared, _ = ensure_stages(args.manifest, args.work, preset, threads)
    samples = read_manifest(args.manifest)
    folds = make_sixfold_plan(samples, args.seed)
    if not 0 <= args.fold < len(folds):
        raise OcebenchError(f"fold {args.fold} outside 0..{len(folds) - 1}")
    if args.model not in MODEL_ORDER:
        raise OcebenchError(f"unknown model {args.model!r}; choose from {MODEL_ORDER}")
    from .core import derive_sample_seed
    from .evalharness import _targets
    from .nn import build_cnn, save_model, train_model
    from .nn.models import CnnArch
    from .nn.training import LazyTensorDataset

    fold = folds[args.fold]
    if args.model not in ("CNN-1Dt", "CNN-2Dt"):
        raise OcebenchError("train subcommand persists CNN checkpoints; use evaluate for shallow models")
    rank = 1 if args.model == "CNN-1Dt" else 2
    tcfg = cnn_train_config(preset, seed=derive_sample_seed(args.seed, f"{args.model}:fold{args.fold}:shuffle"))
    mseed = derive_sample_seed(args.seed, f"{args.model}:fold{args.fold}")
    scale = np.float32(preset.input_scale)

    def transform(arr):
        return (arr * scale)[None, ...]

    key = "map_path" if rank == 1 else "volume_path"
    ds = LazyTensorDataset([getattr(prepared[i], key) for i in fold.optimization_ids], transform)
    vs = LazyTensorDataset([getattr(prepared[i], key) for i in fold.validation_ids], transform)
    model = build_cnn(CnnArch(rank=rank, k0=preset.k0), seed=mseed)
    history = train_model(model, ds, _targets(prepared, fold.optimization_ids),
                          vs, _targets(prepared, fold.validation_ids), tcfg)
    save_model(model, args.out)
    with open(args.out + ".history.csv", "w", encoding="utf-8") as fh:
        fh.write(history.to_csv())
    _write_run_meta(os.path.dirname(os.path.abspath(args.out)) or ".", "train",
                    {"model": args.model, "fold": args.fold, "best_epoch": history.best_epoch,
                     "best_val_mae": history.best_val_mae}, started)
    print(f"trained {args.model} fold {args.fold}: best val MAE {history.best_val_mae:.3f} "
          f"at epoch {history.best_epoch}")
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    preset = get_preset(args.preset)
    threads = resolve_threads(args.threads)
    work = args.work or os.path.join(os.path.dirname(os.path.abspath(args.out)) or ".", "work")
    prepared, velocities = ensure_stages(args.manifest, work, preset, threads)
    samples = read_manifest(args.manifest)
    folds = make_sixfold_plan(samples, args.seed)
    if args.models == "all":
        models = list(MODEL_ORDER)
    else:
        models = [m.strip() for m in args.models.split(",") if m.strip()]
        unknown = [m for m in models if m not in MODEL_ORDER]
        if unknown:
            raise OcebenchError(f"unknown models {unknown}; choose from {MODEL_ORDER}")
    cfg = ProtocolConfig(
        k0=preset.k0,
        input_scale=preset.input_scale,
        cnn_train=cnn_train_config(preset),
        mlp_train=mlp_train_config(preset),
    )
    report, predictions, imputed = run_protocol(prepared, folds, models, cfg, args.seed)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    save_report(report, args.out, extra={"preset": preset.name, "seed": args.seed,
                                         "velocity_imputed": imputed})
    with open(os.path.join(out_dir, "predictions.csv"), "w", encoding="utf-8") as fh:
        fh.write(predictions_to_csv(predictions))
    with open(os.path.join(out_dir, "fig3.csv"), "w", encoding="utf-8") as fh:
        fh.write(fig3_csv(samples, velocities))
    _write_run_meta(out_dir, "evaluate",
                    {"preset": preset.name, "seed": args.seed, "models": models}, started)
    print(render_report(report, "table"))
    return 0


def cmd_report(args) -> int:
    report = load_report(args.infile)
    sys.stdout.write(render_report(report, args.format))
    if args.plot:
        # fig3 CSV is produced by evaluate next to the report; copy if asked
        src = os.path.join(os.path.dirname(os.path.abspath(args.infile)) or ".", "fig3.csv")
        if not os.path.exists(src):
            raise OcebenchError(f"no fig3.csv next to {args.infile}")
        with open(src, "r", encoding="utf-8") as f_in, open(args.plot, "w", encoding="utf-8") as f_out:
            f_out.write(f_in.read())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocebench", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate the synthetic dataset")
    p.add_argument("--config", default=None, help="dataset config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preprocess", help="raw phase -> maps and CNN volumes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("velocity", help="wavefront velocity per sample -> CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--preproc", required=True, help="preprocess output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_velocity)

    p = sub.add_parser("train", help="train one CNN on one fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--work", required=True, help="stage directory (created if needed)")
    p.add_argument("--model", required=True)
    p.add_argument("--fold", type=int, required=True)
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="full leave-one-concentration-out protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models", default="all")
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--work", default=None, help="stage directory (default: <out dir>/work)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render a report JSON")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", default="table", choices=["table", "csv", "json"])
    p.add_argument("--plot", default=None, help="write the velocity-vs-concentration CSV here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except OcebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
