"""Command-line entry point: generate -> fuse -> train -> evaluate -> report.

Subcommands:

* ``gen-data``: write a synthetic multi-annotator dataset and its manifest.
* ``fuse``: fuse each case's annotations into a soft label + variance raster.
* ``train``: train the tiny network on fused soft labels, writing a
  checkpoint, a per-epoch history CSV, and a history figure.
* ``eval``: sweep predictions against fused ground truth across confidence
  thresholds and compute the energy distance against the raw annotations at
  the 50% threshold; writes CSV/JSON reports plus rendered figures.

Exit codes: 0 success, 1 runtime/IO failure, 2 usage error. Every
subcommand is deterministic given its flags and ``--seed``, which is echoed
into all output metadata. ``SOFTSEG_THREADS`` caps evaluation parallelism.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import dataio, figures
from .masks import SoftMask, fuse_mean, threshold, variance_map
from .metrics import DEFAULT_THRESHOLDS, ged_squared_deterministic, threshold_sweep
from .synth import SynthConfig, generate_synthetic
from .train import Sample, SplitDataset, TrainConfig, TrainingDiverged, predict, train
from .unet import TinyUNetConfig


def parse_thresholds(spec: str) -> list[float]:
    """Parse ``start:stop:step`` into thresholds inclusive of both ends."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"thresholds must look like start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"thresholds must be numeric, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"need step > 0 and stop >= start, got {spec!r}")
    count = int(round((stop - start) / step)) + 1
    taus = [round(start + i * step, 10) for i in range(count)]
    taus = [t for t in taus if t <= stop + 1e-12]
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ValueError(f"threshold {tau} outside (0, 1) in {spec!r}")
    return taus


def _load_samples(manifest, records) -> list[Sample]:
    samples = []
    for case in records:
        image, annotations = dataio.load_case(manifest, case)
        samples.append(
            Sample(case_id=case.case_id, image=image, label=fuse_mean(annotations).values)
        )
    return samples


def _eval_workers() -> int:
    env = os.environ.get("SOFTSEG_THREADS", "")
    if env.strip():
        workers = int(env)
        if workers < 1:
            raise ValueError(f"SOFTSEG_THREADS must be >= 1, got {env!r}")
        return workers
    return os.cpu_count() or 1


def cmd_gen_data(args) -> int:
    config = SynthConfig(
        size=args.size,
        cases=args.cases,
        annotators=args.annotators,
        shape_family=args.shape_family,
        boundary_noise=args.boundary_noise,
        annotator_bias=args.annotator_bias,
        seed=args.seed,
    )
    manifest_path = generate_synthetic(config, args.out)
    print(manifest_path)
    return 0


def cmd_fuse(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    out_dir = Path(args.out)
    for case in manifest.cases:
        _, annotations = dataio.load_case(manifest, case)
        fused = fuse_mean(annotations)
        dataio.write_raster(out_dir / f"{case.case_id}_fused.sseg", fused.values)
        dataio.write_raster(out_dir / f"{case.case_id}_variance.sseg", variance_map(fused))
    print(out_dir)
    return 0


def cmd_train(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    dataset = SplitDataset(
        train=tuple(_load_samples(manifest, manifest.split("train"))),
        val=tuple(_load_samples(manifest, manifest.split("val"))),
    )
    model_config = TinyUNetConfig(
        input_channels=1, base_channels=args.base_channels, depth=args.depth
    )
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        loss=args.loss,
        augment=not args.no_augment,
        vflip_prob=args.vflip_prob,
        lr_start=args.lr_start,
        lr_end=args.lr_end,
    )
    params, history = train(dataset, model_config, train_config)

    out = Path(args.out)
    ckpt.save_checkpoint(
        out,
        params,
        sidecar={
            "model": model_config.to_dict(),
            "train": train_config.to_dict(),
            "seed": args.seed,
        },
    )
    history_rows = ["epoch,lr,train_loss,val_dsc_mean,val_dsc_std"]
    for h in history:
        history_rows.append(
            f"{h.epoch},{h.lr:.10g},{h.train_loss:.10g},"
            f"{h.val_dsc_mean:.10g},{h.val_dsc_std:.10g}"
        )
    history_path = Path(str(out) + ".history.csv")
    dataio.atomic_write_bytes(history_path, ("\n".join(history_rows) + "\n").encode())
    if not args.no_figures:
        figures.render_history_figure(
            history, Path(str(out) + ".history.png"), loss_name=args.loss
        )
    print(out)
    return 0


def _eval_case(task):
    manifest, case, model_config, params, thresholds = task
    image, annotations = dataio.load_case(manifest, case)
    fused = fuse_mean(annotations)
    probs = predict(model_config, params, image)
    sweep = threshold_sweep(probs, fused, thresholds)
    ged = ged_squared_deterministic(annotations, threshold(probs, 0.5))
    return case.case_id, sweep, ged


def cmd_eval(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    records = manifest.split(args.split)
    if len(records) == 0:
        raise ValueError(f"manifest has no cases in split {args.split!r}")
    params, sidecar = ckpt.load_checkpoint(args.checkpoint)
    try:
        model_config = TinyUNetConfig.from_dict(sidecar["model"])
    except (KeyError, TypeError) as exc:
        raise ValueError(
            f"checkpoint sidecar {ckpt.sidecar_path(args.checkpoint)} lacks a "
            f"valid model config: {exc}"
        ) from None
    thresholds = parse_thresholds(args.thresholds)

    tasks = [(manifest, case, model_config, params, thresholds) for case in records]
    workers = _eval_workers()
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_case, tasks))
    else:
        results = [_eval_case(t) for t in tasks]

    case_rows = [(case_id, list(sweep.rows)) for case_id, sweep, _ in results]
    ged_reports = [(case_id, ged) for case_id, _, ged in results]
    for case_id, report in ged_reports:
        residual = abs(report.d2_ged - (2.0 * report.expected_distance - report.diversity))
        if residual > 1e-12:
            raise AssertionError(
                f"GED identity violated for case {case_id}: residual {residual}"
            )

    out_dir = Path(args.out)
    written = dataio.write_report(
        out_dir,
        case_rows,
        ged_reports,
        metadata={
            "seed": args.seed,
            "checkpoint": Path(args.checkpoint).name,
            "manifest": Path(args.manifest).name,
            "split": args.split,
            "thresholds": thresholds,
            "ged_threshold": 0.5,
        },
    )
    if not args.no_figures:
        figures.render_sweep_figure(case_rows, out_dir / "sweep_metrics.png")
        figures.render_ged_figure(ged_reports, out_dir / "ged_decomposition.png")
    print(written["report_json"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softseg",
        description="Soft-label fusion, calibrated evaluation, and the toy trainer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multi-annotator dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--cases", type=int, default=48)
    p.add_argument("--annotators", type=int, default=5)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape-family", choices=("ellipse", "blob"), default="ellipse")
    p.add_argument("--boundary-noise", type=float, default=0.05)
    p.add_argument("--annotator-bias", type=float, default=0.06)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fuse", help="fuse annotations into soft label + variance rasters")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", help="train the tiny network on fused soft labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--loss", choices=("ce", "dice"), default="ce")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--lr-start", type=float, default=1e-2)
    p.add_argument("--lr-end", type=float, default=1e-4)
    p.add_argument("--vflip-prob", type=float, default=0.5)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="threshold-sweep and energy-distance evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--thresholds", default="0.1:0.9:0.1")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"softseg: training diverged: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, AssertionError) as exc:
        print(f"softseg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
