import argparse
import logging
from pathlib import Path

import numpy as np

from voxtop.models import Export
from voxtop.models.Dataset import SPLITS, FIXED_SPLIT, channel_indices, make_record, read_split
from voxtop.models.Metrics import binarize
from voxtop.models.Network import (
    evaluate as evaluate_network,
    load_checkpoint,
    predict as predict_field,
    reference_config,
    save_checkpoint,
    train as train_network,
)
from voxtop.models.SIMP import IterationTrace
from voxtop.models.Studies import write_reports
from voxtop.utils.Config import RunConfig
from voxtop.utils.Errors import MissingInputError
from voxtop.utils.Helpers import parse_list, require_path


def train(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Train the encoder-decoder on a dataset directory; writes network.bin and telemetry CSVs
    """
    config = config.override("network", channels=parse_list(args.channels))
    config = config.override("train", epochs=args.epochs, seed=args.train_seed)
    dataset = require_path(args.dataset, "dataset directory")

    records = read_split(dataset, "train")
    validation = read_split(dataset, "validation") if (dataset / "validation.bin").exists() else None
    net = reference_config(channel_indices(config.network.channels), config.network.width)
    params, telemetry = train_network(records, net, config.train, validation, progress=args.progress)

    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "network.bin", params)
    telemetry.save(args.out)
    return config


def dump_predictions(outdir: Path, predictions, targets, threshold: float, spacing: float = 1.0):
    """
    Float & thresholded predictions and ground truths in the field format, plus a VTK pair
    per sample
    """
    outdir.mkdir(parents=True, exist_ok=True)
    Export.write_fields(outdir / "prediction.bin", predictions)
    Export.write_fields(outdir / "prediction_binary.bin", [binarize(p, threshold) for p in predictions])
    Export.write_fields(outdir / "truth.bin", targets)
    Export.write_fields(outdir / "truth_binary.bin", [binarize(t, threshold) for t in targets])

    vtkdir = outdir / "vtk"
    vtkdir.mkdir(exist_ok=True)
    for i, (p, t) in enumerate(zip(predictions, targets)):
        Export.write_vtk(vtkdir / f"prediction_{i}.vtk", p, spacing, title=f"prediction {i}")
        Export.write_vtk(vtkdir / f"truth_{i}.vtk", t, spacing, title=f"ground truth {i}")


def predict(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Predict converged fields for a dataset split, or for one trace at iterations (m, n)
    """
    config = config.override("process", threshold=args.threshold)
    threshold = config.process.threshold
    params = load_checkpoint(require_path(args.network, "network checkpoint"))

    if args.trace is not None:
        trace = IterationTrace.load(require_path(args.trace, "trace directory"))
        m = trace.T if args.m is None else args.m
        n = max(0, m - config.process.gap) if args.n is None else args.n
        records = [make_record(trace, m, n)]
        spacing = trace.problem.domain.h
    elif args.dataset is not None:
        records = read_split(require_path(args.dataset, "dataset directory"), args.split)
        spacing = 1.0
    else:
        raise MissingInputError("predict needs either --dataset or --trace")

    predictions = [predict_field(params, r.inputs, threshold)[0] for r in records]
    targets = [np.asarray(r.target, dtype=float) for r in records]
    dump_predictions(args.out, predictions, targets, threshold, spacing)
    logging.info(f"Wrote {len(predictions)} prediction(s) to '{args.out}'")
    return config


def evaluate(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Binary & RMS accuracy of a checkpoint on a dataset split, written to metrics.csv
    """
    config = config.override("process", threshold=args.threshold)
    params = load_checkpoint(require_path(args.network, "network checkpoint"))
    records = read_split(require_path(args.dataset, "dataset directory"), args.split)
    report = evaluate_network(
        params, records, config.process.threshold, config.train.eps, label=args.split
    )

    args.out.mkdir(parents=True, exist_ok=True)
    write_reports(args.out / "metrics.csv", [report])
    print(report)
    return config


def setup(subparsers, parent: argparse.ArgumentParser):
    splits = SPLITS + (FIXED_SPLIT,)

    p = subparsers.add_parser("train", parents=[parent], help="Train the surrogate network")
    p.add_argument("dataset", type=Path, help="Dataset directory")
    p.add_argument("--channels", default=None, help="Channel groups, e.g. density,gradient")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--train-seed", type=int, default=None, help="Initialization & shuffle seed")
    p.set_defaults(handler=train)

    p = subparsers.add_parser("predict", parents=[parent], help="Predict converged structures")
    p.add_argument("network", type=Path, help="Network checkpoint")
    p.add_argument("--dataset", type=Path, default=None, help="Dataset directory")
    p.add_argument("--split", choices=splits, default=FIXED_SPLIT)
    p.add_argument("--trace", type=Path, default=None, help="Predict from a trace directory")
    p.add_argument("--m", type=int, default=None, help="Snapshot iteration (default: T)")
    p.add_argument("--n", type=int, default=None, help="Gradient iteration (default: m - gap)")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(handler=predict)

    p = subparsers.add_parser("evaluate", parents=[parent], help="Evaluate a trained network")
    p.add_argument("network", type=Path, help="Network checkpoint")
    p.add_argument("dataset", type=Path, help="Dataset directory")
    p.add_argument("--split", choices=splits, default=FIXED_SPLIT)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(handler=evaluate)
