import argparse
import logging
from pathlib import Path

import numpy as np

from voxtop.commands.network import dump_predictions
from voxtop.models.Dataset import (
    FIXED_SPLIT,
    build_records,
    channel_indices,
    fixed_pair_records,
    read_split,
)
from voxtop.models.Network import load_checkpoint
from voxtop.models.Sampler import sample_batch
from voxtop.models.SIMP import load_traces
from voxtop.models.Studies import (
    DEFAULT_SUBSETS,
    ablation_study,
    hybrid_run,
    iteration_grid,
    strategy_comparison,
    write_grid,
    write_hybrid,
    write_reports,
    write_study,
)
from voxtop.utils.Config import RunConfig
from voxtop.utils.Errors import ConfigError, MissingInputError
from voxtop.utils.Helpers import parse_list, require_path


def parse_subsets(text):
    """
    Semicolon-separated channel subsets, each a comma-separated list of groups:
    "density;gradient;density,gradient"
    """
    if text is None:
        return DEFAULT_SUBSETS
    subsets = tuple(parse_list(chunk) for chunk in text.split(";"))
    for subset in subsets:
        try:
            channel_indices(subset)
        except ValueError as e:
            raise ConfigError(f"Invalid channel subset '{','.join(subset)}': {e}")
    return subsets


def ablate(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Channel ablation on a dataset directory, or a strategy comparison over saved traces
    """
    config = config.override("train", epochs=args.epochs)
    args.out.mkdir(parents=True, exist_ok=True)

    if args.strategies is not None:
        if args.traces is None:
            raise MissingInputError("A strategy comparison needs --traces")
        traces = load_traces(require_path(args.traces, "trace directory"))
        if len(traces) < 3:
            raise MissingInputError(f"Need at least 3 traces under '{args.traces}', found {len(traces)}")

        # Train on the first 5/6 of the traces, test on the rest at the fixed protocol pair
        ntest = max(1, len(traces) // 6)
        train_traces, test_traces = traces[:-ntest], traces[-ntest:]
        test = fixed_pair_records(test_traces, config.process.test_m, config.process.test_n)

        def build(strategy):
            rng = np.random.default_rng(config.seed)
            return build_records(train_traces, strategy, rng, config.dataset.pairs_per_trace)

        reports = strategy_comparison(
            parse_list(args.strategies),
            build,
            test,
            config.train,
            channel_indices(config.network.channels),
            config.network.width,
            args.progress,
        )
        write_reports(args.out / "strategies.csv", reports.values())
        return config

    if args.dataset is None:
        raise MissingInputError("ablate needs a dataset directory or --strategies with --traces")
    dataset = require_path(args.dataset, "dataset directory")
    split = FIXED_SPLIT if (dataset / f"{FIXED_SPLIT}.bin").exists() else "test"
    rows = ablation_study(
        read_split(dataset, "train"),
        read_split(dataset, split),
        parse_subsets(args.subsets),
        config.train,
        config.network.width,
        augment=args.augment,
        progress=args.progress,
    )
    write_study(args.out / ("ablation_augmented.csv" if args.augment else "ablation.csv"), rows)
    return config


def grid(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Accuracy of a trained network over a grid of (m, n) encodings of saved traces
    """
    config = config.override("process", grid_m=parse_list(args.m, int), grid_n=parse_list(args.n, int))
    params = load_checkpoint(require_path(args.network, "network checkpoint"))
    traces = load_traces(require_path(args.traces, "trace directory"))
    if not traces:
        raise MissingInputError(f"No traces found under '{args.traces}'")

    m_list, n_list = config.process.grid_m, config.process.grid_n
    binary, rms = iteration_grid(traces, params, m_list, n_list, config.process.threshold)
    args.out.mkdir(parents=True, exist_ok=True)
    write_grid(args.out / "grid_binary.csv", binary, m_list, n_list)
    write_grid(args.out / "grid_rms.csv", rms, m_list, n_list)
    return config


def hybrid(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Solver-to-network hybrid runs over freshly sampled problems; writes hybrid.csv
    """
    config = config.override("process", tau=args.tau, gap=args.gap)
    config = config.override("hybrid", problems=args.problems)
    params = load_checkpoint(require_path(args.network, "network checkpoint"))
    problems = sample_batch(
        config.hybrid_seed(), config.hybrid.problems, config.domain.build(), config.sampler
    )

    results = []
    for problem in problems:
        result = hybrid_run(
            problem,
            params,
            config.process.tau,
            config.process.gap,
            config.simp_config(),
            config.process.threshold,
        )
        results.append(result)
        dump_predictions(
            args.out / f"seed_{problem.seed}",
            [result.prediction],
            [result.ground_truth],
            config.process.threshold,
            problem.domain.h,
        )

    write_hybrid(args.out / "hybrid.csv", results)
    mean_speedup = float(np.mean([r.speedup for r in results]))
    logging.info(f"Hybrid mean speedup over {len(results)} problem(s): {100 * mean_speedup:.1f}%")
    print(f"Mean speedup: {100 * mean_speedup:.1f}% over {len(results)} problem(s)")
    return config


def setup(subparsers, parent: argparse.ArgumentParser):
    p = subparsers.add_parser("ablate", parents=[parent], help="Channel ablation or strategy study")
    p.add_argument("dataset", type=Path, nargs="?", default=None, help="Dataset directory")
    p.add_argument("--subsets", default=None, help="e.g. 'density;gradient;density,gradient'")
    p.add_argument("--augment", action="store_true", help="Train on rotation-augmented data")
    p.add_argument("--strategies", default=None, help="e.g. poisson5,poisson30")
    p.add_argument("--traces", type=Path, default=None, help="Trace directory for --strategies")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(handler=ablate)

    p = subparsers.add_parser("grid", parents=[parent], help="Iteration-pair accuracy grid")
    p.add_argument("network", type=Path, help="Network checkpoint")
    p.add_argument("traces", type=Path, help="Directory of saved traces")
    p.add_argument("--m", default=None, help="Comma-separated snapshot iterations")
    p.add_argument("--n", default=None, help="Comma-separated gradient iterations")
    p.set_defaults(handler=grid)

    p = subparsers.add_parser("hybrid", parents=[parent], help="Timed solver-to-network runs")
    p.add_argument("network", type=Path, help="Network checkpoint")
    p.add_argument("--tau", type=float, default=None, help="Cutoff threshold")
    p.add_argument("--gap", type=int, default=None, help="Gradient gap m - n")
    p.add_argument("--problems", type=int, default=None, help="Number of sampled problems")
    p.set_defaults(handler=hybrid)
