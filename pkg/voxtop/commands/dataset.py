import argparse
import logging
import typing
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from tqdm import tqdm

from voxtop.models.Dataset import (
    FIXED_SPLIT,
    augment_records,
    build_records,
    fixed_pair_records,
    split_dataset,
    write_dataset,
    write_records,
)
from voxtop.models.Domain import DesignDomain
from voxtop.models.Sampler import SamplerConfig, sample_problem
from voxtop.models.SIMP import IterationTrace, SIMPConfig, run_simp, save_traces
from voxtop.utils.Config import RunConfig
from voxtop.utils.Constants import Augment
from voxtop.utils.Helpers import resolve_threads


def solve_seed(
    seed: int, domain: DesignDomain, sampler: SamplerConfig, simp: SIMPConfig
) -> IterationTrace:
    return run_simp(sample_problem(seed, domain, sampler), simp)


def solve_seeds(
    seeds: typing.Sequence[int],
    domain: DesignDomain,
    sampler: SamplerConfig,
    simp: SIMPConfig,
    threads: int = 1,
    progress: bool = False,
) -> typing.List[IterationTrace]:
    """
    Solve one sampled problem per seed, fanned out over worker processes; results keep seed order
    """
    args = [(s, domain, sampler, simp) for s in seeds]
    if threads <= 1:
        return [solve_seed(*a) for a in tqdm(args, desc="solving", disable=not progress)]

    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(solve_seed, *a) for a in args]
        return [f.result() for f in tqdm(futures, desc="solving", disable=not progress)]


def build_dataset(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Sample & solve problems, encode records, split them and write the dataset directory
    """
    config = config.override(
        "dataset", strategy=args.strategy, problems=args.problems, augment=args.augment or None
    )
    settings = config.dataset
    threads = resolve_threads(args.threads)
    seeds = config.dataset_seeds()
    logging.info(
        f"Building dataset: {len(seeds)} problem(s) from seed {config.seed}, "
        f"strategy '{settings.strategy}', {threads} worker(s)"
    )

    traces = solve_seeds(
        seeds, config.domain.build(), config.sampler, config.simp_config(), threads, args.progress
    )
    if args.keep_traces:
        save_traces(traces, args.out / "traces")

    rng = np.random.default_rng(config.seed)
    records = build_records(traces, settings.strategy, rng, settings.pairs_per_trace)
    manifest = split_dataset(records, config.seed, settings.strategy)
    if settings.augment:
        # Rotated copies go to the training split only
        train = augment_records([records[i] for i in manifest.train], rng, Augment.fraction)
        extra = train[len(manifest.train) :]
        manifest.train = manifest.train + list(range(len(records), len(records) + len(extra)))
        manifest.seeds = manifest.seeds + [int(r.seed) for r in extra]
        manifest.count = len(records) + len(extra)
        records = records + extra
    write_dataset(args.out, records, manifest)

    test_seeds = {records[i].seed for i in manifest.test}
    test_traces = [t for t in traces if t.problem.seed in test_seeds]
    write_records(
        args.out / f"{FIXED_SPLIT}.bin",
        fixed_pair_records(test_traces, config.process.test_m, config.process.test_n),
    )
    return config


def setup(subparsers, parent: argparse.ArgumentParser):
    p = subparsers.add_parser(
        "build-dataset", parents=[parent], help="Generate, encode and split a training dataset"
    )
    p.add_argument("--strategy", default=None, help="Iteration-sampling strategy")
    p.add_argument("--problems", type=int, default=None, help="Number of problems to solve")
    p.add_argument("--augment", action="store_true", help="Add rotated training copies")
    p.add_argument("--keep-traces", action="store_true", help="Also save every solver trace")
    p.set_defaults(handler=build_dataset)
