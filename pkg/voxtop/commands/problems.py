import argparse
import json
import logging
from pathlib import Path

from voxtop.models import Export
from voxtop.models.Domain import ProblemSpec
from voxtop.models.ProcessMap import (
    aggregate_curves,
    binary_accuracy_curve,
    cutoff_from_curve,
    gradient_norm_curve,
    normalize_curve,
    spatial_gradient_curve,
)
from voxtop.models.Sampler import sample_batch, write_batch
from voxtop.models.SIMP import FilterKernel, IterationTrace, run_simp
from voxtop.utils.Config import RunConfig
from voxtop.utils.Helpers import require_path


def sample(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Sample a seeded batch of problems into <out>/problems
    """
    problems = sample_batch(config.seed, args.count, config.domain.build(), config.sampler)
    write_batch(problems, args.out / "problems")
    return config


def solve(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Run SIMP on a saved ProblemSpec; writes the trace directory plus a VTK of the final field
    """
    problem = ProblemSpec.load(require_path(args.problem, "problem spec"))
    trace = run_simp(problem, config.simp_config())
    trace.save(args.out / "trace")
    Export.write_vtk(args.out / "final.vtk", trace.final, spacing=problem.domain.h)
    print(f"Solved seed {problem.seed}: T={trace.T}, converged={trace.converged}")
    return config


def map_process(args: argparse.Namespace, config: RunConfig) -> RunConfig:
    """
    Process-mapping curves & the cutoff iteration for one or more saved traces
    """
    config = config.override("process", tau=args.tau, threshold=args.threshold)
    tau, threshold = config.process.tau, config.process.threshold

    curves = {"binary_accuracy": [], "gradient_norm": [], "spatial_gradient": []}
    cutoffs = {}
    for path in args.traces:
        trace = IterationTrace.load(require_path(path, "trace directory"))
        domain = trace.problem.domain
        kernel = FilterKernel(domain, config.simp.rmin * domain.h)

        outdir = args.out / f"seed_{trace.problem.seed}"
        outdir.mkdir(parents=True, exist_ok=True)
        per_trace = {
            "binary_accuracy": binary_accuracy_curve(trace, threshold),
            "gradient_norm": gradient_norm_curve(trace),
            "spatial_gradient": spatial_gradient_curve(trace, kernel),
        }
        for name, curve in per_trace.items():
            curve.to_csv(outdir / f"{name}.csv")
            normalize_curve(curve).to_csv(outdir / f"{name}_normalized.csv")
            curves[name].append(curve)

        cutoff = cutoff_from_curve(per_trace["spatial_gradient"], tau)
        cutoffs[trace.problem.seed] = {
            "cutoff": cutoff.iteration,
            "reached": cutoff.reached,
            "T": trace.T,
            "progress": cutoff.iteration / trace.T if trace.T else 0.0,
        }
        logging.info(f"Seed {trace.problem.seed}: cutoff {cutoff.iteration}/{trace.T}")

    with (args.out / "cutoff.json").open(mode="w") as fID:
        json.dump({"tau": tau, "traces": cutoffs}, fID, indent=2, sort_keys=True)

    for name, group in curves.items():
        grid, mean, std = aggregate_curves([normalize_curve(c) for c in group])
        Export.write_csv(args.out / f"{name}_aggregate.csv", ("progress", "mean", "std"), zip(grid, mean, std))

    return config


def setup(subparsers, parent: argparse.ArgumentParser):
    p = subparsers.add_parser("sample", parents=[parent], help="Sample random problem specs")
    p.add_argument("--count", type=int, default=1, help="Number of problems")
    p.set_defaults(handler=sample)

    p = subparsers.add_parser("solve", parents=[parent], help="Run SIMP on a problem spec")
    p.add_argument("problem", type=Path, help="ProblemSpec JSON file")
    p.set_defaults(handler=solve)

    p = subparsers.add_parser(
        "map-process", parents=[parent], help="Process-mapping curves and cutoff for traces"
    )
    p.add_argument("traces", type=Path, nargs="+", help="Trace directories")
    p.add_argument("--tau", type=float, default=None, help="Cutoff threshold")
    p.add_argument("--threshold", type=float, default=None, help="Binarization threshold")
    p.set_defaults(handler=map_process)
