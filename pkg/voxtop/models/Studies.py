import itertools
import logging
import time
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from voxtop.models import Export
from voxtop.models.Dataset import (
    SampleRecord,
    augment_records,
    channel_indices,
    fixed_pair_records,
    make_record,
)
from voxtop.models.Domain import ProblemSpec
from voxtop.models.Metrics import MetricReport, binary_accuracy, rms_accuracy
from voxtop.models.Network import (
    NetworkParameters,
    TrainConfig,
    evaluate,
    predict,
    reference_config,
    train,
)
from voxtop.models.ProcessMap import Cutoff, scan_cutoff
from voxtop.models.SIMP import FilterKernel, IterationTrace, SIMPConfig, run_simp
from voxtop.utils.Constants import Augment, Channels, Process

GROUP_ORDER = tuple(Channels.groups)

# Every non-empty combination of channel groups: singles, pairs, then all three
DEFAULT_SUBSETS = tuple(
    combo for size in (1, 2, 3) for combo in itertools.combinations(GROUP_ORDER, size)
)


def subset_label(subset: typing.Sequence[str]) -> str:
    return "+".join(subset)


@dataclass(frozen=True)
class StudyRow:
    label: str
    train: MetricReport
    test: MetricReport

    def row(self) -> tuple:
        return (
            self.label,
            self.train.binary,
            self.train.rms,
            self.test.binary,
            self.test.rms,
            self.test.samples,
        )


STUDY_HEADER = ("label", "train_binary", "train_rms", "test_binary", "test_rms", "test_samples")


def write_study(path: Path, rows: typing.Sequence[StudyRow]):
    Export.write_csv(path, STUDY_HEADER, (r.row() for r in rows))


def ablation_study(
    train_records: typing.Sequence[SampleRecord],
    test_records: typing.Sequence[SampleRecord],
    subsets: typing.Sequence[typing.Sequence[str]] = DEFAULT_SUBSETS,
    train_config: TrainConfig = TrainConfig(),
    width: int = 16,
    augment: bool = False,
    validation: typing.Optional[typing.Sequence[SampleRecord]] = None,
    progress: bool = False,
) -> typing.List[StudyRow]:
    """
    Train one network per channel subset and evaluate it on the shared test records

    With augment, every network trains on the same rotation-augmented training set. Rows report
    accuracy on the (unaugmented) training records as well as on the test records
    """
    for subset in subsets:
        if not subset:
            raise ValueError("Empty channel subset in ablation study")

    train_set = list(train_records)
    if augment:
        train_set = augment_records(train_set, np.random.default_rng(train_config.seed), Augment.fraction)

    rows = []
    for subset in subsets:
        label = subset_label(subset)
        config = reference_config(channel_indices(subset), width=width)
        logging.info(f"Ablation: training on channels '{label}' ({config.in_channels} inputs)")
        params, _ = train(train_set, config, train_config, validation=validation, progress=progress)
        rows.append(
            StudyRow(
                label=label,
                train=evaluate(params, train_records, train_config.threshold, train_config.eps, label),
                test=evaluate(params, test_records, train_config.threshold, train_config.eps, label),
            )
        )
        logging.info(f"Ablation '{label}': {rows[-1].test}")

    return rows


def iteration_grid(
    traces: typing.Sequence[IterationTrace],
    params: NetworkParameters,
    m_list: typing.Sequence[int],
    n_list: typing.Sequence[int],
    threshold: float = Process.threshold,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Binary & RMS accuracy matrices (rows m, columns n) of the network over traces encoded at
    each (m, n)

    Cells with n >= m are absent (NaN), as are rows whose m exceeds the shortest trace: every
    cell is computed on the same traces at exactly the requested iterations
    """
    if not traces:
        raise ValueError("Iteration grid needs at least one trace")
    shortest = min(t.T for t in traces)
    binary = np.full((len(m_list), len(n_list)), np.nan)
    rms = np.full_like(binary, np.nan)
    for i, m in enumerate(m_list):
        if m > shortest:
            logging.warning(f"Iteration grid: m={m} exceeds the shortest trace (T={shortest}), skipped")
            continue
        for j, n in enumerate(n_list):
            if n >= m:
                continue
            report = evaluate(params, fixed_pair_records(traces, m, n), threshold, label=f"m={m},n={n}")
            binary[i, j] = report.binary
            rms[i, j] = report.rms
            logging.debug(f"Iteration grid m={m}, n={n}: {report}")
    return binary, rms


def write_grid(path: Path, matrix: np.ndarray, m_list, n_list):
    Export.write_csv(
        path,
        ["m"] + [f"n={n}" for n in n_list],
        ([m] + list(row) for m, row in zip(m_list, matrix)),
    )


def strategy_comparison(
    strategies: typing.Sequence[str],
    build_records: typing.Callable[[str], typing.Sequence[SampleRecord]],
    test_records: typing.Sequence[SampleRecord],
    train_config: TrainConfig = TrainConfig(),
    channels: typing.Sequence[int] = tuple(range(Channels.count)),
    width: int = 16,
    progress: bool = False,
) -> typing.Dict[str, MetricReport]:
    """
    Train one network per iteration-sampling strategy on the records build_records(strategy)
    returns, and evaluate every network on the same fixed-pair test records
    """
    reports = {}
    for strategy in strategies:
        records = build_records(strategy)
        params, _ = train(records, reference_config(channels, width), train_config, progress=progress)
        reports[strategy] = evaluate(
            params, test_records, train_config.threshold, train_config.eps, label=strategy
        )
        logging.info(f"Strategy '{strategy}': {reports[strategy]}")
    return reports


def write_reports(path: Path, reports: typing.Iterable[MetricReport]):
    Export.write_csv(
        path,
        ("label", "binary", "rms", "samples", "threshold"),
        ((r.label, r.binary, r.rms, r.samples, r.threshold) for r in reports),
    )


@dataclass(eq=False)
class HybridResult:
    seed: int
    cutoff: Cutoff
    n: int
    solver_ms: float
    inference_ms: float
    full_ms: float
    prediction: np.ndarray
    binary_prediction: np.ndarray
    ground_truth: np.ndarray
    binary: float
    rms: float
    T: int

    @property
    def fallback(self) -> bool:
        return not self.cutoff.reached

    @property
    def speedup(self) -> float:
        """
        1 - (cutoff time + inference time) / full time; 0 for a full-solve fallback
        """
        if self.fallback or self.full_ms <= 0:
            return 0.0
        return 1.0 - (self.solver_ms + self.inference_ms) / self.full_ms

    def row(self) -> tuple:
        return (
            self.seed,
            self.cutoff.iteration,
            self.n,
            self.T,
            int(self.fallback),
            self.solver_ms,
            self.inference_ms,
            self.full_ms,
            self.speedup,
            self.binary,
            self.rms,
        )


HYBRID_HEADER = (
    "seed",
    "cutoff",
    "n",
    "T",
    "fallback",
    "solver_ms",
    "inference_ms",
    "full_ms",
    "speedup",
    "binary",
    "rms",
)


def detect_cutoff(
    trace: IterationTrace, kernel: FilterKernel, tau: float = Process.tau
) -> typing.Tuple[Cutoff, float]:
    """
    Online cutoff scan over the trace, timed

    Returns the cutoff and the milliseconds the scan took, which is what a detector running
    alongside the solver would add to it
    """
    tic = time.perf_counter()
    cutoff = scan_cutoff(trace.fields, kernel, tau)
    return cutoff, 1000 * (time.perf_counter() - tic)


def hybrid_run(
    problem: ProblemSpec,
    params: NetworkParameters,
    tau: float = Process.tau,
    gap: int = Process.gap,
    simp_config: SIMPConfig = SIMPConfig(),
    threshold: float = Process.threshold,
    trace: typing.Optional[IterationTrace] = None,
) -> HybridResult:
    """
    Solver up to the process-mapping cutoff m*, then one network inference at
    (m*, max(0, m* - gap)), compared against the converged solve of the same run

    The cutoff is read from the same trace that supplies the ground truth & full-solve timing.
    When the cutoff never triggers the result falls back to the full solve with zero speedup
    """
    if gap < 1:
        raise ValueError(f"Invalid gradient gap: '{gap}'")

    trace = run_simp(problem, simp_config) if trace is None else trace
    kernel = FilterKernel(problem.domain, simp_config.rmin * problem.domain.h)
    cutoff, detect_ms = detect_cutoff(trace, kernel, tau)
    full_ms = trace.elapsed_ms(trace.T)
    truth = trace.final

    if not cutoff.reached:
        logging.warning(
            f"Hybrid seed {problem.seed}: cutoff tau={tau} never reached in {trace.T} iterations, "
            "falling back to the full solve"
        )
        return HybridResult(
            seed=problem.seed,
            cutoff=cutoff,
            n=trace.T,
            solver_ms=full_ms,
            inference_ms=0.0,
            full_ms=full_ms,
            prediction=truth,
            binary_prediction=(truth >= threshold).astype(np.uint8),
            ground_truth=truth,
            binary=1.0,
            rms=1.0,
            T=trace.T,
        )

    m = cutoff.iteration
    n = max(0, m - gap)
    tic = time.perf_counter()
    record = make_record(trace, m, n)
    density, binary_field = predict(params, record.inputs, threshold)
    inference_ms = 1000 * (time.perf_counter() - tic)

    result = HybridResult(
        seed=problem.seed,
        cutoff=cutoff,
        n=n,
        solver_ms=trace.elapsed_ms(m) + detect_ms,
        inference_ms=inference_ms,
        full_ms=full_ms,
        prediction=density,
        binary_prediction=binary_field,
        ground_truth=truth,
        binary=binary_accuracy(density, truth, threshold),
        rms=rms_accuracy(density, truth),
        T=trace.T,
    )
    logging.info(
        f"Hybrid seed {problem.seed}: cutoff {m}/{trace.T}, speedup {100 * result.speedup:.1f}%, "
        f"binary {100 * result.binary:.2f}%"
    )
    return result


def write_hybrid(path: Path, results: typing.Sequence[HybridResult]):
    """
    One row per problem plus a trailing mean row (seed column 'mean')
    """
    rows = [r.row() for r in results]
    if rows:
        means = np.mean(np.array([row[1:] for row in rows], dtype=float), axis=0)
        rows.append(("mean",) + tuple(float(v) for v in means))
    Export.write_csv(path, HYBRID_HEADER, rows)
