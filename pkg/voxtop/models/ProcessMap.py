import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from voxtop.models import Export
from voxtop.models.Metrics import binary_accuracy
from voxtop.models.SIMP import FilterKernel, IterationTrace, density_filter
from voxtop.utils.Constants import Process


@dataclass(frozen=True, eq=False)
class ProgressCurve:
    """
    Per-iteration metric values with their progress fractions t / T
    """

    values: np.ndarray
    name: str = "value"

    @property
    def iterations(self) -> np.ndarray:
        return np.arange(len(self.values))

    @property
    def progress(self) -> np.ndarray:
        T = len(self.values) - 1
        return self.iterations / T if T > 0 else np.zeros(1)

    def at_progress(self, fraction: float) -> float:
        """
        Value at the last iteration whose progress does not exceed fraction
        """
        idx = int(np.searchsorted(self.progress, fraction + 1e-12, side="right")) - 1
        return float(self.values[max(idx, 0)])

    def to_csv(self, path: Path):
        Export.write_csv(
            path,
            ("progress", "iteration", "value"),
            zip(self.progress, self.iterations, self.values),
        )

    @staticmethod
    def from_csv(path: Path, name: str = "value"):
        rows = Export.read_csv(path)
        return ProgressCurve(np.array([float(r["value"]) for r in rows]), name=name)


def binary_accuracy_curve(
    trace: IterationTrace, threshold: float = Process.threshold
) -> ProgressCurve:
    """
    Binary accuracy of every iterate against the trace's final field
    """
    final = trace.final
    values = np.array([binary_accuracy(f, final, threshold) for f in trace.fields])
    return ProgressCurve(values, name="binary_accuracy")


def _frobenius_steps(fields: typing.Sequence[np.ndarray]) -> np.ndarray:
    steps = np.array([np.linalg.norm(b - a) for a, b in zip(fields[:-1], fields[1:])])
    return np.concatenate([steps[:1], steps])


def gradient_norm_curve(trace: IterationTrace) -> ProgressCurve:
    """
    Frobenius norm of x(t) - x(t-1); the value at t = 0 repeats t = 1
    """
    if len(trace) < 2:
        raise ValueError("Gradient norm needs a trace of at least 2 iterates")
    return ProgressCurve(_frobenius_steps(trace.fields), name="gradient_norm")


def spatial_map(x: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """
    Deviation of every density from its filtered neighborhood mean: x' = x - filter(x)
    """
    return x - density_filter(x, kernel)


def spatial_gradient_curve(trace: IterationTrace, kernel: FilterKernel) -> ProgressCurve:
    """
    Frobenius norm of the iteration-to-iteration change in spatial maps; t = 0 repeats t = 1
    """
    if len(trace) < 2:
        raise ValueError("Spatial gradient norm needs a trace of at least 2 iterates")
    maps = [spatial_map(f, kernel) for f in trace.fields]
    return ProgressCurve(_frobenius_steps(maps), name="spatial_gradient_norm")


@dataclass(frozen=True)
class Cutoff:
    iteration: int
    reached: bool


def cutoff_from_curve(curve: ProgressCurve, tau: float = Process.tau) -> Cutoff:
    below = np.nonzero(curve.values[1:] <= tau)[0]
    if below.size:
        return Cutoff(iteration=int(below[0]) + 1, reached=True)
    return Cutoff(iteration=len(curve.values) - 1, reached=False)


def scan_cutoff(
    fields: typing.Iterable[np.ndarray], kernel: FilterKernel, tau: float = Process.tau
) -> Cutoff:
    """
    Online cutoff detector: consumes iterates in order and stops at the first t >= 1 whose
    spatial-map change is <= tau, so only two maps are held at a time

    Falls back to the last iterate seen, flagged unreached
    """
    previous = None
    t = -1
    for t, field in enumerate(fields):
        current = spatial_map(field, kernel)
        if previous is not None and np.linalg.norm(current - previous) <= tau:
            return Cutoff(iteration=t, reached=True)
        previous = current
    return Cutoff(iteration=max(t, 0), reached=False)


def cutoff_iteration(
    trace: IterationTrace, kernel: FilterKernel, tau: float = Process.tau
) -> Cutoff:
    """
    First t >= 1 whose spatial gradient norm is <= tau; falls back to T, flagged unreached
    """
    if len(trace) < 2:
        raise ValueError("Cutoff detection needs a trace of at least 2 iterates")
    return scan_cutoff(trace.fields, kernel, tau)


def normalize_curve(curve: ProgressCurve) -> ProgressCurve:
    """
    Rescale a curve to [0, 1] for plotting (min -> 0, max -> 1)
    """
    lo, hi = float(np.min(curve.values)), float(np.max(curve.values))
    scale = hi - lo
    values = np.zeros_like(curve.values) if scale == 0 else (curve.values - lo) / scale
    return ProgressCurve(values, name=f"{curve.name}_normalized")


def aggregate_curves(
    curves: typing.Sequence[ProgressCurve], points: int = 101
) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Resample curves of differing lengths onto a common progress grid

    Returns (grid, mean, std) with linear interpolation in progress
    """
    grid = np.linspace(0.0, 1.0, points)
    stacked = np.stack([np.interp(grid, c.progress, c.values) for c in curves])
    return grid, stacked.mean(axis=0), stacked.std(axis=0)
