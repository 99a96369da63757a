import typing
from dataclasses import asdict, dataclass

import numpy as np

from voxtop.utils.Constants import Process


def _check_shapes(pred: np.ndarray, target: np.ndarray):
    if np.shape(pred) != np.shape(target):
        raise ValueError(
            f"Shape mismatch: prediction {np.shape(pred)} vs target {np.shape(target)}"
        )


def binarize(field: np.ndarray, threshold: float = Process.threshold) -> np.ndarray:
    """
    Threshold a density field; values equal to the threshold count as solid
    """
    return (np.asarray(field) >= threshold).astype(np.uint8)


def binary_accuracy(pred, target, threshold: float = Process.threshold) -> float:
    """
    Fraction of voxels whose thresholded classes agree: (w00 + w11) / (n0 + n1)
    """
    _check_shapes(pred, target)
    return float(np.mean(binarize(pred, threshold) == binarize(target, threshold)))


def rms_accuracy(pred, target) -> float:
    """
    1 - sqrt(mean((target - pred)**2)) over the float densities
    """
    _check_shapes(pred, target)
    diff = np.asarray(target, dtype=float) - np.asarray(pred, dtype=float)
    return float(1.0 - np.sqrt(np.mean(diff * diff)))


@dataclass(frozen=True)
class MetricReport:
    binary: float
    rms: float
    samples: int
    threshold: float = Process.threshold
    label: str = ""

    def __repr__(self):
        return (
            f"MetricReport({self.label}): binary {100 * self.binary:.2f}%, "
            f"RMS {100 * self.rms:.2f}%, n={self.samples}"
        )

    def row(self) -> dict:
        return asdict(self)


def evaluate_pairs(
    pairs: typing.Iterable[typing.Tuple[np.ndarray, np.ndarray]],
    threshold: float = Process.threshold,
    label: str = "",
) -> MetricReport:
    """
    Average per-sample binary and RMS accuracy over (prediction, target) pairs
    """
    binary, rms = [], []
    for pred, target in pairs:
        binary.append(binary_accuracy(pred, target, threshold))
        rms.append(rms_accuracy(pred, target))

    if not binary:
        raise ValueError("No samples to evaluate")

    return MetricReport(
        binary=float(np.mean(binary)),
        rms=float(np.mean(rms)),
        samples=len(binary),
        threshold=threshold,
        label=label,
    )
