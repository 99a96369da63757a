import numpy as np
import pytest

from voxtop.models.Metrics import (
    MetricReport,
    binarize,
    binary_accuracy,
    evaluate_pairs,
    rms_accuracy,
)


def test_binary_accuracy_by_hand():
    pred = np.array([0.6, 0.4, 0.7, 0.2])
    target = np.array([1.0, 0.0, 0.0, 0.0])
    assert binary_accuracy(pred, target) == pytest.approx(0.75)


def test_binary_accuracy_extremes():
    field = np.random.default_rng(0).random((4, 3, 2))
    assert binary_accuracy(field, field) == 1.0
    solid = binarize(field)
    assert binary_accuracy(solid, 1 - solid) == 0.0


def test_threshold_counts_as_solid():
    assert np.all(binarize(np.full(5, 0.5)) == 1)
    assert binarize(np.array([0.49]))[0] == 0


def test_rms_accuracy():
    ones = np.ones((2, 2, 2))
    assert rms_accuracy(ones, ones) == 1.0
    assert rms_accuracy(np.zeros((2, 2, 2)), ones) == 0.0
    assert rms_accuracy(np.full((2, 2, 2), 0.5), ones) == pytest.approx(0.5)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        binary_accuracy(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        rms_accuracy(np.zeros(3), np.zeros(4))


def test_evaluate_pairs_averages_per_sample():
    target = np.array([1.0, 0.0, 0.0, 0.0])
    pairs = [(np.array([0.6, 0.4, 0.7, 0.2]), target), (target, target)]
    report = evaluate_pairs(pairs, label="toy")
    assert isinstance(report, MetricReport)
    assert report.samples == 2
    assert report.binary == pytest.approx(0.875)
    assert report.row()["label"] == "toy"
    with pytest.raises(ValueError):
        evaluate_pairs([])
