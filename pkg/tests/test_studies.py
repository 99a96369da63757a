import numpy as np
import pytest

from conftest import synthetic_trace
from voxtop.models import Export
from voxtop.models.Dataset import make_record
from voxtop.models.Network import TrainConfig, init_parameters, reference_config
from voxtop.models.ProcessMap import Cutoff, cutoff_iteration
from voxtop.models.SIMP import FilterKernel, SIMPConfig
from voxtop.models.Studies import (
    DEFAULT_SUBSETS,
    HybridResult,
    ablation_study,
    detect_cutoff,
    hybrid_run,
    iteration_grid,
    strategy_comparison,
    subset_label,
    write_hybrid,
    write_study,
)

TINY = TrainConfig(epochs=1, seed=0)


def records_for(trace, count=4):
    return [make_record(trace, min(trace.T, 2 + i), 1) for i in range(count)]


def hybrid_result(cutoff, solver_ms=30.0, inference_ms=10.0, full_ms=100.0):
    field = np.zeros((2, 2, 2))
    return HybridResult(
        seed=1,
        cutoff=cutoff,
        n=0,
        solver_ms=solver_ms,
        inference_ms=inference_ms,
        full_ms=full_ms,
        prediction=field,
        binary_prediction=field.astype(np.uint8),
        ground_truth=field,
        binary=0.9,
        rms=0.8,
        T=10,
    )


def test_default_subsets():
    assert len(DEFAULT_SUBSETS) == 7
    assert ("density", "gradient") in DEFAULT_SUBSETS
    assert DEFAULT_SUBSETS[-1] == ("density", "gradient", "boundary")
    assert subset_label(("density", "boundary")) == "density+boundary"


def test_speedup_formula():
    result = hybrid_result(Cutoff(4, True))
    assert result.speedup == pytest.approx(0.6)
    assert not result.fallback


def test_fallback_has_no_speedup():
    result = hybrid_result(Cutoff(10, False), solver_ms=100.0)
    assert result.fallback
    assert result.speedup == 0.0


def test_ablation_rows(fake_trace):
    records = records_for(fake_trace)
    subsets = [("density",), ("boundary",), ("density", "gradient")]
    rows = ablation_study(records, records[:2], subsets, TINY, width=4)
    assert [r.label for r in rows] == ["density", "boundary", "density+gradient"]
    for r in rows:
        assert 0.0 <= r.test.binary <= 1.0
        assert r.test.samples == 2
        assert r.train.samples == 4


def test_ablation_with_augmentation(fake_trace):
    records = records_for(fake_trace)
    rows = ablation_study(records, records, [("density",)], TINY, width=4, augment=True)
    # Reported on the unaugmented records
    assert rows[0].train.samples == 4


def test_ablation_rejects_empty_subset(fake_trace):
    records = records_for(fake_trace)
    with pytest.raises(ValueError):
        ablation_study(records, records, [()], TINY, width=4)


def test_study_csv(tmp_path, fake_trace):
    records = records_for(fake_trace)
    rows = ablation_study(records, records, [("gradient",)], TINY, width=4)
    write_study(tmp_path / "ablation.csv", rows)
    table = Export.read_csv(tmp_path / "ablation.csv")
    assert table[0]["label"] == "gradient"
    assert int(table[0]["test_samples"]) == 4


def test_iteration_grid_marks_absent_cells(small_problem):
    traces = [synthetic_trace(small_problem, T=8, seed=s) for s in range(2)]
    params = init_parameters(reference_config(width=4), seed=0)
    m_list, n_list = [2, 4, 6], [0, 2, 4]
    binary, rms = iteration_grid(traces, params, m_list, n_list)
    assert binary.shape == rms.shape == (3, 3)
    absent = np.array([[n >= m for n in n_list] for m in m_list])
    assert np.all(np.isnan(binary[absent]))
    assert np.all(np.isnan(rms[absent]))
    assert np.all((binary[~absent] >= 0) & (binary[~absent] <= 1))


def test_iteration_grid_skips_rows_past_trace_end(small_problem):
    traces = [synthetic_trace(small_problem, T=T, seed=T) for T in (6, 9)]
    params = init_parameters(reference_config(width=4), seed=0)
    binary, rms = iteration_grid(traces, params, [3, 6, 10, 20], [0])
    assert np.all(np.isfinite(binary[:2])) and np.all(np.isfinite(rms[:2]))
    # m = 10 and m = 20 are past the end of the T = 6 trace
    assert np.all(np.isnan(binary[2:])) and np.all(np.isnan(rms[2:]))


def test_strategy_comparison(fake_trace):
    records = records_for(fake_trace)
    requested = []

    def build(strategy):
        requested.append(strategy)
        return records

    reports = strategy_comparison(["uniform", "poisson30"], build, records[:2], TINY, width=4)
    assert requested == ["uniform", "poisson30"]
    assert list(reports) == ["uniform", "poisson30"]
    assert reports["poisson30"].label == "poisson30"
    assert reports["uniform"].samples == 2


@pytest.mark.parametrize("tau", [0.0, 0.05, 1e6])
def test_detect_cutoff_matches_cutoff_iteration(solved_trace, tau):
    domain = solved_trace.problem.domain
    kernel = FilterKernel(domain, SIMPConfig().rmin * domain.h)
    cutoff, ms = detect_cutoff(solved_trace, kernel, tau)
    assert cutoff == cutoff_iteration(solved_trace, kernel, tau)
    assert ms >= 0.0


def test_hybrid_run(solved_trace):
    params = init_parameters(reference_config(width=4), seed=0)
    problem = solved_trace.problem
    result = hybrid_run(problem, params, tau=1e6, gap=5, trace=solved_trace)
    # A huge tolerance triggers at the first iteration
    assert result.cutoff == Cutoff(1, True)
    assert result.n == 0
    assert result.full_ms == pytest.approx(solved_trace.elapsed_ms(solved_trace.T))
    assert result.solver_ms >= solved_trace.elapsed_ms(1)
    assert result.prediction.shape == problem.domain.shape
    assert set(np.unique(result.binary_prediction)) <= {0, 1}
    assert 0.0 <= result.binary <= 1.0


def test_hybrid_fallback(solved_trace):
    params = init_parameters(reference_config(width=4), seed=0)
    result = hybrid_run(solved_trace.problem, params, tau=0.0, trace=solved_trace)
    assert result.fallback
    assert result.speedup == 0.0
    assert result.binary == 1.0
    assert np.array_equal(result.prediction, solved_trace.final)


def test_hybrid_rejects_bad_gap(solved_trace):
    params = init_parameters(reference_config(width=4), seed=0)
    with pytest.raises(ValueError):
        hybrid_run(solved_trace.problem, params, gap=0, trace=solved_trace)


def test_hybrid_runs_solver(small_problem):
    params = init_parameters(reference_config(width=4), seed=0)
    result = hybrid_run(small_problem, params, tau=1e6, simp_config=SIMPConfig(max_iter=3))
    assert result.T <= 3
    assert result.cutoff.iteration == 1


def test_write_hybrid_mean_row(tmp_path):
    results = [hybrid_result(Cutoff(4, True)), hybrid_result(Cutoff(10, False), solver_ms=100.0)]
    write_hybrid(tmp_path / "hybrid.csv", results)
    rows = Export.read_csv(tmp_path / "hybrid.csv")
    assert len(rows) == 3
    assert rows[-1]["seed"] == "mean"
    assert float(rows[-1]["speedup"]) == pytest.approx(0.3)
    assert float(rows[-1]["fallback"]) == pytest.approx(0.5)