import numpy as np
import pytest

from voxtop.models.Domain import build_domain
from voxtop.models.SIMP import (
    FilterKernel,
    IterationTrace,
    SIMPConfig,
    density_filter,
    filter_sensitivity,
    load_traces,
    oc_update,
    run_simp,
    save_traces,
)
from voxtop.utils.Errors import ConvergenceError, OptimizerError


@pytest.fixture
def kernel(small_domain):
    return FilterKernel(small_domain, 1.5 * small_domain.h)


def test_filter_weights(kernel, small_domain):
    H = kernel.H.toarray()
    np.testing.assert_allclose(H, H.T)
    # rmin = 1.5 h reaches the 6 face neighbors and 12 edge neighbors
    # Element (2, 1, 1) has a full neighborhood
    e = 2 + 6 * (1 + 4 * 1)
    assert kernel.neighbor_counts[e] == 19
    assert H[e, e] == pytest.approx(1.5 * small_domain.h)


def test_filter_preserves_uniform_fields(kernel, small_domain):
    x = np.full(small_domain.element_count, 0.37)
    np.testing.assert_allclose(density_filter(x, kernel), x)
    field = np.full(small_domain.shape, 0.37)
    np.testing.assert_allclose(density_filter(field, kernel), field)


def test_filter_sensitivity_is_adjoint(kernel, small_domain):
    rng = np.random.default_rng(4)
    x = rng.random(small_domain.element_count)
    dc = rng.standard_normal(small_domain.element_count)
    assert density_filter(x, kernel) @ dc == pytest.approx(x @ filter_sensitivity(dc, kernel))


def test_oc_update_contract(kernel, small_domain):
    rng = np.random.default_rng(5)
    x = rng.uniform(0.1, 0.6, small_domain.element_count)
    dc = -rng.uniform(0.01, 1.0, small_domain.element_count)
    xnew = oc_update(x, dc, 0.3, kernel, move=0.2)
    assert xnew.min() >= 0.0 and xnew.max() <= 1.0
    assert np.max(np.abs(xnew - x)) <= 0.2 + 1e-12
    volume = density_filter(xnew, kernel) @ kernel.volumes
    total = kernel.volumes.sum()
    assert abs(volume - 0.3 * total) <= 1e-4 * total


def test_oc_update_rejects_non_finite(kernel, small_domain):
    dc = np.full(small_domain.element_count, -1.0)
    dc[3] = np.nan
    with pytest.raises(OptimizerError):
        oc_update(np.full(small_domain.element_count, 0.3), dc, 0.3, kernel)


def test_oc_update_unreachable_target(kernel, small_domain):
    # Move limit 0.01 from x = 0.1 cannot reach v0 = 0.9
    x = np.full(small_domain.element_count, 0.1)
    dc = np.full(small_domain.element_count, -1.0)
    with pytest.raises(OptimizerError):
        oc_update(x, dc, 0.9, kernel, move=0.01)


@pytest.mark.parametrize("move, expected", [(0.2, (2 - np.sqrt(2), np.sqrt(2) - 1)), (0.05, (0.55, 0.45))])
def test_oc_update_two_elements(move, expected):
    # rmin below one edge length leaves the filter as the identity
    domain = build_domain(2, 1, 1, 2.0, 1.0, 1.0)
    kernel = FilterKernel(domain, 0.5 * domain.h)
    x = np.array([0.5, 0.5])
    dc = np.array([-2.0, -1.0])
    xnew = oc_update(x, dc, 0.5, kernel, move=move, damping=0.5)

    lams = np.geomspace(1e-2, 1e2, 400001)
    candidates = np.clip(x[None, :] * np.sqrt(-dc[None, :] / lams[:, None]), x - move, x + move)
    best = candidates[np.argmin(np.abs(candidates.mean(axis=1) - 0.5))]
    np.testing.assert_allclose(xnew, best, atol=1e-4)
    np.testing.assert_allclose(xnew, expected, atol=1e-4)


def test_simp_config_validation():
    with pytest.raises(ValueError):
        SIMPConfig(rmin=0)
    with pytest.raises(ValueError):
        SIMPConfig(move=0)
    with pytest.raises(ValueError):
        SIMPConfig(max_iter=0)


def test_trace_structure(solved_trace):
    trace = solved_trace
    problem = trace.problem
    assert len(trace) == trace.T + 1
    assert len(trace.compliance) == len(trace.change) == len(trace.wall_ms) == len(trace)
    assert trace.change[0] == 0.0
    np.testing.assert_allclose(trace.fields[0], problem.volume_fraction)
    assert trace.final is trace.fields[-1]
    if trace.converged:
        assert trace.change[-1] < 0.01


def test_iterates_respect_bounds_and_volume(solved_trace):
    v0 = solved_trace.problem.volume_fraction
    for field, design in zip(solved_trace.fields, solved_trace.designs):
        assert field.shape == solved_trace.problem.domain.shape
        assert design.min() >= 0.0 and design.max() <= 1.0
        # Equal element volumes: the filtered volume is the mean physical density
        assert abs(field.mean() - v0) <= 1e-4


def test_compliance_improves(solved_trace):
    assert solved_trace.compliance[-1] < solved_trace.compliance[1]


def test_simp_is_deterministic(small_problem):
    a = run_simp(small_problem, SIMPConfig(max_iter=5))
    b = run_simp(small_problem, SIMPConfig(max_iter=5))
    assert a.T == b.T
    for fa, fb in zip(a.fields, b.fields):
        assert np.array_equal(fa, fb)
    assert a.compliance == b.compliance


def test_stop_callback(small_problem):
    trace = run_simp(small_problem, SIMPConfig(), stop=lambda t: t.T >= 3)
    assert trace.T == 3
    assert not trace.converged


def test_trace_round_trip(tmp_path, solved_trace):
    solved_trace.save(tmp_path / "trace")
    for name in ("problem.json", "trace.json", "fields.bin", "designs.bin", "compliance.csv", "timing.csv"):
        assert (tmp_path / "trace" / name).exists()

    loaded = IterationTrace.load(tmp_path / "trace")
    assert loaded.problem == solved_trace.problem
    assert loaded.T == solved_trace.T
    assert loaded.converged == solved_trace.converged
    assert loaded.compliance == solved_trace.compliance
    assert loaded.change == solved_trace.change
    for a, b in zip(loaded.fields, solved_trace.fields):
        assert np.array_equal(a, b)


def test_load_traces_orders_by_seed(tmp_path, fake_trace, small_problem):
    from dataclasses import replace

    from conftest import synthetic_trace

    other = synthetic_trace(replace(small_problem, seed=3))
    save_traces([fake_trace, other], tmp_path)
    loaded = load_traces(tmp_path)
    assert [t.problem.seed for t in loaded] == [3, 7]


def test_convergence_error_message():
    err = ConvergenceError("PCG did not converge", residuals=[1.0, 0.5], iteration=12)
    assert "SIMP iteration 12" in str(err)
    assert "5.000e-01" in str(err)


def test_filter_line_by_hand():
    domain = build_domain(3, 1, 1, 3.0, 1.0, 1.0)
    kernel = FilterKernel(domain, 1.5 * domain.h)
    xt = density_filter(np.array([1.0, 0.0, 0.0]), kernel)
    # Weights 1.5 (self) and 0.5 (neighbor)
    assert xt[0] == pytest.approx(0.75)
    assert xt[1] == pytest.approx(0.5 / 2.5)


def test_filter_self_only_is_identity(small_domain):
    kernel = FilterKernel(small_domain, 0.5 * small_domain.h)
    x = np.random.default_rng(2).random(small_domain.element_count)
    np.testing.assert_allclose(density_filter(x, kernel), x)


def test_oc_update_symmetric_step(kernel, small_domain):
    x = np.full(small_domain.element_count, 0.5)
    dc = np.full(small_domain.element_count, -0.3)
    np.testing.assert_allclose(oc_update(x, dc, 0.4, kernel), 0.4, atol=1e-5)
