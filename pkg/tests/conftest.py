import numpy as np
import pytest

from voxtop.models.Domain import Load, ProblemSpec, build_domain
from voxtop.models.SIMP import IterationTrace, SIMPConfig, run_simp


@pytest.fixture
def tiny_domain():
    return build_domain(4, 2, 2, 2.0, 1.0, 1.0)


@pytest.fixture
def small_domain():
    return build_domain(6, 4, 4, 1.5, 1.0, 1.0)


@pytest.fixture
def tip_load():
    # Downward load at the middle of the free end
    return Load(face="x+", position=(1.0, 0.5, 0.5), direction=(0.0, 0.0, 1.0), magnitude=-1.0)


@pytest.fixture
def small_problem(small_domain, tip_load):
    return ProblemSpec(
        domain=small_domain, volume_fraction=0.3, loads=(tip_load,), bc_case=1, seed=7
    )


@pytest.fixture(scope="session")
def solved_trace():
    """
    A real SIMP trace on a 6 x 4 x 4 cantilever, shared across the session
    """
    domain = build_domain(6, 4, 4, 1.5, 1.0, 1.0)
    load = Load(face="x+", position=(1.0, 0.5, 0.5), direction=(0.0, 0.0, 1.0), magnitude=-1.0)
    problem = ProblemSpec(domain=domain, volume_fraction=0.3, loads=(load,), bc_case=1, seed=7)
    return run_simp(problem, SIMPConfig(max_iter=40))


def synthetic_trace(problem: ProblemSpec, T: int = 6, seed: int = 0) -> IterationTrace:
    """
    Trace with random fields in [0, 1], without running the solver
    """
    rng = np.random.default_rng(seed)
    trace = IterationTrace(problem=problem)
    shape = problem.domain.shape
    for t in range(T + 1):
        field = rng.random(shape)
        trace.fields.append(field)
        trace.designs.append(field)
        trace.compliance.append(1.0 / (t + 1))
        trace.change.append(0.0 if t == 0 else 0.1)
        trace.wall_ms.append(1.0)
    return trace


@pytest.fixture
def fake_trace(small_problem):
    return synthetic_trace(small_problem)
