import numpy as np
import pytest

from oracles import dense_solve, relative_error
from voxtop.models.Domain import Load, build_domain, fixed_dofs_for_case, force_vector
from voxtop.models.FEA import (
    MaterialModel,
    StiffnessOperator,
    assemble_stiffness,
    compliance_and_sensitivity,
    element_stiffness,
    pcg,
    simp_modulus,
    solve_equilibrium,
)
from voxtop.models.Sampler import sample_loads
from voxtop.utils.Errors import ConvergenceError, MaterialError

MATERIAL = MaterialModel()


def test_material_validation():
    with pytest.raises(MaterialError):
        MaterialModel(e0=1.0, e_min=2.0)
    with pytest.raises(MaterialError):
        MaterialModel(nu=0.5)
    with pytest.raises(MaterialError):
        MaterialModel(p=0.5)


def test_simp_modulus_endpoints():
    assert simp_modulus(1.0, MATERIAL) == pytest.approx(1.0)
    assert simp_modulus(0.0, MATERIAL) == pytest.approx(1e-9)
    assert simp_modulus(0.5, MATERIAL) == pytest.approx(1e-9 + (1 - 1e-9) * 0.125)
    with pytest.raises(MaterialError):
        simp_modulus(np.array([0.5, 1.2]), MATERIAL)


def test_element_stiffness_properties():
    KE = element_stiffness(MATERIAL, 0.5)
    assert KE.shape == (24, 24)
    np.testing.assert_allclose(KE, KE.T)

    eig = np.linalg.eigvalsh(KE)
    assert np.sum(np.abs(eig) < 1e-10 * eig.max()) == 6  # rigid-body modes
    assert eig.min() > -1e-10 * eig.max()

    # Rigid translation along x produces no nodal forces
    u = np.tile([1.0, 0.0, 0.0], 8)
    np.testing.assert_allclose(KE @ u, 0.0, atol=1e-12)


def test_element_stiffness_scales_with_h():
    # Hex8 stiffness of a cube scales linearly with edge length
    np.testing.assert_allclose(
        element_stiffness(MATERIAL, 2.0), 2.0 * element_stiffness(MATERIAL, 1.0), atol=1e-12
    )


def test_operator_matches_assembly(small_domain):
    rng = np.random.default_rng(0)
    moduli = simp_modulus(rng.random(small_domain.element_count), MATERIAL)
    KE = element_stiffness(MATERIAL, small_domain.h)
    op = StiffnessOperator(small_domain, moduli, KE)
    K = assemble_stiffness(small_domain, moduli, KE)
    u = rng.standard_normal(small_domain.dof_count)
    np.testing.assert_allclose(op.apply(u), K @ u, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(op.diagonal(), K.diagonal())


@pytest.mark.parametrize("case", range(20))
def test_pcg_matches_dense_solve(case):
    rng = np.random.default_rng(case)
    dims = tuple(int(d) for d in rng.integers(1, 4, size=3))
    n = max(dims)
    domain = build_domain(*dims, dims[0] / n, dims[1] / n, dims[2] / n)
    dofs = fixed_dofs_for_case(1, domain)
    f = force_vector(sample_loads(rng, domain), domain)
    xphys = rng.uniform(0.1, 1.0, domain.element_count)

    u = solve_equilibrium(xphys, f, dofs, domain, MATERIAL, tol=1e-12)
    reference = dense_solve(xphys, f, dofs, domain, MATERIAL)
    if not np.any(f[dofs.free_dofs]):
        assert not np.any(u)
    else:
        assert np.linalg.norm(u - reference) / np.linalg.norm(reference) < 1e-8
    assert not np.any(u[dofs.fixed_dofs])


@pytest.mark.parametrize("bc_case", [1, 2, 3, 4])
def test_supports_remove_rigid_body_modes(small_domain, bc_case):
    dofs = fixed_dofs_for_case(bc_case, small_domain)
    KE = element_stiffness(MATERIAL, small_domain.h)
    K = assemble_stiffness(small_domain, np.ones(small_domain.element_count), KE)
    free = dofs.free_dofs
    eig = np.linalg.eigvalsh(K[free][:, free].toarray())
    assert eig.min() > 1e-8 * eig.max()

    rng = np.random.default_rng(bc_case)
    f = rng.standard_normal(small_domain.dof_count)
    xphys = rng.uniform(0.2, 1.0, small_domain.element_count)
    u = solve_equilibrium(xphys, f, dofs, small_domain, MATERIAL, tol=1e-12)
    reference = dense_solve(xphys, f, dofs, small_domain, MATERIAL)
    assert relative_error(u, reference) < 1e-8


def test_zero_load_gives_zero_displacement(small_domain):
    dofs = fixed_dofs_for_case(1, small_domain)
    u = solve_equilibrium(
        np.full(small_domain.element_count, 0.5), np.zeros(small_domain.dof_count), dofs, small_domain, MATERIAL
    )
    assert not np.any(u)


def test_pcg_iteration_cap_raises(small_domain, tip_load):
    dofs = fixed_dofs_for_case(1, small_domain)
    f = force_vector((tip_load,), small_domain)
    with pytest.raises(ConvergenceError) as err:
        solve_equilibrium(
            np.full(small_domain.element_count, 0.3), f, dofs, small_domain, MATERIAL, tol=1e-14, max_iter=2
        )
    assert len(err.value.residuals) == 3
    assert err.value.residuals[-1] > 1e-14


def test_pcg_solves_spd_system():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((10, 10))
    A = A @ A.T + 10 * np.eye(10)
    b = rng.standard_normal(10)
    x, history = pcg(lambda v: A @ v, b, np.diag(A), 1e-12, 100)
    np.testing.assert_allclose(A @ x, b, atol=1e-9)
    assert history[-1] <= 1e-12


def test_compliance_is_work_of_loads(small_domain, tip_load):
    dofs = fixed_dofs_for_case(1, small_domain)
    f = force_vector((tip_load,), small_domain)
    xphys = np.full(small_domain.element_count, 0.4)
    u = solve_equilibrium(xphys, f, dofs, small_domain, MATERIAL, tol=1e-12)
    c, dc = compliance_and_sensitivity(u, xphys, small_domain, MATERIAL)
    assert c == pytest.approx(f @ u, rel=1e-8)
    assert c > 0
    assert np.all(dc <= 0)


def test_sensitivity_matches_finite_differences():
    domain = build_domain(2, 2, 2, 1.0, 1.0, 1.0)
    dofs = fixed_dofs_for_case(1, domain)
    load = Load(face="x+", position=(1.0, 0.5, 0.5), direction=(0.0, 0.6, 0.8), magnitude=-1.0)
    f = force_vector((load,), domain)
    rng = np.random.default_rng(11)
    xphys = rng.uniform(0.3, 0.9, domain.element_count)

    def compliance(x):
        u = solve_equilibrium(x, f, dofs, domain, MATERIAL, tol=1e-13)
        return compliance_and_sensitivity(u, x, domain, MATERIAL)[0]

    u = solve_equilibrium(xphys, f, dofs, domain, MATERIAL, tol=1e-13)
    _, dc = compliance_and_sensitivity(u, xphys, domain, MATERIAL)

    h = 1e-6
    fd = np.zeros_like(dc)
    for e in range(domain.element_count):
        up, down = xphys.copy(), xphys.copy()
        up[e] += h
        down[e] -= h
        fd[e] = (compliance(up) - compliance(down)) / (2 * h)

    for e in range(domain.element_count):
        assert abs(fd[e] - dc[e]) / abs(dc[e]) < 1e-4
    assert relative_error(fd, dc) < 1e-5
