import numpy as np
import pytest

from voxtop.models.Domain import (
    DesignDomain,
    Load,
    ProblemSpec,
    build_domain,
    distribute_load,
    fixed_dofs_for_case,
    fixed_node_grid,
    force_vector,
    nodal_force_grid,
)
from voxtop.utils.Errors import DomainError


def test_reference_domain_counts():
    domain = build_domain(24, 12, 12, 2.0, 1.0, 1.0)
    assert domain.element_count == 3456
    assert domain.node_count == 25 * 13 * 13
    assert domain.dof_count == 3 * 25 * 13 * 13
    assert domain.h == pytest.approx(1 / 12)


def test_non_cubic_rejected():
    with pytest.raises(DomainError):
        build_domain(24, 12, 12, 2.0, 1.0, 2.0)


@pytest.mark.parametrize("dims", [(0, 1, 1), (2, -1, 1)])
def test_bad_counts_rejected(dims):
    with pytest.raises(DomainError):
        build_domain(*dims, 1.0, 1.0, 1.0)


def test_node_numbering_x_fastest(tiny_domain):
    assert tiny_domain.node_index(1, 0, 0) == 1
    assert tiny_domain.node_index(0, 1, 0) == tiny_domain.nx + 1
    assert tiny_domain.node_index(0, 0, 1) == (tiny_domain.nx + 1) * (tiny_domain.ny + 1)


def test_element_dofs_layout(tiny_domain):
    edof = tiny_domain.element_dofs
    assert edof.shape == (tiny_domain.element_count, 24)
    # First element's first node is the origin
    assert list(edof[0, :3]) == [0, 1, 2]
    # Second element is its +x neighbor
    assert tiny_domain.element_nodes[1, 0] == 1


def test_element_centers(tiny_domain):
    centers = tiny_domain.element_centers
    np.testing.assert_allclose(centers[0], [0.25, 0.25, 0.25])
    np.testing.assert_allclose(centers[1], [0.75, 0.25, 0.25])


def test_domain_json_round_trip(small_domain):
    assert DesignDomain.fromJSON(small_domain.toJSON()) == small_domain


@pytest.mark.parametrize(
    "bc_case, expected",
    [
        (1, lambda ny, nz: 3 * (ny + 1) * (nz + 1)),
        (2, lambda ny, nz: 3 * (ny + 1) + 2 * (ny + 1)),
        (3, lambda ny, nz: 2 * 2 * (ny + 1) + 1),
        (4, lambda ny, nz: 5 * (ny + 1) * (nz + 1)),
    ],
)
def test_fixed_dof_counts(small_domain, bc_case, expected):
    dofs = fixed_dofs_for_case(bc_case, small_domain)
    assert len(dofs.fixed_dofs) == expected(small_domain.ny, small_domain.nz)
    assert dofs.free_dof_count + len(dofs.fixed_dofs) == small_domain.dof_count
    assert len(np.intersect1d(dofs.free_dofs, dofs.fixed_dofs)) == 0


def test_case_two_rollers_leave_x_free(small_domain):
    dofs = fixed_dofs_for_case(2, small_domain)
    fixed = fixed_node_grid(dofs, small_domain)
    # Bottom line at x = lx is fixed in y and z only
    assert not fixed[-1, :, 0, 0].any()
    assert fixed[-1, :, 0, 1:].all()
    assert fixed[0, :, 0, :].all()
    # Nothing above the bottom is fixed
    assert not fixed[:, :, 1:, :].any()


def test_invalid_bc_case(small_domain):
    with pytest.raises(DomainError):
        fixed_dofs_for_case(5, small_domain)


def test_load_validation():
    with pytest.raises(DomainError):
        Load(face="w+", position=(1.0, 0.5, 0.5), direction=(1.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        Load(face="x+", position=(0.5, 0.5, 0.5), direction=(1.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        Load(face="x+", position=(1.0, 0.5, 0.5), direction=(1.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        Load(face="x+", position=(1.0, 0.5, 0.5), direction=(1.0, 0.0, 0.0), magnitude=2.0)


def test_anchor_snapping(small_domain):
    load = Load(face="y-", position=(0.4, 0.0, 0.3), direction=(1.0, 0.0, 0.0))
    # floor(0.4 * 6 + 0.5) = 2, floor(0.3 * 4 + 0.5) = 1
    assert load.anchor_node(small_domain) == (2, 0, 1)


def test_distribute_face_center_load(small_domain, tip_load):
    nodal = distribute_load(tip_load, small_domain)
    # Anchor on the x+ face has 5 in-grid neighbors within one edge: itself, -x, +-y, +-z
    assert len(nodal.nodes) == 6
    np.testing.assert_allclose(nodal.values.sum(axis=0), tip_load.force)


def test_distribute_corner_load(small_domain):
    load = Load(face="x-", position=(0.0, 0.0, 0.0), direction=(0.0, 1.0, 0.0))
    nodal = distribute_load(load, small_domain)
    assert len(nodal.nodes) == 4
    np.testing.assert_allclose(nodal.values.sum(axis=0), [0.0, 1.0, 0.0])


@pytest.mark.parametrize(
    "dims, expected", [((24, 12, 12, 2.0, 1.0, 1.0), 507), ((1, 1, 1, 1.0, 1.0, 1.0), 12)]
)
def test_cantilever_fixed_dof_count(dims, expected):
    assert len(fixed_dofs_for_case(1, build_domain(*dims)).fixed_dofs) == expected


@pytest.mark.parametrize(
    "position, count",
    [((1.0, 0.5, 0.5), 6), ((1.0, 0.0, 0.5), 5), ((1.0, 0.0, 0.0), 4)],
)
def test_recipients_match_distance_scan(position, count):
    domain = build_domain(24, 12, 12, 2.0, 1.0, 1.0)
    load = Load(face="x+", position=position, direction=(0.0, 0.0, 1.0), magnitude=1.0)
    anchor = np.array(position) * np.array([domain.lx, domain.ly, domain.lz])
    dist = np.linalg.norm(domain.node_coordinates - anchor[None, :], axis=1)
    expected = np.nonzero(dist <= domain.h * (1 + 1e-9))[0]

    nodal = distribute_load(load, domain)
    np.testing.assert_array_equal(nodal.nodes, expected)
    assert len(nodal.nodes) == count


@pytest.mark.parametrize(
    "face, base, step, stride",
    [
        ("z+", (12, 6, 12), (1, 0, 0), 1),
        ("z+", (12, 6, 12), (0, 1, 0), 25),
        ("x+", (24, 6, 6), (0, 0, 1), 25 * 13),
        ("x+", (24, 6, 6), (0, -1, 0), -25),
    ],
)
def test_distribution_follows_anchor(face, base, step, stride):
    domain = build_domain(24, 12, 12, 2.0, 1.0, 1.0)

    def load_at(node):
        position = tuple(float(n) / c for n, c in zip(node, domain.shape))
        return Load(face=face, position=position, direction=(1.0, 0.0, 0.0), magnitude=1.0)

    moved = tuple(b + s for b, s in zip(base, step))
    nodes = distribute_load(load_at(base), domain).nodes
    shifted = distribute_load(load_at(moved), domain)
    np.testing.assert_array_equal(shifted.nodes, nodes + stride)
    np.testing.assert_allclose(shifted.values.sum(axis=0), (1.0, 0.0, 0.0))



def test_force_vector_superposes(small_domain, tip_load):
    other = Load(face="z+", position=(0.5, 0.25, 1.0), direction=(0.6, 0.8, 0.0), magnitude=1.0)
    f = force_vector((tip_load, other), small_domain).reshape(-1, 3)
    np.testing.assert_allclose(f.sum(axis=0), tip_load.force + other.force, atol=1e-12)

    grid = nodal_force_grid((tip_load, other), small_domain)
    assert grid.shape == small_domain.node_shape + (3,)
    np.testing.assert_allclose(grid.sum(axis=(0, 1, 2)), f.sum(axis=0))


def test_problem_round_trip(tmp_path, small_problem):
    path = tmp_path / "problem.json"
    small_problem.save(path)
    assert ProblemSpec.load(path) == small_problem


def test_problem_validation(small_domain, tip_load):
    with pytest.raises(DomainError):
        ProblemSpec(domain=small_domain, volume_fraction=0.3, loads=(), bc_case=1)
    with pytest.raises(DomainError):
        ProblemSpec(domain=small_domain, volume_fraction=0.3, loads=(tip_load,) * 11, bc_case=1)
    with pytest.raises(DomainError):
        ProblemSpec(domain=small_domain, volume_fraction=0.3, loads=(tip_load,), bc_case=0)


@pytest.mark.parametrize("vf", [0.0, 0.05, 0.51, 0.95])
def test_volume_fraction_outside_clamp(small_domain, tip_load, vf):
    with pytest.raises(DomainError):
        ProblemSpec(domain=small_domain, volume_fraction=vf, loads=(tip_load,), bc_case=1)


def test_volume_fraction_clamp_edges(small_domain, tip_load):
    for vf in (0.07, 0.5):
        assert ProblemSpec(domain=small_domain, volume_fraction=vf, loads=(tip_load,), bc_case=1)
