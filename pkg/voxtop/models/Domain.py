from __future__ import annotations

import json
import math
import typing
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from voxtop.utils.Constants import SamplerDefaults
from voxtop.utils.Errors import DomainError

# Face labels, indexed so that axis = index // 2 and side = index % 2 (0 -> min, 1 -> max)
FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

# Local node offsets of the 8-node hexahedron, counter-clockwise on the bottom then top face
HEX_OFFSETS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=int,
)


@dataclass(frozen=True)
class DesignDomain:
    """
    Regular hexahedral design domain of nx x ny x nz cubic elements

    Elements and nodes are numbered x-fastest, then y, then z. Node (i, j, k) has global index
    i + (nx + 1) * (j + (ny + 1) * k) and owns DOFs 3*index + {0, 1, 2} for x, y, z
    """

    nx: int
    ny: int
    nz: int
    lx: float
    ly: float
    lz: float

    @property
    def h(self) -> float:
        return self.lx / self.nx

    @property
    def shape(self) -> typing.Tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def node_shape(self) -> typing.Tuple[int, int, int]:
        return (self.nx + 1, self.ny + 1, self.nz + 1)

    @property
    def element_count(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def node_count(self) -> int:
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def dof_count(self) -> int:
        return 3 * self.node_count

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    @property
    def element_volume(self) -> float:
        return self.h ** 3

    def node_index(self, i, j, k):
        return i + (self.nx + 1) * (j + (self.ny + 1) * k)

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """
        (element_count, 8) array of global node indices per element, in HEX_OFFSETS order
        """
        ex, ey, ez = np.meshgrid(
            np.arange(self.nx), np.arange(self.ny), np.arange(self.nz), indexing="ij"
        )
        ex, ey, ez = (a.ravel(order="F") for a in (ex, ey, ez))
        return np.stack(
            [self.node_index(ex + di, ey + dj, ez + dk) for di, dj, dk in HEX_OFFSETS],
            axis=1,
        )

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """
        (element_count, 24) array of global DOF indices, node-major then x/y/z
        """
        nodes = self.element_nodes
        return (3 * nodes[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 24)

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        """
        (node_count, 3) array of node positions in meters
        """
        i, j, k = np.meshgrid(
            np.arange(self.nx + 1),
            np.arange(self.ny + 1),
            np.arange(self.nz + 1),
            indexing="ij",
        )
        grid = np.stack([a.ravel(order="F") for a in (i, j, k)], axis=1)
        return grid * self.h

    @cached_property
    def element_centers(self) -> np.ndarray:
        """
        (element_count, 3) array of element centroids in meters
        """
        return self.node_coordinates[self.element_nodes[:, 0]] + 0.5 * self.h

    def toJSON(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "lx": self.lx,
            "ly": self.ly,
            "lz": self.lz,
        }

    @staticmethod
    def fromJSON(inJSON: dict) -> DesignDomain:
        return build_domain(**inJSON)


def build_domain(nx: int, ny: int, nz: int, lx: float, ly: float, lz: float) -> DesignDomain:
    """
    Build a DesignDomain, rejecting anything other than cubic elements
    """
    for name, count in (("nx", nx), ("ny", ny), ("nz", nz)):
        if int(count) != count or count < 1:
            raise DomainError(f"Invalid element count {name}: '{count}', must be an integer >= 1")
    for name, length in (("lx", lx), ("ly", ly), ("lz", lz)):
        if not length > 0:
            raise DomainError(f"Invalid extent {name}: '{length}', must be positive")

    hx, hy, hz = lx / nx, ly / ny, lz / nz
    cubic = math.isclose(hx, hy, rel_tol=0, abs_tol=1e-9) and math.isclose(
        hx, hz, rel_tol=0, abs_tol=1e-9
    )
    if not cubic:
        raise DomainError(
            f"Non-cubic elements requested: edge lengths ({hx:.6g}, {hy:.6g}, {hz:.6g}) m; "
            "only cubic elements are supported"
        )

    return DesignDomain(int(nx), int(ny), int(nz), float(lx), float(ly), float(lz))


@dataclass(frozen=True)
class Load:
    """
    A point load of magnitude +/-1 along a unit direction, anchored on one boundary face

    position holds fractional coordinates in [0, 1] along x, y, z; the coordinate normal to
    the selected face is 0 or 1 by construction
    """

    face: str
    position: typing.Tuple[float, float, float]
    direction: typing.Tuple[float, float, float]
    magnitude: float = 1.0

    def __post_init__(self):
        if self.face not in FACES:
            raise DomainError(f"Invalid load face: '{self.face}', must be one of {FACES}")
        if any(not 0.0 <= p <= 1.0 for p in self.position):
            raise DomainError(f"Load anchor outside the domain: '{self.position}'")
        axis, side = divmod(FACES.index(self.face), 2)
        if self.position[axis] != float(side):
            raise DomainError(
                f"Load anchor {self.position} does not lie on face '{self.face}'"
            )
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise DomainError(f"Load direction is not a unit vector: '{self.direction}'")
        if self.magnitude not in (1.0, -1.0):
            raise DomainError(f"Invalid load magnitude: '{self.magnitude}', must be +1 or -1")

    @property
    def force(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.direction, dtype=float)

    def anchor_node(self, domain: DesignDomain) -> typing.Tuple[int, int, int]:
        """
        Snap the fractional anchor to the nearest grid node, as (i, j, k)
        """
        return tuple(
            int(math.floor(frac * count + 0.5))
            for frac, count in zip(self.position, domain.shape)
        )

    def toJSON(self) -> dict:
        return {
            "face": self.face,
            "position": list(self.position),
            "direction": list(self.direction),
            "magnitude": self.magnitude,
        }

    @staticmethod
    def fromJSON(inJSON: dict) -> Load:
        return Load(
            face=inJSON["face"],
            position=tuple(float(p) for p in inJSON["position"]),
            direction=tuple(float(d) for d in inJSON["direction"]),
            magnitude=float(inJSON["magnitude"]),
        )


@dataclass(frozen=True)
class ProblemSpec:
    """
    One sampled compliance-minimization problem
    """

    domain: DesignDomain
    volume_fraction: float
    loads: typing.Tuple[Load, ...]
    bc_case: int
    seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.loads) <= 10:
            raise DomainError(f"Invalid load count: '{len(self.loads)}', must be in [1, 10]")
        low, high = SamplerDefaults.vf_clamp
        if not low <= self.volume_fraction <= high:
            raise DomainError(
                f"Invalid volume fraction: '{self.volume_fraction}', must be in [{low}, {high}]"
            )
        if self.bc_case not in BC_CASES:
            raise DomainError(f"Invalid constraint case: '{self.bc_case}', must be one of {BC_CASES}")

    def toJSON(self) -> dict:
        return {
            "domain": self.domain.toJSON(),
            "volume_fraction": self.volume_fraction,
            "loads": [load.toJSON() for load in self.loads],
            "bc_case": self.bc_case,
            "seed": self.seed,
        }

    @staticmethod
    def fromJSON(inJSON: dict) -> ProblemSpec:
        return ProblemSpec(
            domain=DesignDomain.fromJSON(inJSON["domain"]),
            volume_fraction=float(inJSON["volume_fraction"]),
            loads=tuple(Load.fromJSON(load) for load in inJSON["loads"]),
            bc_case=int(inJSON["bc_case"]),
            seed=int(inJSON.get("seed", 0)),
        )

    def save(self, path: Path):
        with Path(path).open(mode="w") as fID:
            json.dump(self.toJSON(), fID, indent=2)

    @staticmethod
    def load(path: Path) -> ProblemSpec:
        with Path(path).open(mode="r") as fID:
            return ProblemSpec.fromJSON(json.load(fID))


@dataclass(frozen=True, eq=False)
class DofMap:
    fixed_dofs: np.ndarray
    dof_count: int
    free_dofs: np.ndarray = field(repr=False)

    @property
    def free_dof_count(self) -> int:
        return self.dof_count - len(self.fixed_dofs)

    @property
    def fixed_mask(self) -> np.ndarray:
        """
        Boolean (dof_count,) mask, True at fixed DOFs
        """
        mask = np.zeros(self.dof_count, dtype=bool)
        mask[self.fixed_dofs] = True
        return mask


BC_CASES = (1, 2, 3, 4)


def _plane_nearest(frac: float, count: int) -> int:
    return int(math.floor(frac * count + 0.5))


def fixed_dofs_for_case(bc_case: int, domain: DesignDomain) -> DofMap:
    """
    Return the DofMap for one of the four beam support cases

        1. Cantilever: x=0 face fixed in x, y, z
        2. Simply supported: bottom (z=0) node line at x=0 fixed in x, y, z; bottom line at
           x=lx fixed in y, z
        3. Modified simply supported: bottom lines at the node planes nearest x=lx/4 and
           x=3lx/4 fixed in y, z; node (0, 0, 0) fixed in x
        4. Constrained cantilever: x=0 face fixed in x, y, z; x=lx face fixed in y, z
    """
    if bc_case not in BC_CASES:
        raise DomainError(f"Invalid constraint case: '{bc_case}', must be one of {BC_CASES}")

    nx, ny, nz = domain.shape
    j, k = np.meshgrid(np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    j, k = j.ravel(), k.ravel()
    yline = np.arange(ny + 1)

    def face(i):
        return domain.node_index(i, j, k)

    def bottom_line(i):
        return domain.node_index(i, yline, 0)

    constrained = []  # (node indices, axes)
    if bc_case == 1:
        constrained.append((face(0), (0, 1, 2)))
    elif bc_case == 2:
        constrained.append((bottom_line(0), (0, 1, 2)))
        constrained.append((bottom_line(nx), (1, 2)))
    elif bc_case == 3:
        constrained.append((bottom_line(_plane_nearest(0.25, nx)), (1, 2)))
        constrained.append((bottom_line(_plane_nearest(0.75, nx)), (1, 2)))
        constrained.append((np.array([domain.node_index(0, 0, 0)]), (0,)))
    else:
        constrained.append((face(0), (0, 1, 2)))
        constrained.append((face(nx), (1, 2)))

    fixed = np.unique(
        np.concatenate([3 * nodes[:, None] + np.array(axes)[None, :] for nodes, axes in constrained], axis=None)
    )
    free = np.setdiff1d(np.arange(domain.dof_count), fixed)
    return DofMap(fixed_dofs=fixed, dof_count=domain.dof_count, free_dofs=free)


@dataclass(frozen=True, eq=False)
class NodalForces:
    """
    Sparse nodal force field: global node indices and their (k, 3) force vectors
    """

    nodes: np.ndarray
    values: np.ndarray


def distribute_load(load: Load, domain: DesignDomain) -> NodalForces:
    """
    Spread a load in equal shares over every node within one element edge of its anchor node

    With the anchor on the boundary, the recipient set is the grid-node content of a
    hemisphere of radius h. The componentwise sum of the shares is magnitude * direction
    """
    anchor = np.array(load.anchor_node(domain))
    offsets = np.array(
        [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)
         if a * a + b * b + c * c <= 1]
    )
    candidates = anchor[None, :] + offsets
    upper = np.array(domain.shape)
    inside = np.all((candidates >= 0) & (candidates <= upper[None, :]), axis=1)
    recipients = candidates[inside]

    nodes = np.sort(domain.node_index(recipients[:, 0], recipients[:, 1], recipients[:, 2]))
    share = load.force / len(nodes)
    return NodalForces(nodes=nodes, values=np.tile(share, (len(nodes), 1)))


def force_vector(loads: typing.Iterable[Load], domain: DesignDomain) -> np.ndarray:
    """
    Superpose loads into one global (dof_count,) force vector
    """
    f = np.zeros(domain.dof_count)
    for load in loads:
        nodal = distribute_load(load, domain)
        for axis in range(3):
            np.add.at(f, 3 * nodal.nodes + axis, nodal.values[:, axis])
    return f


def nodal_force_grid(loads: typing.Iterable[Load], domain: DesignDomain) -> np.ndarray:
    """
    Return the superposed nodal forces as an (nx+1, ny+1, nz+1, 3) array
    """
    f = force_vector(loads, domain).reshape(-1, 3)
    return np.stack([np.reshape(f[:, a], domain.node_shape, order="F") for a in range(3)], axis=-1)


def fixed_node_grid(dofs: DofMap, domain: DesignDomain) -> np.ndarray:
    """
    Return the fixed-DOF mask as an (nx+1, ny+1, nz+1, 3) boolean array
    """
    mask = dofs.fixed_mask.reshape(-1, 3)
    return np.stack(
        [np.reshape(mask[:, a], domain.node_shape, order="F") for a in range(3)], axis=-1
    )
