from __future__ import annotations

import json
import logging
import struct
import typing
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from voxtop.models import Export
from voxtop.models.Domain import (
    ProblemSpec,
    fixed_dofs_for_case,
    fixed_node_grid,
    nodal_force_grid,
)
from voxtop.models.SIMP import IterationTrace
from voxtop.utils.Constants import Augment, Channels, Formats, Strategies
from voxtop.utils.Errors import RecordInvariantError, TruncatedFileError
from voxtop.utils.Helpers import require_path, truncated_poisson

# seed, m, n, T, rotation code, padding
RECORD_META = struct.Struct("<QIIIi8x")

SPLITS = ("train", "validation", "test")

# Test traces re-encoded at the fixed protocol pair (m, n), written alongside the splits
FIXED_SPLIT = "test_fixed"


def _corner_views(grid: np.ndarray, shape: typing.Tuple[int, int, int]):
    nx, ny, nz = shape
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                yield grid[di : di + nx, dj : dj + ny, dk : dk + nz]


def surface_mask(shape: typing.Tuple[int, int, int]) -> np.ndarray:
    """
    Boolean (nx, ny, nz) mask of voxels with at least one face on the domain boundary
    """
    mask = np.zeros(shape, dtype=bool)
    mask[0, :, :] = mask[-1, :, :] = True
    mask[:, 0, :] = mask[:, -1, :] = True
    mask[:, :, 0] = mask[:, :, -1] = True
    return mask


def encode_boundary(
    forces: np.ndarray, fixed: np.ndarray, shape: typing.Tuple[int, int, int]
) -> np.ndarray:
    """
    Encode nodal forces & fixities as six voxel channels

    forces is (nx+1, ny+1, nz+1, 3) and fixed the matching boolean array. Force channels hold
    the mean of the 8 corner-node components; a constraint channel is 1 where any corner is
    fixed along that axis, -1 on unconstrained surface voxels and 0 elsewhere
    """
    out = np.zeros((6,) + tuple(shape))
    surface = surface_mask(shape)
    for axis in range(3):
        out[axis] = 0.125 * sum(_corner_views(forces[..., axis], shape))
        constrained = np.any(np.stack(list(_corner_views(fixed[..., axis], shape))), axis=0)
        out[3 + axis] = np.where(constrained, 1.0, np.where(surface, -1.0, 0.0))
    return out


def problem_boundary(problem: ProblemSpec) -> np.ndarray:
    domain = problem.domain
    dofs = fixed_dofs_for_case(problem.bc_case, domain)
    return encode_boundary(
        nodal_force_grid(problem.loads, domain), fixed_node_grid(dofs, domain), domain.shape
    )


def encode_channels(
    trace: IterationTrace,
    m: int,
    n: int,
    problem: typing.Optional[ProblemSpec] = None,
    boundary: typing.Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Build the 8-channel (8, nx, ny, nz) float32 input for iterates m > n

    Channels: density at m, density(m) - density(n), voxel forces x/y/z, constraints x/y/z.
    A precomputed boundary block (from problem_boundary) may be passed to skip re-encoding
    """
    if not 0 <= n < m <= trace.T:
        raise RecordInvariantError(
            f"Invalid iteration pair (m={m}, n={n}) for a trace with T={trace.T}; "
            "need 0 <= n < m <= T"
        )

    problem = trace.problem if problem is None else problem
    boundary = problem_boundary(problem) if boundary is None else boundary
    channels = np.concatenate(
        [
            trace.fields[m][None],
            (trace.fields[m] - trace.fields[n])[None],
            boundary,
        ]
    )
    return channels.astype(np.float32)


def validate_channels(inputs: np.ndarray):
    if inputs.ndim != 4 or inputs.shape[0] != Channels.count:
        raise RecordInvariantError(f"Invalid channel tensor shape: '{inputs.shape}'")
    if not np.all(np.isfinite(inputs)):
        raise RecordInvariantError("Channel tensor contains non-finite values")
    if inputs[0].min() < 0 or inputs[0].max() > 1:
        raise RecordInvariantError("Density channel outside [0, 1]")
    if inputs[1].min() < -1 or inputs[1].max() > 1:
        raise RecordInvariantError("Density-gradient channel outside [-1, 1]")
    if not np.all(np.isin(inputs[5:8], (-1.0, 0.0, 1.0))):
        raise RecordInvariantError("Constraint channels must be in {-1, 0, 1}")


def channel_indices(groups: typing.Iterable[str]) -> typing.Tuple[int, ...]:
    """
    Map channel group names (density, gradient, boundary) onto sorted channel indices
    """
    groups = list(groups)
    if not groups:
        raise ValueError("Empty channel subset")
    indices = set()
    for g in groups:
        if g not in Channels.groups:
            raise ValueError(f"Unknown channel group: '{g}', must be one of {tuple(Channels.groups)}")
        indices.update(Channels.groups[g])
    return tuple(sorted(indices))


@dataclass(eq=False)
class SampleRecord:
    inputs: np.ndarray  # (8, nx, ny, nz) float32
    target: np.ndarray  # (nx, ny, nz) float32
    m: int
    n: int
    T: int
    seed: int
    rotation: int = 0

    def __repr__(self):
        return f"SampleRecord: seed {self.seed}, m={self.m}, n={self.n}, T={self.T}"

    @property
    def shape(self) -> typing.Tuple[int, int, int]:
        return self.target.shape

    def validate(self):
        if not 0 <= self.n < self.m <= self.T:
            raise RecordInvariantError(
                f"Invalid iteration indices m={self.m}, n={self.n}, T={self.T}"
            )
        validate_channels(self.inputs)
        if self.inputs.shape[1:] != self.target.shape:
            raise RecordInvariantError("Input and target shapes differ")
        if self.target.min() < 0 or self.target.max() > 1:
            raise RecordInvariantError("Target densities outside [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            (self.m, self.n, self.T, self.seed, self.rotation)
            == (other.m, other.n, other.T, other.seed, other.rotation)
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.target, other.target)
        )


def make_record(
    trace: IterationTrace, m: int, n: int, boundary: typing.Optional[np.ndarray] = None
) -> SampleRecord:
    return SampleRecord(
        inputs=encode_channels(trace, m, n, boundary=boundary),
        target=trace.final.astype(np.float32),
        m=m,
        n=n,
        T=trace.T,
        seed=trace.problem.seed,
    )


def sample_iteration_pair(
    strategy: str, T: int, rng: np.random.Generator
) -> typing.Tuple[int, int]:
    """
    Draw the snapshot iteration m (per strategy, restricted to [1, T-1]) and n uniform in [0, m-1]
    """
    if strategy not in Strategies.means:
        raise ValueError(f"Unknown strategy: '{strategy}', must be one of {tuple(Strategies.means)}")
    if T < 2:
        raise ValueError(f"Trace too short for iteration sampling: T={T}")

    lam = Strategies.means[strategy]
    if lam is None:
        m = int(rng.integers(1, T))
    else:
        m = truncated_poisson(rng, lam, 1, T - 1)
    n = int(rng.integers(0, m))
    return m, n


# code -> rotation matrix; 0 is the identity
ROTATIONS = {
    0: np.eye(3, dtype=int),
    1: np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]]),  # 90 about x
    2: np.array([[1, 0, 0], [0, -1, 0], [0, 0, -1]]),  # 180 about x
    3: np.array([[1, 0, 0], [0, 0, 1], [0, -1, 0]]),  # 270 about x
    4: np.array([[-1, 0, 0], [0, 1, 0], [0, 0, -1]]),  # 180 about y
    5: np.array([[-1, 0, 0], [0, -1, 0], [0, 0, 1]]),  # 180 about z
}


def rotation_code(R: np.ndarray) -> int:
    for code, M in ROTATIONS.items():
        if np.array_equal(M, R):
            return code
    return -1


def shape_preserving(shape: typing.Sequence[int]) -> typing.Tuple[int, ...]:
    """
    Rotation codes (excluding identity) that map a grid of this shape onto itself
    """
    s = np.array(shape)
    return tuple(
        code for code, R in ROTATIONS.items() if code and np.array_equal(np.abs(R) @ s, s)
    )


def rotate_field(F: np.ndarray, R: np.ndarray) -> np.ndarray:
    """
    Rotate a 3D array about its center: G(q) = F(R^T q)
    """
    shape = np.array(F.shape)
    if not np.array_equal(np.abs(R) @ shape, shape):
        raise RecordInvariantError(f"Rotation would change the grid shape {tuple(shape)}")

    c = (shape - 1) / 2.0
    q = np.indices(F.shape).reshape(3, -1) - c[:, None]
    p = np.rint(R.T @ q + c[:, None]).astype(int)
    return F[p[0], p[1], p[2]].reshape(F.shape)


def rotate_vector(components: np.ndarray, R: np.ndarray, signed: bool = True) -> np.ndarray:
    """
    Rotate a (3, ...) stack of per-axis fields: move voxels and mix components by R

    With signed=False, components are permuted by |R| (axis indicators such as fixities)
    """
    M = R if signed else np.abs(R)
    moved = np.stack([rotate_field(c, R) for c in components])
    return np.tensordot(M, moved, axes=(1, 0)).astype(components.dtype)


def rotate_channels(inputs: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [
            np.stack([rotate_field(inputs[0], R), rotate_field(inputs[1], R)]),
            rotate_vector(inputs[2:5], R, signed=True),
            rotate_vector(inputs[5:8], R, signed=False),
        ]
    ).astype(inputs.dtype)


def rotate_record(record: SampleRecord, code: int) -> SampleRecord:
    """
    Apply rotation `code` consistently to all channels and the target
    """
    if code not in ROTATIONS:
        raise ValueError(f"Unknown rotation code: '{code}'")
    R = ROTATIONS[code]
    if code and code not in shape_preserving(record.shape):
        raise RecordInvariantError(
            f"Rotation {code} does not preserve the grid shape {record.shape}"
        )

    previous = ROTATIONS.get(record.rotation)
    composed = rotation_code(R @ previous) if previous is not None else -1
    return replace(
        record,
        inputs=rotate_channels(record.inputs, R),
        target=rotate_field(record.target, R),
        rotation=composed,
    )


def augment_rotate(record: SampleRecord, rng: np.random.Generator) -> SampleRecord:
    """
    Rotate a record by a shape-preserving symmetry drawn uniformly
    """
    codes = shape_preserving(record.shape)
    return rotate_record(record, codes[int(rng.integers(len(codes)))])


def augment_records(
    records: typing.Sequence[SampleRecord],
    rng: np.random.Generator,
    fraction: float = Augment.fraction,
) -> typing.List[SampleRecord]:
    """
    Append a rotated copy of each record selected with probability fraction
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"Invalid augmentation fraction: '{fraction}'")
    rotated = [augment_rotate(r, rng) for r in records if rng.random() < fraction]
    logging.info(f"Augmented {len(records)} record(s) with {len(rotated)} rotated copies")
    return list(records) + rotated


def build_records(
    traces: typing.Sequence[IterationTrace],
    strategy: str,
    rng: np.random.Generator,
    pairs_per_trace: int = 1,
) -> typing.List[SampleRecord]:
    """
    Sample (m, n) pairs from every trace and encode them
    """
    records = []
    for trace in traces:
        if trace.T < 2:
            logging.warning(f"Skipping trace of seed {trace.problem.seed}: too short (T={trace.T})")
            continue
        boundary = problem_boundary(trace.problem)
        for _ in range(pairs_per_trace):
            m, n = sample_iteration_pair(strategy, trace.T, rng)
            records.append(make_record(trace, m, n, boundary=boundary))

    logging.info(
        f"Encoded {len(records)} record(s) from {len(traces)} trace(s) with strategy '{strategy}'"
    )
    return records


def fixed_pair_records(
    traces: typing.Sequence[IterationTrace], m: int, n: int
) -> typing.List[SampleRecord]:
    """
    Encode every trace at a fixed (m, n) pair, as in the common test protocol

    Traces shorter than m are encoded at m' = T and n' = min(n, T - 1)
    """
    records = []
    for trace in traces:
        mm = min(m, trace.T)
        nn = min(n, mm - 1)
        records.append(make_record(trace, mm, nn))
    return records


@dataclass
class DatasetManifest:
    count: int
    train: typing.List[int]
    validation: typing.List[int]
    test: typing.List[int]
    strategy: str = ""
    version: int = Formats.dataset_version
    seed: int = 0
    seeds: typing.List[int] = field(default_factory=list)

    def split(self, name: str) -> typing.List[int]:
        if name not in SPLITS:
            raise ValueError(f"Unknown split: '{name}', must be one of {SPLITS}")
        return getattr(self, name)

    def toJSON(self) -> dict:
        return asdict(self)

    @staticmethod
    def fromJSON(inJSON: dict) -> DatasetManifest:
        return DatasetManifest(**inJSON)


def split_counts(count: int) -> typing.Tuple[int, int, int]:
    """
    75 / 8.33 / 16.67 split: floor for train & validation, remainder to test
    """
    ntrain = (3 * count) // 4
    nval = count // 12
    return ntrain, nval, count - ntrain - nval


def split_dataset(
    records: typing.Sequence[SampleRecord], seed: int, strategy: str = ""
) -> DatasetManifest:
    """
    Deterministic shuffled train / validation / test split by problem

    The unique problem seeds are shuffled and split 75 / 8.33 / 16.67; every record follows
    its problem, so records sharing a target never straddle two splits
    """
    problems = sorted({int(r.seed) for r in records})
    if len(problems) < 3:
        raise ValueError(f"Need at least 3 distinct problems to split, got {len(problems)}")

    order = np.random.default_rng(seed).permutation(len(problems))
    ntrain, nval, _ = split_counts(len(problems))
    assignment = {}
    for rank, idx in enumerate(order):
        assignment[problems[idx]] = 0 if rank < ntrain else (1 if rank < ntrain + nval else 2)

    splits = ([], [], [])
    for i, r in enumerate(records):
        splits[assignment[int(r.seed)]].append(i)

    return DatasetManifest(
        count=len(records),
        train=splits[0],
        validation=splits[1],
        test=splits[2],
        strategy=strategy,
        seed=seed,
        seeds=[int(r.seed) for r in records],
    )


def write_records(path: Path, records: typing.Sequence[SampleRecord]):
    """
    Write records in the TOPO3DDS binary format: 32-byte header, then per record 32 bytes of
    metadata followed by 9 float32 little-endian x-fastest fields (8 inputs + target)
    """
    shape = records[0].shape if records else (0, 0, 0)
    with Path(path).open(mode="wb") as fID:
        Export.write_header(fID, Formats.dataset_magic, Formats.dataset_version, shape, len(records))
        for r in records:
            if r.shape != shape:
                raise RecordInvariantError(f"Record shape {r.shape} differs from {shape}")
            fID.write(RECORD_META.pack(r.seed, r.m, r.n, r.T, r.rotation))
            for channel in r.inputs:
                fID.write(np.ravel(channel, order="F").astype("<f4").tobytes())
            fID.write(np.ravel(r.target, order="F").astype("<f4").tobytes())


def read_records(path: Path) -> typing.List[SampleRecord]:
    """
    Read and re-validate records written by write_records
    """
    with Path(path).open(mode="rb") as fID:
        shape, count = Export.read_header(fID, Formats.dataset_magic, Formats.dataset_version)
        nvox = shape[0] * shape[1] * shape[2]
        records = []
        for i in range(count):
            meta = Export.read_exact(fID, RECORD_META.size, f"record {i} metadata")
            seed, m, n, T, rotation = RECORD_META.unpack(meta)
            payload = Export.read_exact(fID, 9 * nvox * 4, f"record {i} payload")
            data = np.frombuffer(payload, dtype="<f4").astype(np.float32)
            fields = [data[c * nvox : (c + 1) * nvox].reshape(shape, order="F") for c in range(9)]
            record = SampleRecord(
                inputs=np.stack(fields[:8]),
                target=fields[8].copy(),
                m=m,
                n=n,
                T=T,
                seed=seed,
                rotation=rotation,
            )
            record.validate()
            records.append(record)

        if fID.read(1):
            raise TruncatedFileError(f"Trailing bytes after {count} records in '{path}'")

    return records


def write_dataset(outdir: Path, records: typing.Sequence[SampleRecord], manifest: DatasetManifest):
    """
    Write manifest.json plus one binary shard per split
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "manifest.json").open(mode="w") as fID:
        json.dump(manifest.toJSON(), fID, indent=2)
    for name in SPLITS:
        write_records(outdir / f"{name}.bin", [records[i] for i in manifest.split(name)])

    logging.info(
        f"Wrote dataset to '{outdir}': {len(manifest.train)} train, "
        f"{len(manifest.validation)} validation, {len(manifest.test)} test"
    )


def read_manifest(indir: Path) -> DatasetManifest:
    with require_path(Path(indir) / "manifest.json", "dataset manifest").open(mode="r") as fID:
        return DatasetManifest.fromJSON(json.load(fID))


def read_split(indir: Path, name: str) -> typing.List[SampleRecord]:
    if name not in SPLITS + (FIXED_SPLIT,):
        raise ValueError(f"Unknown split: '{name}', must be one of {SPLITS + (FIXED_SPLIT,)}")
    return read_records(require_path(Path(indir) / f"{name}.bin", f"dataset split '{name}'"))
