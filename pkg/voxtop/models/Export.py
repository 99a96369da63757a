import csv
import struct
import typing
from pathlib import Path

import numpy as np

from voxtop.utils.Constants import Formats
from voxtop.utils.Errors import BadMagicError, TruncatedFileError, VersionMismatchError

# magic, version, nx, ny, nz, count
HEADER = struct.Struct("<8sIIIIQ")


def write_header(fID, magic: bytes, version: int, shape: typing.Sequence[int], count: int):
    fID.write(HEADER.pack(magic, version, *shape, count))


def read_header(
    fID, magic: bytes, version: int
) -> typing.Tuple[typing.Tuple[int, int, int], int]:
    """
    Read & validate a 32-byte voxtop header, returning (shape, count)
    """
    raw = fID.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TruncatedFileError(f"File header truncated: {len(raw)} of {HEADER.size} bytes")

    filemagic, fileversion, nx, ny, nz, count = HEADER.unpack(raw)
    if filemagic != magic:
        raise BadMagicError(f"Bad magic: '{filemagic!r}', expected '{magic!r}'")
    if fileversion != version:
        raise VersionMismatchError(f"Unsupported format version {fileversion}, expected {version}")

    return (nx, ny, nz), count


def read_exact(fID, nbytes: int, what: str) -> bytes:
    raw = fID.read(nbytes)
    if len(raw) != nbytes:
        raise TruncatedFileError(f"Truncated payload in {what}: {len(raw)} of {nbytes} bytes")
    return raw


def write_fields(path: Path, fields: typing.Sequence[np.ndarray]):
    """
    Write a stack of equally shaped 3D fields as little-endian float64, x-fastest
    """
    shape = fields[0].shape if fields else (0, 0, 0)
    with Path(path).open(mode="wb") as fID:
        write_header(fID, Formats.field_magic, Formats.field_version, shape, len(fields))
        for f in fields:
            fID.write(np.ravel(f, order="F").astype("<f8").tobytes())


def read_fields(path: Path) -> typing.List[np.ndarray]:
    with Path(path).open(mode="rb") as fID:
        shape, count = read_header(fID, Formats.field_magic, Formats.field_version)
        n = shape[0] * shape[1] * shape[2]
        return [
            np.frombuffer(read_exact(fID, 8 * n, f"field {i}"), dtype="<f8")
            .astype(float)
            .reshape(shape, order="F")
            for i in range(count)
        ]


def write_csv(path: Path, header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence]):
    """
    Write rows to CSV; floats use repr so values round-trip exactly
    """
    with Path(path).open(mode="w", newline="") as fID:
        writer = csv.writer(fID)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(value):
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def read_csv(path: Path) -> typing.List[typing.Dict[str, str]]:
    with Path(path).open(mode="r", newline="") as fID:
        return list(csv.DictReader(fID))


def write_vtk(
    path: Path,
    field: np.ndarray,
    spacing: float = 1.0,
    name: str = "density",
    title: str = "voxtop density field",
):
    """
    Write a cell-centered scalar field as a legacy ASCII VTK structured-points file
    """
    nx, ny, nz = field.shape
    values = np.ravel(field, order="F")
    with Path(path).open(mode="w") as fID:
        fID.write("# vtk DataFile Version 3.0\n")
        fID.write(f"{title}\n")
        fID.write("ASCII\n")
        fID.write("DATASET STRUCTURED_POINTS\n")
        fID.write(f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}\n")
        fID.write("ORIGIN 0 0 0\n")
        fID.write(f"SPACING {spacing!r} {spacing!r} {spacing!r}\n")
        fID.write(f"CELL_DATA {values.size}\n")
        fID.write(f"SCALARS {name} float 1\n")
        fID.write("LOOKUP_TABLE default\n")
        for start in range(0, values.size, 9):
            fID.write(" ".join(f"{v:.9g}" for v in values[start : start + 9]) + "\n")
