"""Raw binary snapshots of simulation fields.

A snapshot file is a sequence of field records. Each record is laid out as
(all integers unsigned 32-bit, all floats IEEE-754 64-bit, little-endian):

    offset  size  content
    0       4     magic b"NSNP"
    4       4     L, byte length of the field name
    8       L     field name, UTF-8
    8+L     4     dim
    12+L    4     N (points per axis)
    16+L    4     C, number of components (1 scalar, dim vector, dim*dim tensor)
    20+L    8     time
    28+L    8*C*N**dim   values, row-major: component index first, then axes
                         x1, x2[, x3] with the last axis varying fastest

Records follow each other with no padding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .fields import Field, Grid, ScalarField, TensorField, VectorField

MAGIC = b"NSNP"
_COUNTS = struct.Struct("<I")
_HEADER = struct.Struct("<IIId")


class SnapshotFormatError(ValueError):
    """Raised when a snapshot stream is truncated or malformed."""


@dataclass(frozen=True)
class SnapshotRecord:
    name: str
    time: float
    field: Field


def encode_record(name: str, field: Field, time: float) -> bytes:
    grid = field.grid
    encoded_name = name.encode("utf-8")
    components = grid.dim**field.rank
    values = np.ascontiguousarray(field.physical, dtype="<f8")
    return b"".join(
        (
            MAGIC,
            _COUNTS.pack(len(encoded_name)),
            encoded_name,
            _HEADER.pack(grid.dim, grid.points_per_axis, components, float(time)),
            values.tobytes(order="C"),
        )
    )


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise SnapshotFormatError(f"Truncated snapshot: wanted {size} bytes, got {len(data)}.")
    return data


def _field_for(grid: Grid, components: int, values: np.ndarray) -> Field:
    if components == 1:
        return ScalarField(grid, values.reshape(grid.shape))
    if components == grid.dim:
        return VectorField(grid, values.reshape((grid.dim,) + grid.shape))
    if components == grid.dim**2:
        return TensorField(grid, values.reshape((grid.dim, grid.dim) + grid.shape))
    raise SnapshotFormatError(f"Unsupported component count {components}.")


def iter_records(stream: BinaryIO) -> Iterator[SnapshotRecord]:
    while True:
        magic = stream.read(len(MAGIC))
        if not magic:
            return
        if magic != MAGIC:
            raise SnapshotFormatError(f"Bad record magic {magic!r}.")
        (name_length,) = _COUNTS.unpack(_read_exact(stream, _COUNTS.size))
        name = _read_exact(stream, name_length).decode("utf-8")
        dim, points, components, time = _HEADER.unpack(_read_exact(stream, _HEADER.size))
        try:
            grid = Grid(dim=dim, points_per_axis=points)
        except ValueError as exc:
            raise SnapshotFormatError(str(exc)) from exc
        count = components * points**dim
        values = np.frombuffer(_read_exact(stream, 8 * count), dtype="<f8").astype(float)
        yield SnapshotRecord(name=name, time=time, field=_field_for(grid, components, values))


def write_snapshot(path: Path, named_fields: Iterable[tuple[str, Field]], time: float) -> Path:
    """Write every (name, field) pair to ``path`` as consecutive records."""

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        for name, field in named_fields:
            handle.write(encode_record(name, field, time))
    return path


def read_snapshot(path: Path) -> dict[str, SnapshotRecord]:
    with path.open("rb") as handle:
        return {record.name: record for record in iter_records(handle)}


def snapshot_path(directory: Path, step: int) -> Path:
    return directory / f"snapshot_{step:06d}.bin"
