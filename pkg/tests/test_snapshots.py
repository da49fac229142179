"""Tests for the binary snapshot format."""

import io
import struct

import numpy as np
import pytest

from nematic_electrolyte.fields import Grid, ScalarField, TensorField, VectorField
from nematic_electrolyte.snapshots import (
    MAGIC,
    SnapshotFormatError,
    encode_record,
    iter_records,
    read_snapshot,
    snapshot_path,
    write_snapshot,
)


class TestSnapshots:
    def test_record_layout(self, grid):
        field = ScalarField.constant(grid, 1.5)
        data = encode_record("c_p", field, 0.25)
        assert data[:4] == MAGIC
        (length,) = struct.unpack("<I", data[4:8])
        assert length == 3
        assert data[8:11] == b"c_p"
        dim, points, components, time = struct.unpack("<IIId", data[11:31])
        assert (dim, points, components, time) == (2, 32, 1, 0.25)
        assert len(data) == 31 + 8 * 32**2
        assert np.frombuffer(data[31:39], dtype="<f8")[0] == 1.5

    def test_file_preserves_every_field(self, tmp_path, rng):
        grid = Grid(dim=3, points_per_axis=8)
        fields = [
            ("phi", ScalarField(grid, rng.standard_normal(grid.shape))),
            ("v", VectorField(grid, rng.standard_normal((3,) + grid.shape))),
            ("stress", TensorField(grid, rng.standard_normal((3, 3) + grid.shape))),
        ]
        path = write_snapshot(snapshot_path(tmp_path, 12), fields, 0.5)
        assert path.name == "snapshot_000012.bin"
        records = read_snapshot(path)
        assert list(records) == ["phi", "v", "stress"]
        for name, field in fields:
            assert records[name].time == 0.5
            assert type(records[name].field) is type(field)
            np.testing.assert_array_equal(records[name].field.physical, field.physical)

    def test_truncated_stream(self, grid):
        data = encode_record("n", VectorField.zeros(grid), 0.0)
        with pytest.raises(SnapshotFormatError, match="Truncated"):
            list(iter_records(io.BytesIO(data[:-8])))

    def test_bad_magic(self, grid):
        data = encode_record("n", VectorField.zeros(grid), 0.0)
        with pytest.raises(SnapshotFormatError, match="magic"):
            list(iter_records(io.BytesIO(b"XXXX" + data[4:])))
