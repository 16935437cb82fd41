"""
Tests for snapshot files, diagnostics CSV, summaries and the writing sinks.
"""

import csv
import hashlib

import numpy as np
import pytest

from core.dynamics import run
from core.errors import FormatError
from core.event_handlers import EventProcessor
from core.field import SphereField, constant_field
from core.records import DiagnosticsRow, ExperimentSummary
from core.spectral import SpectralGrid
from services.io_service import (
    HEADER,
    SNAPSHOT_VERSION,
    SNAPSHOT_VERSION_BASE_POINT,
    SnapshotSink,
    TimeseriesSink,
    content_hash,
    read_snapshot,
    read_timeseries,
    write_snapshot,
    write_summary,
    write_timeseries,
)

from .conftest import NORTH


class TestSnapshots:
    """Binary snapshot format"""

    def test_roundtrip(self, small_u2, tmp_path):
        path = write_snapshot(small_u2, 0.125, tmp_path / "u.hllg")
        u, t = read_snapshot(path)
        assert t == 0.125
        assert u.grid == small_u2.grid
        np.testing.assert_array_equal(u.values, small_u2.values)
        np.testing.assert_array_equal(u.base_point, NORTH)

    def test_payload_size(self, tmp_path):
        grid = SpectralGrid.create(1, 512, 16 * np.pi)
        path = write_snapshot(constant_field(grid, NORTH), 0.0, tmp_path / "c.hllg")
        assert path.stat().st_size - HEADER.size == 12288

    def test_components_interleaved_per_node(self, grid1, tmp_path):
        values = np.zeros((3,) + grid1.shape)
        values[2] = 1.0
        values[0, 1] = 0.5
        path = write_snapshot(SphereField(grid1, values), 0.0, tmp_path / "u.hllg")
        payload = np.frombuffer(path.read_bytes()[HEADER.size:], dtype="<f8")
        assert list(payload[:6]) == [0.0, 0.0, 1.0, 0.5, 0.0, 1.0]

    def test_explicit_base_point_overrides_stored(self, rotation_map, tmp_path):
        path = write_snapshot(rotation_map, 1.0, tmp_path / "r.hllg")
        u, _ = read_snapshot(path, base_point=NORTH)
        np.testing.assert_array_equal(u.base_point, NORTH)

    def test_base_point_is_stored(self, rotation_map, tmp_path):
        path = write_snapshot(rotation_map, 1.0, tmp_path / "r.hllg")
        data = path.read_bytes()
        assert HEADER.unpack_from(data)[1] == SNAPSHOT_VERSION_BASE_POINT
        assert len(data) == HEADER.size + rotation_map.values.nbytes + 24
        u, t = read_snapshot(path)
        assert t == 1.0
        np.testing.assert_array_equal(u.base_point, [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(u.values, rotation_map.values)

    def test_default_base_point_keeps_version_one(self, small_u, tmp_path):
        path = write_snapshot(small_u, 0.0, tmp_path / "u.hllg")
        assert HEADER.unpack_from(path.read_bytes())[1] == SNAPSHOT_VERSION

    def test_truncated_base_point(self, rotation_map, tmp_path):
        path = write_snapshot(rotation_map, 0.0, tmp_path / "r.hllg")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="payload has"):
            read_snapshot(path)

    def test_stored_base_point_must_be_unit(self, rotation_map, tmp_path):
        path = write_snapshot(rotation_map, 0.0, tmp_path / "r.hllg")
        data = path.read_bytes()[:-24] + np.array([2.0, 0.0, 0.0], dtype="<f8").tobytes()
        path.write_bytes(data)
        with pytest.raises(FormatError, match="unit vector"):
            read_snapshot(path)

    def test_bad_magic(self, small_u, tmp_path):
        path = write_snapshot(small_u, 0.0, tmp_path / "u.hllg")
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="bad magic"):
            read_snapshot(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.hllg"
        path.write_bytes(b"HLLG\x01")
        with pytest.raises(FormatError, match="truncated"):
            read_snapshot(path)

    def test_truncated_payload(self, small_u, tmp_path):
        path = write_snapshot(small_u, 0.0, tmp_path / "u.hllg")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="payload has"):
            read_snapshot(path)


class TestTimeseries:
    """Diagnostics CSV"""

    def test_roundtrip_is_exact(self, small_u, hllg_params, tmp_path):
        traj = run(small_u, hllg_params.replace(T=0.005))
        path = write_timeseries(traj.rows, tmp_path / "run.csv", traj.orders)
        rows = read_timeseries(path)
        assert [r.to_dict() for r in rows] == [r.to_dict() for r in traj.rows]

    def test_repeated_runs_write_identical_bytes(self, small_u, hllg_params, tmp_path):
        paths = []
        for name in ("first.csv", "second.csv"):
            traj = run(small_u, hllg_params.replace(T=0.005))
            paths.append(write_timeseries(traj.rows, tmp_path / name, traj.orders))
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert content_hash(paths[0]) == content_hash(paths[1])

    def test_header(self, tmp_path):
        path = write_timeseries([], tmp_path / "empty.csv", orders=(0.5, 1.0))
        header = path.read_text().splitlines()[0].split(",")
        assert header == ["t", "E", "E_eps", "Hs_0.5", "Hs_1", "dist_L2", "dist_Linf",
                          "dissipation", "drift", "grad_seminorm"]
        assert read_timeseries(path) == []

    def test_seventeen_digits(self, tmp_path):
        row = DiagnosticsRow(t=0.1, E=1.0 / 3.0, E_eps=1.0 / 3.0, seminorms={0.5: np.pi})
        path = write_timeseries([row], tmp_path / "one.csv")
        assert "0.33333333333333331" in path.read_text()
        assert read_timeseries(path)[0].E == 1.0 / 3.0

    def test_rejects_foreign_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(FormatError):
            read_timeseries(path)


class TestSummaries:
    """Sweep summary CSV and content hashes"""

    def test_columns_in_first_seen_order(self, tmp_path):
        summary = ExperimentSummary(name="s", rows=[{"a": 1, "status": "pass"},
                                                    {"a": 2, "extra": 0.5, "status": "fail"}])
        path = write_summary(summary, tmp_path / "summary.csv")
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["a", "status", "extra"]
        assert rows[1]["extra"] == "0.5"

    def test_content_hash(self, tmp_path):
        path = tmp_path / "blob"
        path.write_bytes(b"half-harmonic")
        assert content_hash(path) == hashlib.sha256(b"half-harmonic").hexdigest()


class TestSinks:
    """Sinks writing while a trajectory runs"""

    def test_timeseries_and_snapshot_sinks(self, small_u, hllg_params, tmp_path):
        processor = EventProcessor()
        timeseries = TimeseriesSink(tmp_path / "run.csv")
        snapshots = SnapshotSink(tmp_path, "run")
        processor.register_sink(timeseries)
        processor.register_sink(snapshots)
        traj = run(small_u, hllg_params.replace(T=4e-3, snapshot_every=2), sink=processor)

        assert len(read_timeseries(tmp_path / "run.csv")) == len(traj.rows) == 5
        assert sorted(p.name for p in snapshots.written.values()) == [
            "run_00000000.hllg", "run_00000002.hllg", "run_00000004.hllg"]
        u, t = read_snapshot(snapshots.written[max(snapshots.written)])
        np.testing.assert_array_equal(u.values, traj.final.values)

    def test_timeseries_written_on_failure(self, grid1, hllg_params, tmp_path):
        values = np.zeros((3,) + grid1.shape)
        values[2] = 1.0
        values[1, 0] = np.nan
        processor = EventProcessor()
        processor.register_sink(TimeseriesSink(tmp_path / "failed.csv"))
        traj = run(SphereField(grid1, values), hllg_params, sink=processor, raise_errors=False)
        assert traj.error is not None
        assert (tmp_path / "failed.csv").exists()
