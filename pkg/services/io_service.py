"""
Persistence service
HLLG binary snapshots, diagnostic time-series CSV, sweep summaries, and the
event sinks that write them while a trajectory runs
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import csv
import hashlib
import logging
import struct

import numpy as np

from core.errors import FormatError, HalfFlowError
from core.event_handlers import EventContext
from core.field import SphereField, default_base_point
from core.records import DiagnosticsRow, ExperimentSummary, FIXED_LEADING, FIXED_TRAILING
from core.spectral import SpectralGrid

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"HLLG"
SNAPSHOT_VERSION = 1
# version 2 appends the base point, m+1 little-endian f64, after the payload
SNAPSHOT_VERSION_BASE_POINT = 2
# magic, version, n, m, dims[3], box_lengths[3], t, payload length
HEADER = struct.Struct("<4sIII3I3ddQ")

PathLike = Union[str, Path]


def write_snapshot(u: SphereField, t: float, path: PathLike) -> Path:
    """Header plus nodal payload, components interleaved per node, little-endian f64

    A base point other than e_(m+1) is kept in a trailing block (format version 2).
    """
    path = Path(path)
    grid = u.grid
    dims = list(grid.dims) + [1] * (3 - grid.n)
    lengths = list(grid.box_lengths) + [0.0] * (3 - grid.n)
    payload = np.ascontiguousarray(np.moveaxis(u.values, 0, -1), dtype="<f8").tobytes()
    trailer = b""
    version = SNAPSHOT_VERSION
    if not np.array_equal(u.base_point, default_base_point(u.components)):
        trailer = np.asarray(u.base_point, dtype="<f8").tobytes()
        version = SNAPSHOT_VERSION_BASE_POINT
    header = HEADER.pack(SNAPSHOT_MAGIC, version, grid.n, u.target_dim,
                         *dims, *lengths, float(t), len(payload))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload)
            f.write(trailer)
    except OSError as e:
        logger.error(f"cannot write snapshot {path}: {e}")
        raise
    return path


def read_snapshot(path: PathLike, base_point: Optional[Sequence[float]] = None) -> Tuple[SphereField, float]:
    """Inverse of write_snapshot; an explicit base_point overrides the stored one"""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, n, m, d0, d1, d2, l0, l1, l2, t, length = HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version not in (SNAPSHOT_VERSION, SNAPSHOT_VERSION_BASE_POINT):
        raise FormatError(f"{path}: unsupported version {version}")
    if n not in (1, 2, 3) or m < 1:
        raise FormatError(f"{path}: invalid header n={n} m={m}")
    dims = (d0, d1, d2)[:n]
    lengths = (l0, l1, l2)[:n]
    expected = (m + 1) * int(np.prod(dims)) * 8
    if length != expected:
        raise FormatError(f"{path}: payload length {length} does not match {expected}")
    trailer_size = (m + 1) * 8 if version == SNAPSHOT_VERSION_BASE_POINT else 0
    body = data[HEADER.size:]
    if len(body) != length + trailer_size:
        raise FormatError(f"{path}: payload has {len(body)} bytes, header says {length + trailer_size}")
    try:
        grid = SpectralGrid(n=n, dims=dims, box_lengths=lengths)
    except ValueError as e:
        raise FormatError(f"{path}: invalid grid in header: {e}") from e
    values = np.frombuffer(body[:length], dtype="<f8").reshape(dims + (m + 1,))
    values = np.moveaxis(values, -1, 0).astype(float)
    if base_point is None and trailer_size:
        base_point = np.frombuffer(body[length:], dtype="<f8").astype(float)
    try:
        u = SphereField(grid, values, None if base_point is None else np.asarray(base_point, dtype=float))
    except HalfFlowError as e:
        raise FormatError(f"{path}: {e}") from e
    return u, t


def _format(x: float) -> str:
    return "%.17g" % x


def write_timeseries(rows: Sequence[DiagnosticsRow], path: PathLike,
                     orders: Optional[Sequence[float]] = None) -> Path:
    """CSV with one row per sample; floats printed with 17 significant digits"""
    path = Path(path)
    if orders is None:
        orders = sorted(rows[0].seminorms) if rows else []
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(DiagnosticsRow.csv_header(orders))
            for row in rows:
                writer.writerow([_format(v) for v in row.csv_values(orders)])
    except OSError as e:
        logger.error(f"cannot write time series {path}: {e}")
        raise
    return path


def read_timeseries(path: PathLike) -> List[DiagnosticsRow]:
    """Parse a CSV written by write_timeseries"""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header[:3]) != FIXED_LEADING or tuple(header[-5:]) != FIXED_TRAILING:
            raise FormatError(f"{path}: not a diagnostics time series")
        return [DiagnosticsRow.from_csv_values(header, [float(x) for x in line]) for line in reader if line]


def write_summary(summary: ExperimentSummary, path: PathLike) -> Path:
    """Summary rows as CSV, columns in first-seen order"""
    path = Path(path)
    columns: List[str] = []
    for row in summary.rows:
        columns.extend(k for k in row if k not in columns)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in summary.rows:
            writer.writerow({k: _format(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def content_hash(path: PathLike) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class TimeseriesSink:
    """Writes the diagnostics CSV when the run ends, completed or failed"""

    def __init__(self, path: PathLike, orders: Optional[Sequence[float]] = None):
        self.path = Path(path)
        self.orders = orders
        self.rows: List[DiagnosticsRow] = []

    def on_sample_recorded(self, context: EventContext, row: DiagnosticsRow):
        self.rows.append(row)

    def on_run_completed(self, context: EventContext, data: Any):
        write_timeseries(self.rows, self.path, self.orders)

    def on_run_failed(self, context: EventContext, error: Exception):
        write_timeseries(self.rows, self.path, self.orders)


class SnapshotSink:
    """Writes <prefix>_<step>.hllg whenever a snapshot is due"""

    def __init__(self, directory: PathLike, prefix: str = "snapshot"):
        self.directory = Path(directory)
        self.prefix = prefix
        self.written: Dict[float, Path] = {}

    def on_snapshot_due(self, context: EventContext, u: SphereField):
        path = self.directory / f"{self.prefix}_{context.step:08d}.hllg"
        self.written[context.t] = write_snapshot(u, context.t, path)
        logger.debug(f"snapshot t={context.t:.6g} -> {path}")
