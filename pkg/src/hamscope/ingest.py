"""Loading, validating, normalizing and splitting multivariate time series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EventOutOfRange,
    MalformedRow,
    NonUniformSampling,
    WindowTooShort,
)

SPACING_RTOL = 1e-6
MIN_WINDOW = 5
LONG_SCHEMA = ("segment_id", "timestamp", "value")
NORMALIZATION_MODES = ("zscore_per_segment", "global_zscore", "none")


def _check_uniform(timestamps: np.ndarray) -> float:
    steps = np.diff(timestamps)
    if steps.size == 0:
        raise NonUniformSampling("need at least two timestamps to define a spacing")
    dt = float(steps[0])
    if dt <= 0 or np.any(steps <= 0):
        raise NonUniformSampling("timestamps must be strictly increasing")
    if np.any(np.abs(steps - dt) > SPACING_RTOL * dt):
        bad = int(np.argmax(np.abs(steps - dt)))
        raise NonUniformSampling(
            f"irregular spacing at column {bad + 1}: {steps[bad]!r} vs {dt!r}"
        )
    return dt


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """Dense N x T observation matrix on a uniform time grid.

    ``timestamps`` are epoch seconds. ``event_time`` is optional until the
    matrix is split.
    """

    values: np.ndarray
    segment_ids: tuple[str, ...]
    timestamps: np.ndarray
    event_time: float | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        timestamps = np.asarray(self.timestamps, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "segment_ids", tuple(str(s) for s in self.segment_ids))
        if values.ndim != 2 or values.shape[0] < 1:
            raise EmptyInput("values must be a non-empty N x T matrix")
        if values.shape != (len(self.segment_ids), timestamps.size):
            raise ValueError(
                f"shape {values.shape} does not match {len(self.segment_ids)} segments "
                f"x {timestamps.size} timestamps"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        _check_uniform(timestamps)

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float(self.timestamps[1] - self.timestamps[0])


@dataclass(frozen=True)
class EventSplit:
    before: TimeSeriesMatrix
    after: TimeSeriesMatrix
    event_time: float

    def joined(self) -> TimeSeriesMatrix:
        return TimeSeriesMatrix(
            np.hstack([self.before.values, self.after.values]),
            self.before.segment_ids,
            np.concatenate([self.before.timestamps, self.after.timestamps]),
            self.event_time,
        )


@dataclass(frozen=True)
class NormalizationStats:
    mode: str
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


# -- timestamps -------------------------------------------------------------


def _parse_iso(text: str) -> float:
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _is_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_timestamp(text: str, numeric: bool) -> float:
    text = text.strip()
    if numeric:
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"non-finite timestamp {text!r}")
        return value
    return _parse_iso(text)


def format_timestamps(timestamps: np.ndarray) -> list[str]:
    """Integer epoch seconds when every stamp is integral, ISO-8601 UTC otherwise."""
    if np.all(timestamps == np.round(timestamps)):
        return [str(int(t)) for t in timestamps]
    out = []
    for t in timestamps:
        stamp = datetime.fromtimestamp(float(t), tz=timezone.utc)
        out.append(stamp.isoformat(timespec="microseconds").replace("+00:00", "Z"))
    return out


# -- loading ----------------------------------------------------------------


def _parse_value(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null"):
        return math.nan
    return float(text)


def _densify(
    order: list[str], cells: dict[str, dict[float, float]], stamps: set[float]
) -> TimeSeriesMatrix:
    if not order:
        raise EmptyInput("no data rows")
    grid = np.array(sorted(stamps))
    if grid.size < 2:
        raise EmptyInput("need at least two distinct timestamps")
    _check_uniform(grid)
    values = np.empty((len(order), grid.size))
    for row, seg in enumerate(order):
        observed = {t: v for t, v in cells[seg].items() if math.isfinite(v)}
        if not observed:
            raise EmptyInput(f"segment {seg!r} has no finite observations")
        ts = np.array(sorted(observed))
        vs = np.array([observed[t] for t in ts])
        # np.interp holds the nearest observed value past either end
        values[row] = np.interp(grid, ts, vs)
    return TimeSeriesMatrix(values, tuple(order), grid)


def load_long_csv(path: str | Path, schema: Sequence[str] = LONG_SCHEMA) -> TimeSeriesMatrix:
    """Read ``segment_id,timestamp,value`` rows into a dense matrix.

    Missing cells are filled by linear interpolation along time; leading and
    trailing gaps take the nearest observed value. Rows follow the order in
    which segment ids first appear.
    """
    seg_col, time_col, value_col = schema
    cells: dict[str, dict[float, float]] = {}
    order: list[str] = []
    stamps: set[float] = set()
    numeric: bool | None = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        try:
            idx = [header.index(seg_col), header.index(time_col), header.index(value_col)]
        except ValueError:
            raise MalformedRow(f"header must contain {list(schema)}, got {header}", 1) from None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", line_no)
            seg, raw_t, raw_v = (row[i].strip() for i in idx)
            if numeric is None:
                numeric = _is_numeric(raw_t)
            try:
                t = parse_timestamp(raw_t, numeric)
                v = _parse_value(raw_v)
            except ValueError as exc:
                raise MalformedRow(str(exc), line_no) from None
            if seg not in cells:
                cells[seg] = {}
                order.append(seg)
            if t in cells[seg]:
                raise MalformedRow(f"duplicate cell ({seg}, {raw_t})", line_no)
            cells[seg][t] = v
            stamps.add(t)
    return _densify(order, cells, stamps)


def load_wide_csv(path: str | Path) -> TimeSeriesMatrix:
    """Read a wide table: first column ``segment_id``, other headers are timestamps."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "segment_id":
            raise MalformedRow("first header must be 'segment_id' followed by timestamps", 1)
        numeric = _is_numeric(header[1])
        try:
            times = [parse_timestamp(h, numeric) for h in header[1:]]
        except ValueError as exc:
            raise MalformedRow(str(exc), 1) from None
        if len(set(times)) != len(times):
            raise MalformedRow("duplicate timestamp column", 1)
        cells: dict[str, dict[float, float]] = {}
        order: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", line_no)
            seg = row[0].strip()
            if seg in cells:
                raise MalformedRow(f"duplicate segment {seg!r}", line_no)
            try:
                cells[seg] = {t: _parse_value(v) for t, v in zip(times, row[1:])}
            except ValueError as exc:
                raise MalformedRow(str(exc), line_no) from None
            order.append(seg)
    return _densify(order, cells, set(times))


def write_long_csv(x: TimeSeriesMatrix, path: str | Path) -> None:
    stamps = format_timestamps(x.timestamps)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_SCHEMA)
        for seg, row in zip(x.segment_ids, x.values):
            for stamp, value in zip(stamps, row):
                writer.writerow((seg, stamp, repr(float(value))))


# -- splitting and normalization -------------------------------------------


def split_at_event(x: TimeSeriesMatrix, event_time: float) -> EventSplit:
    """Partition columns into ``t < event_time`` and ``t >= event_time``."""
    ts = x.timestamps
    if not ts[0] < event_time <= ts[-1]:
        raise EventOutOfRange(
            f"event_time {event_time!r} outside observed range ({ts[0]!r}, {ts[-1]!r}]"
        )
    cut = int(np.searchsorted(ts, event_time, side="left"))
    if cut < MIN_WINDOW or ts.size - cut < MIN_WINDOW:
        raise WindowTooShort(
            f"windows of {cut} and {ts.size - cut} steps; each needs >= {MIN_WINDOW}"
        )
    before = TimeSeriesMatrix(x.values[:, :cut], x.segment_ids, ts[:cut], event_time)
    after = TimeSeriesMatrix(x.values[:, cut:], x.segment_ids, ts[cut:], event_time)
    return EventSplit(before, after, float(event_time))


def _is_constant(std: np.ndarray, mean: np.ndarray) -> np.ndarray:
    return std <= 1e-12 * (1.0 + np.abs(mean))


def normalize(
    x: TimeSeriesMatrix, mode: str = "zscore_per_segment", stats: NormalizationStats | None = None
) -> tuple[TimeSeriesMatrix, NormalizationStats]:
    """Z-score the matrix, optionally with statistics from another window.

    Uses the population standard deviation. Constant rows become zeros and
    are flagged in ``stats.constant``.
    """
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization mode {mode!r}")
    if stats is not None and stats.mode != mode:
        raise ValueError(f"stats computed for mode {stats.mode!r}, not {mode!r}")
    n = x.n_segments
    if mode == "none":
        return x, stats or NormalizationStats("none", np.zeros(n), np.ones(n), np.zeros(n, bool))
    if stats is None:
        if mode == "zscore_per_segment":
            mean = x.values.mean(axis=1)
            std = x.values.std(axis=1)
        else:
            mean = np.full(n, x.values.mean())
            std = np.full(n, x.values.std())
        stats = NormalizationStats(mode, mean, std, _is_constant(std, mean))
    if stats.mean.shape != (n,):
        raise ValueError(f"stats cover {stats.mean.size} segments, matrix has {n}")
    safe_std = np.where(stats.constant, 1.0, stats.std)
    out = (x.values - stats.mean[:, None]) / safe_std[:, None]
    out[stats.constant] = 0.0
    return TimeSeriesMatrix(out, x.segment_ids, x.timestamps, x.event_time), stats
