"""Time-series containers, min-max scaling, windowing and CSV/JSON I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent time-series data."""


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Named channels sampled on a uniform grid.

    ``samples`` has one row per time step and one column per channel.
    """

    channel_names: tuple[str, ...]
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        names = tuple(self.channel_names)
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2:
            raise DataError(f"samples must be 2-D, got shape {samples.shape}")
        if samples.shape[1] != len(names):
            raise DataError(
                f"{len(names)} channel names for {samples.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError(f"duplicate channel names in {names}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DataError(f"dt must be positive and finite, got {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise DataError("samples contain non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.samples[:, self.channel_names.index(name)]
        except ValueError:
            raise KeyError(f"no channel {name!r}; have {self.channel_names}") from None

    def select(self, names: Sequence[str]) -> "TimeSeriesDataset":
        cols = [self.channel_names.index(n) for n in names]
        return TimeSeriesDataset(tuple(names), self.samples[:, cols], self.dt, self.t0)

    def rows(self, start: int, stop: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.channel_names, self.samples[start:stop],
                                 self.dt, self.t0 + start * self.dt)

    @classmethod
    def from_columns(cls, columns: dict[str, Sequence[float]], dt: float,
                     t0: float = 0.0) -> "TimeSeriesDataset":
        names = tuple(columns)
        return cls(names, np.column_stack([np.asarray(columns[n], float) for n in names]),
                   dt, t0)


@dataclass(frozen=True)
class ChannelScaler:
    """Per-channel min-max scaler mapping the fitted range onto [0, 1].

    Degenerate channels (max == min) get unit span, so they map to 0.
    """

    channels: tuple[str, ...]
    min: np.ndarray
    max: np.ndarray
    span: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=float).ravel()
        hi = np.asarray(self.max, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size != len(self.channels):
            raise DataError("scaler min/max/channels lengths differ")
        if np.any(hi < lo):
            raise DataError("scaler max < min on some channel")
        span = hi - lo
        span[span == 0.0] = 1.0
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        object.__setattr__(self, "span", span)

    def to_dict(self) -> dict:
        return {"channels": list(self.channels), "min": self.min.tolist(),
                "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelScaler":
        return cls(tuple(d["channels"]), np.asarray(d["min"], float),
                   np.asarray(d["max"], float))

    def subset(self, names: Sequence[str]) -> "ChannelScaler":
        idx = [self.channels.index(n) for n in names]
        return ChannelScaler(tuple(names), self.min[idx], self.max[idx])


def fit_scaler(data: TimeSeriesDataset | np.ndarray,
               channels: Sequence[str] | None = None) -> ChannelScaler:
    if isinstance(data, TimeSeriesDataset):
        channels = data.channel_names
        x = data.samples
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if channels is None:
            channels = tuple(f"c{i}" for i in range(x.shape[1]))
    if x.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    return ChannelScaler(tuple(channels), x.min(axis=0), x.max(axis=0))


def _raw(data):
    return data.samples if isinstance(data, TimeSeriesDataset) else np.asarray(data, float)


def _rewrap(data, values):
    if isinstance(data, TimeSeriesDataset):
        return TimeSeriesDataset(data.channel_names, values, data.dt, data.t0)
    return values


def _check_width(x: np.ndarray, scaler: ChannelScaler):
    if x.shape[-1] != len(scaler.channels):
        raise DataError(
            f"data has {x.shape[-1]} channels, scaler has {len(scaler.channels)}")


def apply_scaler(data, scaler: ChannelScaler):
    """Map onto the unit interval; values outside the fitted range extrapolate."""
    x = _raw(data)
    _check_width(x, scaler)
    return _rewrap(data, (x - scaler.min) / scaler.span)


def invert_scaler(data, scaler: ChannelScaler):
    x = _raw(data)
    _check_width(x, scaler)
    return _rewrap(data, x * scaler.span + scaler.min)


def split_train_test(data: TimeSeriesDataset, ratio: float = 0.5
                     ) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Contiguous split; the first ``floor(ratio * n)`` rows are training data."""
    if not 0.0 < ratio < 1.0:
        raise DataError(f"train ratio must lie in (0, 1), got {ratio}")
    n_train = int(math.floor(ratio * len(data)))
    return data.rows(0, n_train), data.rows(n_train, len(data))


@dataclass(frozen=True)
class WindowBatch:
    """Training windows shaped (window, step, channel).

    Row ``k`` of a window feeds motion at ``k + 1`` and loads at ``k``;
    the target at row ``k`` is the load vector at ``k + 1``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray
    batch_len: int

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]


def build_io(data: np.ndarray, motion_idx: Sequence[int], load_idx: Sequence[int]
             ) -> tuple[np.ndarray, np.ndarray]:
    """Offset a (step, channel) array into aligned network inputs and targets.

    Returns arrays of length ``n - 1``: ``x[k] = [motion[k+1], loads[k]]`` and
    ``y[k] = loads[k+1]``.
    """
    motion = data[1:, list(motion_idx)]
    loads_prev = data[:-1, list(load_idx)]
    return np.hstack([motion, loads_prev]), data[1:, list(load_idx)]


def sample_windows(data: TimeSeriesDataset | np.ndarray, batch_len: int, count: int,
                   rng_seed: int | np.random.Generator,
                   motion: Sequence[str] = ("h_bar", "alpha"),
                   loads: Sequence[str] = ("C_L", "C_M"),
                   channel_names: Sequence[str] | None = None) -> WindowBatch:
    """Draw ``count`` windows of ``batch_len`` steps with uniform random starts.

    Each window consumes ``batch_len + 1`` consecutive rows.  Passing a
    ``Generator`` instead of a seed continues its stream.
    """
    if isinstance(data, TimeSeriesDataset):
        names = data.channel_names
        x = data.samples
    else:
        x = np.asarray(data, dtype=float)
        names = tuple(channel_names) if channel_names is not None else None
        if names is None:
            raise DataError("channel_names required for raw arrays")
    n = x.shape[0]
    if batch_len < 1 or batch_len + 1 > n:
        raise DataError(
            f"batch_len {batch_len} needs {batch_len + 1} rows, series has {n}")
    m_idx = [names.index(c) for c in motion]
    l_idx = [names.index(c) for c in loads]
    xin, yout = build_io(x, m_idx, l_idx)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    starts = rng.integers(0, n - batch_len, size=count)
    offsets = starts[:, None] + np.arange(batch_len)[None, :]
    return WindowBatch(xin[offsets], yout[offsets], starts, batch_len)


# ---------------------------------------------------------------- file I/O

def write_csv(path: str | Path, data: TimeSeriesDataset, time_column: bool = True):
    """Write with a header row; a leading ``t`` column holds the sample times."""
    path = Path(path)
    names = list(data.channel_names)
    values = data.samples
    if time_column and "t" not in names:
        names = ["t"] + names
        values = np.column_stack([data.time, values])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path: str | Path, dt: float | None = None) -> TimeSeriesDataset:
    """Read a CSV written by :func:`write_csv`.

    The ``t`` column, when present, fixes ``t0`` and ``dt`` and is kept as a
    channel.  Missing or non-finite cells raise :class:`DataError` naming the line.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric or missing field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    samples = np.array(rows)
    t0 = 0.0
    if "t" in header:
        t = samples[:, header.index("t")]
        t0 = float(t[0])
        if len(t) > 1:
            dt = (t[-1] - t[0]) / (len(t) - 1)
    if dt is None:
        dt = 1.0
    return TimeSeriesDataset(tuple(header), samples, dt, t0)


def save_scaler(path: str | Path, scaler: ChannelScaler):
    Path(path).write_text(json.dumps(scaler.to_dict(), indent=2))


def load_scaler(path: str | Path) -> ChannelScaler:
    return ChannelScaler.from_dict(json.loads(Path(path).read_text()))
