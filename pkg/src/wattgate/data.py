"""Power channel IO, gap handling, normalization, labeling, and windowing.

A channel is a regularly sampled watts series. Files store one sample
per line as "timestamp,watts"; a missing sample is simply an absent
row, which the loader turns into NaN on the reconstructed grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, ParseError


@dataclass
class ChannelSeries:
    """A regular watts series. NaN marks missing samples."""

    sample_period: float  # seconds between samples
    start_time: float     # unix seconds of the first sample
    values: np.ndarray    # float64 watts
    name: str = ""

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ConfigurationError(
                f"sample period must be positive, got {self.sample_period}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DataError(f"channel values must be 1-d, got shape {self.values.shape}")
        present = self.values[~np.isnan(self.values)]
        if np.any(np.isinf(present)):
            raise DataError("channel contains infinite watts")
        if np.any(present < 0.0):
            raise DataError("channel contains negative watts")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def duration_seconds(self) -> float:
        return self.n * self.sample_period

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(self.n) * self.sample_period


def load_channel(path, sample_period: float | None = None, name: str = "") -> ChannelSeries:
    """Parse a timestamp,watts file onto its sampling grid.

    The sample period is inferred as the smallest timestamp difference
    unless given. Rows must be strictly increasing in time and sit on
    the grid; gaps become NaN runs.
    """
    path = Path(path)
    ts = []
    watts = []
    header_allowed = True  # one leading non-numeric row is tolerated
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read channel file {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'timestamp,watts', got {line!r}",
                             path=path, line=lineno)
        try:
            t = float(parts[0])
            w = float(parts[1])
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue
            raise ParseError(f"non-numeric field in {line!r}",
                             path=path, line=lineno) from None
        header_allowed = False
        ts.append(t)
        watts.append(w)
    if not ts:
        raise DataError(f"{path}: no samples")
    ts = np.asarray(ts)
    watts = np.asarray(watts)
    if np.any(np.diff(ts) <= 0):
        bad = int(np.argmax(np.diff(ts) <= 0)) + 2
        raise DataError(f"{path}: timestamps not strictly increasing near data row {bad}")
    if sample_period is None:
        if ts.size < 2:
            raise DataError(f"{path}: cannot infer sample period from one sample")
        sample_period = float(np.min(np.diff(ts)))
    idx = np.round((ts - ts[0]) / sample_period).astype(np.int64)
    off_grid = np.abs(ts - (ts[0] + idx * sample_period)) > 1e-6 * sample_period
    if np.any(off_grid):
        raise DataError(
            f"{path}: timestamp {ts[np.argmax(off_grid)]} is off the "
            f"{sample_period}s sampling grid")
    values = np.full(int(idx[-1]) + 1, np.nan)
    values[idx] = watts
    return ChannelSeries(sample_period=sample_period, start_time=float(ts[0]),
                         values=values, name=name or path.stem)


def save_channel(path, series: ChannelSeries):
    """Write present samples as timestamp,watts rows; missing samples are
    dropped, matching what load_channel expects."""
    path = Path(path)
    tstamps = series.timestamps()
    out = []
    for t, v in zip(tstamps, series.values):
        if np.isnan(v):
            continue
        ts = int(t) if float(t).is_integer() else repr(float(t))
        out.append(f"{ts},{repr(float(v))}\n")
    path.write_text("".join(out))


def _align(channels: list[ChannelSeries]):
    """Clip all channels to their common time range.

    Returns (start_time, period, list of value arrays). Channels must
    share the sample period and sit on a common grid.
    """
    if not channels:
        raise DataError("no channels to align")
    period = channels[0].sample_period
    for c in channels[1:]:
        if c.sample_period != period:
            raise DataError(
                f"sample period mismatch: {c.sample_period} vs {period}")
    start = max(c.start_time for c in channels)
    end = min(c.start_time + c.n * c.sample_period for c in channels)
    if end - start < period:
        raise DataError("channels have no overlapping time range")
    arrays = []
    for c in channels:
        shift = (start - c.start_time) / period
        k = int(round(shift))
        if abs(shift - k) > 1e-6:
            raise DataError(f"channel {c.name!r} is offset from the common grid")
        m = int(round((end - start) / period))
        arrays.append(c.values[k:k + m])
    return start, period, arrays


def _missing_runs(mask: np.ndarray):
    """Yield (start, length) for each maximal run of True."""
    n = mask.size
    i = 0
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            yield i, j - i
            i = j
        else:
            i += 1


def split_segments(channels: list[ChannelSeries], gap_seconds: float = 20.0):
    """Align channels and split where any channel is missing for at least
    gap_seconds. Returns (start_time, period, arrays, spans) where spans
    are (begin, end) index pairs into the aligned arrays; every span
    starts and ends on a sample present in all channels."""
    start, period, arrays = _align(channels)
    union = np.zeros(arrays[0].size, dtype=bool)
    for a in arrays:
        union |= np.isnan(a)
    present = np.flatnonzero(~union)
    if present.size == 0:
        return start, period, arrays, []
    lo, hi = int(present[0]), int(present[-1]) + 1

    spans = []
    seg_start = lo
    for i, run in _missing_runs(union[lo:hi]):
        if run * period >= gap_seconds:
            if lo + i > seg_start:
                spans.append((seg_start, lo + i))
            seg_start = lo + i + run
    if hi > seg_start:
        spans.append((seg_start, hi))
    return start, period, arrays, spans


def _backfill(values: np.ndarray) -> np.ndarray:
    """Replace every NaN with the next present value. The last entry must
    be present."""
    n = values.size
    present = ~np.isnan(values)
    idx = np.where(present, np.arange(n), n)
    idx = np.minimum.accumulate(idx[::-1])[::-1]
    return values[np.minimum(idx, n - 1)]


def preprocess_redd_group(channels: list[ChannelSeries], gap_seconds: float = 20.0,
                          min_seconds: float = 86400.0) -> list[list[ChannelSeries]]:
    """Gap-aware cleanup for a household of aligned channels.

    Splits wherever any channel is missing for gap_seconds or longer,
    backfills the shorter gaps from the next present sample, and keeps
    only parts strictly longer than min_seconds. Each returned part is a
    list of gap-free ChannelSeries in the input order.
    """
    start, period, arrays, spans = split_segments(channels, gap_seconds)
    parts = []
    for a, b in spans:
        if (b - a) * period <= min_seconds:
            continue
        part = []
        for src, arr in zip(channels, arrays):
            seg = _backfill(arr[a:b].copy())
            part.append(ChannelSeries(
                sample_period=period, start_time=start + a * period,
                values=seg, name=src.name))
        parts.append(part)
    return parts


def preprocess_redd(series: ChannelSeries, gap_seconds: float = 20.0,
                    min_seconds: float = 86400.0) -> list[ChannelSeries]:
    """Single-channel form of preprocess_redd_group."""
    return [part[0] for part in preprocess_redd_group([series], gap_seconds, min_seconds)]


@dataclass(frozen=True)
class NormStats:
    """Normalization scale: the population standard deviation, in watts,
    of the training-span aggregate."""

    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise DataError(f"normalization sigma must be positive, got {self.sigma}")


def compute_norm(values: np.ndarray) -> NormStats:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise DataError("need at least two samples to compute normalization")
    if np.any(np.isnan(values)):
        raise DataError("normalization input still contains missing samples")
    sigma = float(values.std())
    if sigma == 0.0:
        raise DataError("normalization input has zero variance")
    return NormStats(sigma=sigma)


def normalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / stats.sigma


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.sigma


def label_on_off(values: np.ndarray, threshold_watts: float) -> np.ndarray:
    """1.0 where the raw appliance draw strictly exceeds the threshold.

    Apply to watts before normalization; the threshold is in watts.
    """
    if not np.isfinite(threshold_watts) or threshold_watts < 0:
        raise ConfigurationError(f"threshold must be a non-negative number of watts, "
                                 f"got {threshold_watts}")
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(values)):
        raise DataError("labeling input still contains missing samples")
    return (values > threshold_watts).astype(np.float64)


def _check_window_geometry(n: int, s: int, w: int):
    if s < 1:
        raise ConfigurationError(f"target window length s must be >= 1, got {s}")
    if w < 0:
        raise ConfigurationError(f"context width w must be >= 0, got {w}")
    if n < s:
        raise DataError(f"series of {n} samples is shorter than one target window ({s})")


def eval_origins(n: int, s: int) -> np.ndarray:
    """Non-overlapping target windows tiling the series; a trailing
    remainder shorter than s is dropped."""
    _check_window_geometry(n, s, 0)
    return np.arange(0, n - s + 1, s, dtype=np.int64)


def sample_origins(n: int, s: int, count: int, rng: np.random.Generator) -> np.ndarray:
    _check_window_geometry(n, s, 0)
    if count < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {count}")
    return rng.integers(0, n - s + 1, size=count)


def build_windows(values: np.ndarray, origins: np.ndarray, s: int, w: int) -> np.ndarray:
    """Gather [t - w, t + s + w) windows for each origin t, zero-padding
    where the window reaches past the series."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    _check_window_geometry(n, s, w)
    origins = np.asarray(origins, dtype=np.int64)
    if origins.size and (origins.min() < 0 or origins.max() > n - s):
        raise DataError("window origin outside the series")
    padded = np.concatenate([np.zeros(w), values, np.zeros(w)])
    out = np.empty((origins.size, s + 2 * w))
    for i, t in enumerate(origins):
        out[i] = padded[t:t + s + 2 * w]
    return out


def slice_windows(values: np.ndarray, origins: np.ndarray, s: int) -> np.ndarray:
    """Gather the [t, t + s) target slices for each origin."""
    return build_windows(values, origins, s, 0)


@dataclass
class Manifest:
    """Plain-text description of a household dataset on disk."""

    aggregate: str
    appliances: dict[str, str]
    base_dir: Path
    sample_period: float | None = None
    thresholds: dict[str, float] = field(default_factory=dict)
    train_span: tuple[int, int] | None = None
    test_span: tuple[int, int] | None = None
    preprocess: str = "none"

    def aggregate_path(self) -> Path:
        return self.base_dir / self.aggregate

    def appliance_path(self, name: str) -> Path:
        if name not in self.appliances:
            raise DataError(f"manifest has no appliance {name!r}; "
                            f"available: {', '.join(self.appliances)}")
        return self.base_dir / self.appliances[name]

    def threshold_for(self, name: str, default: float) -> float:
        return self.thresholds.get(name, default)


def _parse_span(value: str, path, lineno):
    parts = value.split()
    if len(parts) != 2:
        raise ParseError(f"span needs two integers, got {value!r}", path, lineno)
    try:
        a, b = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"span needs two integers, got {value!r}", path, lineno) from None
    if not (0 <= a < b):
        raise ParseError(f"span must satisfy 0 <= start < end, got {value!r}", path, lineno)
    return a, b


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from None
    aggregate = None
    appliances: dict[str, str] = {}
    thresholds: dict[str, float] = {}
    sample_period = None
    train_span = None
    test_span = None
    preprocess = "none"
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "aggregate":
            aggregate = value
        elif key.startswith("appliance "):
            name = key[len("appliance "):].strip()
            if name in appliances:
                raise ParseError(f"appliance {name!r} defined twice", path, lineno)
            appliances[name] = value
        elif key.startswith("threshold "):
            name = key[len("threshold "):].strip()
            try:
                thresholds[name] = float(value)
            except ValueError:
                raise ParseError(f"threshold must be a number, got {value!r}",
                                 path, lineno) from None
        elif key == "sample_period":
            try:
                sample_period = float(value)
            except ValueError:
                raise ParseError(f"sample_period must be a number, got {value!r}",
                                 path, lineno) from None
        elif key == "train_span":
            train_span = _parse_span(value, path, lineno)
        elif key == "test_span":
            test_span = _parse_span(value, path, lineno)
        elif key == "preprocess":
            if value not in ("none", "redd"):
                raise ParseError(f"preprocess must be 'none' or 'redd', got {value!r}",
                                 path, lineno)
            preprocess = value
        else:
            raise ParseError(f"unknown manifest key {key!r}", path, lineno)
    if aggregate is None:
        raise ParseError("manifest defines no aggregate channel", path, None)
    if not appliances:
        raise ParseError("manifest defines no appliance channels", path, None)
    for name, thr in thresholds.items():
        if name not in appliances:
            raise ParseError(f"threshold given for unknown appliance {name!r}", path, None)
    return Manifest(aggregate=aggregate, appliances=appliances,
                    base_dir=path.parent, sample_period=sample_period,
                    thresholds=thresholds, train_span=train_span,
                    test_span=test_span, preprocess=preprocess)


def save_manifest(path, manifest: Manifest):
    path = Path(path)
    lines = []
    if manifest.sample_period is not None:
        period = manifest.sample_period
        lines.append(f"sample_period = {int(period) if float(period).is_integer() else period}")
    lines.append(f"aggregate = {manifest.aggregate}")
    for name, rel in manifest.appliances.items():
        lines.append(f"appliance {name} = {rel}")
    for name, thr in manifest.thresholds.items():
        lines.append(f"threshold {name} = {thr}")
    if manifest.train_span is not None:
        lines.append(f"train_span = {manifest.train_span[0]} {manifest.train_span[1]}")
    if manifest.test_span is not None:
        lines.append(f"test_span = {manifest.test_span[0]} {manifest.test_span[1]}")
    lines.append(f"preprocess = {manifest.preprocess}")
    path.write_text("\n".join(lines) + "\n")


def load_household(manifest: Manifest):
    """Load the aggregate and every appliance channel named by a manifest.

    Returns (aggregate, {name: series}). All channels are checked for a
    shared sample period.
    """
    agg = load_channel(manifest.aggregate_path(), manifest.sample_period, "aggregate")
    appliances = {}
    for name in manifest.appliances:
        appliances[name] = load_channel(manifest.appliance_path(name),
                                        manifest.sample_period, name)
    for name, ch in appliances.items():
        if ch.sample_period != agg.sample_period:
            raise DataError(f"appliance {name!r} sample period {ch.sample_period} "
                            f"differs from aggregate {agg.sample_period}")
    return agg, appliances
