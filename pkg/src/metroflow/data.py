"""CSV ingestion, feature encoding, normalization and windowing.

The pipeline is parse -> clean -> encode -> split_and_window.  Splits are
chronological, normalization statistics come from the training rows only,
and windows never cross a split boundary or a timeline gap longer than
six hours.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .errors import ConfigError, SchemaError, UsageError
from .serialize import digest, read_blob, write_blob

RAW_COLUMNS = (
    "holiday", "temp", "rain_1h", "snow_1h", "clouds_all",
    "weather_main", "weather_description", "date_time", "traffic_volume",
)

TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
_EPOCH = datetime(1970, 1, 1)

#: Consecutive records further apart than this do not share a window.
MAX_GAP_SECONDS = 6 * 3600

#: Kelvin readings below this are sensor sentinels, not weather.
MIN_PLAUSIBLE_TEMP = 100.0

#: Hourly rainfall above this (mm) is a recording artifact.
MAX_PLAUSIBLE_RAIN = 300.0

DATASET_FORMAT = "metroflow-dataset"


@dataclass(frozen=True)
class RawRecord:
    holiday: str
    temp: float
    rain_1h: float
    snow_1h: float
    clouds_all: float
    weather_main: str
    weather_description: str
    date_time: datetime
    traffic_volume: int


@dataclass
class ParseResult:
    records: list
    rejects: list  # dicts with line number and reason


def _to_epoch(dt: datetime) -> float:
    return (dt - _EPOCH).total_seconds()


def _from_epoch(seconds: float) -> datetime:
    return _EPOCH + timedelta(seconds=float(seconds))


def parse_csv(path) -> ParseResult:
    """Read the nine-column traffic CSV; malformed rows land in rejects."""
    records = []
    rejects = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row")
        if len(header) != len(RAW_COLUMNS):
            raise SchemaError(
                f"{path}: expected {len(RAW_COLUMNS)} columns, found {len(header)}"
            )
        for got, want in zip(header, RAW_COLUMNS):
            if got.strip() != want:
                raise SchemaError(f"{path}: unknown header column {got!r}, expected {want!r}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(RAW_COLUMNS):
                rejects.append({"line": line, "reason": f"expected 9 fields, found {len(row)}"})
                continue
            try:
                record = RawRecord(
                    holiday=row[0],
                    temp=float(row[1]),
                    rain_1h=float(row[2]),
                    snow_1h=float(row[3]),
                    clouds_all=float(row[4]),
                    weather_main=row[5],
                    weather_description=row[6],
                    date_time=datetime.strptime(row[7], TIME_FORMAT),
                    traffic_volume=int(row[8]),
                )
            except ValueError as err:
                rejects.append({"line": line, "reason": str(err)})
                continue
            if record.traffic_volume < 0:
                rejects.append({"line": line, "reason": "negative traffic_volume"})
                continue
            if not 0.0 <= record.clouds_all <= 100.0:
                rejects.append({"line": line, "reason": "clouds_all outside [0, 100]"})
                continue
            records.append(record)
    return ParseResult(records=records, rejects=rejects)


@dataclass
class CleanResult:
    records: list
    dropped_temperature: int
    dropped_rain: int
    duplicate_timestamps: int

    @property
    def summary(self) -> dict:
        return {
            "kept": len(self.records),
            "dropped_temperature": self.dropped_temperature,
            "dropped_rain": self.dropped_rain,
            "duplicate_timestamps": self.duplicate_timestamps,
        }


def clean(records) -> CleanResult:
    """Drop impossible readings, dedupe timestamps keep-first, sort by time."""
    dropped_temp = 0
    dropped_rain = 0
    duplicates = 0
    seen = {}
    for r in records:
        if r.temp < MIN_PLAUSIBLE_TEMP:
            dropped_temp += 1
            continue
        if r.rain_1h > MAX_PLAUSIBLE_RAIN:
            dropped_rain += 1
            continue
        if r.date_time in seen:
            duplicates += 1
            continue
        seen[r.date_time] = r
    kept = sorted(seen.values(), key=lambda r: r.date_time)
    return CleanResult(records=kept, dropped_temperature=dropped_temp,
                       dropped_rain=dropped_rain, duplicate_timestamps=duplicates)


@dataclass
class EncodedSeries:
    features: np.ndarray  # [L, d], raw continuous columns, final cyclic/flag/one-hot
    times: np.ndarray     # [L] epoch seconds
    vocab: tuple          # weather_main categories backing the one-hot block
    feature_names: tuple


def discover_vocab(records) -> tuple:
    return tuple(sorted({r.weather_main for r in records}))


def encode(records, vocab=None) -> EncodedSeries:
    """Encode records into fixed-width feature rows.

    Column order: temp, rain_1h, snow_1h, clouds_all, hour sin/cos, day-of-week
    sin/cos, holiday flag, one one-hot column per vocabulary entry, and
    traffic_volume last.  Categories outside the vocabulary leave the one-hot
    block all zero.  Continuous columns stay on their raw scale here;
    standardization happens against training statistics when splitting.
    """
    if vocab is None:
        vocab = discover_vocab(records)
    vocab = tuple(vocab)
    index = {name: i for i, name in enumerate(vocab)}
    d = 9 + len(vocab) + 1
    features = np.zeros((len(records), d))
    times = np.zeros(len(records))
    for i, r in enumerate(records):
        hour_angle = 2.0 * np.pi * r.date_time.hour / 24.0
        dow_angle = 2.0 * np.pi * r.date_time.weekday() / 7.0
        features[i, 0] = r.temp
        features[i, 1] = r.rain_1h
        features[i, 2] = r.snow_1h
        features[i, 3] = r.clouds_all
        features[i, 4] = np.sin(hour_angle)
        features[i, 5] = np.cos(hour_angle)
        features[i, 6] = np.sin(dow_angle)
        features[i, 7] = np.cos(dow_angle)
        features[i, 8] = 0.0 if r.holiday == "None" else 1.0
        j = index.get(r.weather_main)
        if j is not None:
            features[i, 9 + j] = 1.0
        features[i, d - 1] = float(r.traffic_volume)
        times[i] = _to_epoch(r.date_time)
    names = (
        "temp", "rain_1h", "snow_1h", "clouds_all",
        "hour_sin", "hour_cos", "dow_sin", "dow_cos", "holiday",
        *(f"weather={name}" for name in vocab),
        "traffic_volume",
    )
    return EncodedSeries(features=features, times=times, vocab=vocab, feature_names=names)


@dataclass
class Stats:
    mean: np.ndarray  # [d]
    std: np.ndarray   # [d], zero-variance columns pinned to 1

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Stats":
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, std=std)

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std

    def normalize_volume(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean[-1]) / self.std[-1]


def denormalize(preds, stats: Stats):
    """Map standardized volume predictions back to vehicles per hour."""
    if stats is None:
        raise UsageError("denormalize needs the fitted normalization stats")
    return np.asarray(preds, dtype=np.float64) * stats.std[-1] + stats.mean[-1]


@dataclass
class WindowedDataset:
    split: str
    windows: np.ndarray       # [N, n, d] standardized
    targets: np.ndarray       # [N, T] standardized traffic_volume
    target_times: np.ndarray  # [N, T] epoch seconds
    stats: Stats


@dataclass
class DatasetBundle:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    stats: Stats
    vocab: tuple
    window: int
    horizon: int
    series: np.ndarray  # [L, d] standardized, full timeline
    times: np.ndarray   # [L] epoch seconds
    bounds: tuple       # (train_end, val_end) row indices
    starts: dict = field(default_factory=dict)  # split -> window start rows
    summary: dict = field(default_factory=dict)
    data_hash: str = ""

    @property
    def input_features(self) -> int:
        return self.series.shape[1]


def _boundaries(length: int, ratios) -> tuple:
    # the epsilon absorbs float error in ratio sums (0.7+0.1 < 0.8 in binary)
    train_end = int(np.floor(ratios[0] * length + 1e-9))
    val_end = int(np.floor((ratios[0] + ratios[1]) * length + 1e-9))
    return train_end, val_end


def _window_starts(times: np.ndarray, lo: int, hi: int, n: int, horizon: int) -> np.ndarray:
    """Window start rows inside [lo, hi) whose full n+T span avoids gaps."""
    starts = []
    if hi - lo >= 1:
        deltas = np.diff(times[lo:hi])
        breaks = np.flatnonzero(deltas > MAX_GAP_SECONDS) + lo + 1
        edges = [lo, *breaks.tolist(), hi]
        for a, b in zip(edges[:-1], edges[1:]):
            last_start = b - n - horizon
            if last_start >= a:
                starts.append(np.arange(a, last_start + 1))
    if not starts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(starts)


def _materialize(series, times, starts, n, horizon, split, stats) -> WindowedDataset:
    if len(starts) == 0:
        d = series.shape[1]
        return WindowedDataset(split=split, windows=np.zeros((0, n, d)),
                               targets=np.zeros((0, horizon)),
                               target_times=np.zeros((0, horizon)), stats=stats)
    idx = starts[:, None] + np.arange(n)[None, :]
    tidx = starts[:, None] + n + np.arange(horizon)[None, :]
    return WindowedDataset(
        split=split,
        windows=series[idx],
        targets=series[tidx, -1],
        target_times=times[tidx],
        stats=stats,
    )


def split_and_window(encoded: EncodedSeries, n: int, horizon: int,
                     ratios=(0.7, 0.1, 0.2)) -> DatasetBundle:
    """Chronological split, train-fitted standardization, stride-1 windows."""
    if n < 1 or horizon < 1:
        raise ConfigError(f"window and horizon must be >= 1, got {n} and {horizon}")
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three positive fractions summing to 1, got {ratios}")
    length = len(encoded.features)
    if length < n + horizon:
        raise ConfigError(
            f"series of {length} records cannot fit one window of {n}+{horizon} steps"
        )
    train_end, val_end = _boundaries(length, ratios)
    stats = Stats.fit(encoded.features[:train_end] if train_end else encoded.features)
    series = stats.normalize(encoded.features)
    times = encoded.times

    spans = {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, length)}
    starts = {name: _window_starts(times, lo, hi, n, horizon) for name, (lo, hi) in spans.items()}
    sets = {name: _materialize(series, times, starts[name], n, horizon, name, stats)
            for name in spans}

    bundle = DatasetBundle(
        train=sets["train"], val=sets["val"], test=sets["test"],
        stats=stats, vocab=encoded.vocab, window=n, horizon=horizon,
        series=series, times=times, bounds=(train_end, val_end), starts=starts,
    )
    bundle.data_hash = _bundle_hash(bundle)
    return bundle


def _bundle_hash(bundle: DatasetBundle) -> str:
    return digest({
        "format": DATASET_FORMAT,
        "window": bundle.window,
        "horizon": bundle.horizon,
        "vocab": list(bundle.vocab),
        "bounds": list(bundle.bounds),
        "rows": int(len(bundle.series)),
        "mean": bundle.stats.mean.tolist(),
        "std": bundle.stats.std.tolist(),
    })


def prepare_dataset(csv_path, n: int = 24, horizon: int = 1,
                    ratios=(0.7, 0.1, 0.2)) -> DatasetBundle:
    """Full pipeline from CSV to windowed splits, with a run summary.

    The weather vocabulary is discovered on the training portion of the
    cleaned timeline so evaluation-only categories cannot widen the feature
    space.
    """
    parsed = parse_csv(csv_path)
    cleaned = clean(parsed.records)
    records = cleaned.records
    if not records:
        raise ConfigError(f"{csv_path}: no usable records after cleaning")
    train_end, _ = _boundaries(len(records), ratios)
    vocab = discover_vocab(records[:train_end] if train_end else records)
    encoded = encode(records, vocab=vocab)
    bundle = split_and_window(encoded, n=n, horizon=horizon, ratios=ratios)
    bundle.summary = {
        "parsed": len(parsed.records),
        "rejected": len(parsed.rejects),
        "rejects": parsed.rejects,
        "cleaning": cleaned.summary,
        "vocabulary": list(vocab),
        "feature_count": int(bundle.series.shape[1]),
        "window": n,
        "horizon": horizon,
        "ratios": list(ratios),
        "split_rows": {"train": train_end, "val": bundle.bounds[1] - train_end,
                       "test": len(records) - bundle.bounds[1]},
        "window_counts": {name: int(len(bundle.starts[name]))
                          for name in ("train", "val", "test")},
    }
    return bundle


def save_cache(bundle: DatasetBundle, path) -> None:
    """Persist the standardized series plus window bookkeeping."""
    arrays = {
        "series": bundle.series,
        "times": bundle.times,
        "mean": bundle.stats.mean,
        "std": bundle.stats.std,
        "starts_train": bundle.starts["train"].astype(np.float64),
        "starts_val": bundle.starts["val"].astype(np.float64),
        "starts_test": bundle.starts["test"].astype(np.float64),
    }
    meta = {
        "kind": DATASET_FORMAT,
        "window": bundle.window,
        "horizon": bundle.horizon,
        "vocab": list(bundle.vocab),
        "bounds": list(bundle.bounds),
        "summary": bundle.summary,
        "data_hash": bundle.data_hash,
    }
    write_blob(path, arrays, meta)


def load_cache(path) -> DatasetBundle:
    arrays, meta = read_blob(path)
    if meta.get("kind") != DATASET_FORMAT:
        raise SchemaError(f"{path}: not a dataset cache (kind={meta.get('kind')!r})")
    stats = Stats(mean=arrays["mean"], std=arrays["std"])
    n = int(meta["window"])
    horizon = int(meta["horizon"])
    series = arrays["series"]
    times = arrays["times"]
    starts = {name: arrays[f"starts_{name}"].astype(np.int64)
              for name in ("train", "val", "test")}
    sets = {name: _materialize(series, times, starts[name], n, horizon, name, stats)
            for name in ("train", "val", "test")}
    bundle = DatasetBundle(
        train=sets["train"], val=sets["val"], test=sets["test"],
        stats=stats, vocab=tuple(meta["vocab"]), window=n, horizon=horizon,
        series=series, times=times, bounds=tuple(meta["bounds"]), starts=starts,
        summary=meta.get("summary", {}), data_hash=meta.get("data_hash", ""),
    )
    return bundle


def window_before(bundle: DatasetBundle, row: int) -> np.ndarray:
    """The n standardized rows feeding a prediction of ``row``.

    Raises when fewer than n records precede the row or when the span
    crosses a timeline gap.
    """
    n = bundle.window
    if row - n < 0:
        raise UsageError(
            f"need {n} preceding records, only {row} exist before this timestamp"
        )
    span = bundle.times[row - n: row + 1]
    if np.any(np.diff(span) > MAX_GAP_SECONDS):
        raise UsageError("history window crosses a gap longer than six hours")
    return bundle.series[row - n: row]


def format_time(seconds: float) -> str:
    return _from_epoch(seconds).strftime(TIME_FORMAT)


def parse_time(text: str) -> float:
    try:
        return _to_epoch(datetime.strptime(text, TIME_FORMAT))
    except ValueError:
        raise UsageError(f"timestamp {text!r} does not match {TIME_FORMAT!r}")
