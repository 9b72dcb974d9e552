"""Benchmark-style datasets: CSV ingestion, chronological splits, sliding
windows, few-shot budget plans, and a synthetic stand-in corpus.

Every read of a store's values goes through :meth:`SeriesStore.read`, which
appends ``(purpose, start, stop)`` to ``access_log``; tests use it to prove
that fitting never touches validation or test rows.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from synthlab import prior as P
from synthlab import scalers
from synthlab.errors import ConfigError, IngestionError, InsufficientDataError, SplitError

ETT_RATIOS = (0.6, 0.2, 0.2)
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
LONG_HORIZONS = (96, 192, 336, 720)
SHORT_HORIZONS = (24, 36, 48, 60)


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    frequency: str = ""
    period: int = 1
    horizons: tuple[int, ...] = LONG_HORIZONS
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    channels: int | None = None
    budget_kind: str = "geometric"
    path: str | None = None

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.ratios):
            raise ConfigError(f"{self.name}: split ratios must be non-negative and sum to 1")
        if self.period < 1:
            raise ConfigError(f"{self.name}: period must be >= 1")
        if any(h < 1 or h > 720 for h in self.horizons):
            raise ConfigError(f"{self.name}: horizons must lie in [1, 720]")
        if self.budget_kind not in ("geometric", "arithmetic"):
            raise ConfigError(f"{self.name}: budget_kind must be geometric or arithmetic")

    def to_record(self) -> dict:
        return {
            "name": self.name, "path": self.path, "frequency": self.frequency,
            "period": self.period, "horizons": list(self.horizons), "ratios": list(self.ratios),
            "channels": self.channels, "budget_kind": self.budget_kind,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DatasetMeta":
        return cls(
            name=rec["name"],
            frequency=rec.get("frequency", ""),
            period=int(rec.get("period", 1)),
            horizons=tuple(int(h) for h in rec.get("horizons", LONG_HORIZONS)),
            ratios=tuple(float(r) for r in rec.get("ratios", DEFAULT_RATIOS)),
            channels=rec.get("channels"),
            budget_kind=rec.get("budget_kind", "geometric"),
            path=rec.get("path"),
        )


Range = tuple[int, int]


def split(length: int, ratios: Sequence[float]) -> tuple[Range, Range, Range]:
    """Contiguous train/val/test ranges with floor-rounded boundaries."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise SplitError(f"bad split ratios {tuple(ratios)}")
    # the epsilon keeps e.g. 100 * (0.7 + 0.1) = 79.999... from flooring to 79
    b1 = math.floor(length * ratios[0] + 1e-9)
    b2 = math.floor(length * (ratios[0] + ratios[1]) + 1e-9)
    parts = ((0, b1), (b1, b2), (b2, length))
    for label, (lo, hi) in zip(("train", "val", "test"), parts):
        if hi <= lo:
            raise SplitError(f"{label} segment is empty for length {length} and ratios {tuple(ratios)}")
    return parts


@dataclass
class SeriesStore:
    values: np.ndarray  # (T, C)
    channels: list[str]
    timestamps: list[str]
    meta: DatasetMeta
    train_range: Range
    val_range: Range
    test_range: Range
    train_scalers: list[scalers.FittedScaler]
    standardized: bool = False
    access_log: list[tuple[str, int, int]] = field(default_factory=list)

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def segment(self, name: str) -> Range:
        return {"train": self.train_range, "val": self.val_range, "test": self.test_range}[name]

    def read(self, start: int, stop: int, purpose: str = "read", channel: int | None = None) -> np.ndarray:
        self.access_log.append((purpose, start, stop))
        block = self.values[start:stop]
        return block if channel is None else block[:, channel]

    def train_values(self, purpose: str = "fit") -> np.ndarray:
        return self.read(*self.train_range, purpose=purpose)

    def train_stats(self) -> list[tuple[float, float]]:
        return [(s.center, s.scale) for s in self.train_scalers]


def _fit_train_scalers(values: np.ndarray, train_range: Range) -> list[scalers.FittedScaler]:
    lo, hi = train_range
    out = []
    for c in range(values.shape[1]):
        col = values[lo:hi, c]
        if col.size < 2:  # a one-point train part has no spread to fit
            out.append(scalers.FittedScaler("standard", float(col.mean()), 1.0, degenerate=True))
        else:
            out.append(scalers.fit("standard", col))
    return out


def from_array(
    values, meta: DatasetMeta, channels: Sequence[str] | None = None, timestamps: Sequence[str] | None = None
) -> SeriesStore:
    values = np.array(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] == 0:
        raise IngestionError("values must be a non-empty (time, channel) array")
    if not np.isfinite(values).all():
        bad = int(np.argwhere(~np.isfinite(values))[0, 0])
        raise IngestionError("non-finite value", row=bad)
    values.setflags(write=False)
    channels = list(channels) if channels is not None else [f"c{i}" for i in range(values.shape[1])]
    timestamps = list(timestamps) if timestamps is not None else [str(i) for i in range(values.shape[0])]
    train, val, test = split(values.shape[0], meta.ratios)
    return SeriesStore(
        values, channels, timestamps, meta, train, val, test, _fit_train_scalers(values, train)
    )


def load_csv(path, meta: DatasetMeta) -> SeriesStore:
    """Header = date column + channel names; every cell after the first column must be a finite number.

    Error rows are reported as 1-based line numbers of the file.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestionError(f"{path}: empty file")
        if len(header) < 2:
            raise IngestionError(f"{path}: header needs a date column and at least one channel", row=1)
        width = len(header)
        stamps: list[str] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise IngestionError(f"expected {width} cells, found {len(row)}", row=line_no)
            try:
                numbers = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise IngestionError(f"non-numeric cell ({exc})", row=line_no) from None
            if not all(math.isfinite(v) for v in numbers):
                raise IngestionError("NaN or infinite cell", row=line_no)
            stamps.append(row[0])
            rows.append(numbers)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    if meta.channels is not None and meta.channels != width - 1:
        raise IngestionError(f"{path}: registry says {meta.channels} channels, file has {width - 1}")
    return from_array(np.array(rows), meta, header[1:], stamps)


def write_csv(store: SeriesStore, path, date_column: str = "date") -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([date_column, *store.channels])
        for stamp, row in zip(store.timestamps, store.values):
            writer.writerow([stamp, *(repr(float(v)) for v in row)])


def standardize(store: SeriesStore) -> SeriesStore:
    """Channel-wise z-scores using train-segment statistics only."""
    lo, hi = store.train_range
    train = store.read(lo, hi, purpose="fit")
    fitted = _fit_train_scalers(train, (0, train.shape[0]))
    values = np.column_stack([s.transform(store.values[:, c]) for c, s in enumerate(fitted)])
    values.setflags(write=False)
    return replace(store, values=values, train_scalers=fitted, standardized=True, access_log=[])


def destandardize(store: SeriesStore, values: np.ndarray, channel: int) -> np.ndarray:
    return store.train_scalers[channel].inverse_transform(values)


def window_count(length: int, look_back: int, horizon: int, stride: int = 1) -> int:
    span = length - look_back - horizon
    return 0 if span < 0 else span // stride + 1


def window_arrays(
    store: SeriesStore, segment: str, look_back: int, horizon: int, stride: int = 1, purpose: str = "eval"
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked windows: inputs (N, look_back, C) and targets (N, horizon, C)."""
    lo, hi = store.segment(segment)
    count = window_count(hi - lo, look_back, horizon, stride)
    if count < 1:
        raise InsufficientDataError(
            f"{segment} segment of length {hi - lo} is shorter than look-back {look_back} + horizon {horizon}"
        )
    block = store.read(lo, hi, purpose=purpose)
    starts = np.arange(count) * stride
    view = np.lib.stride_tricks.sliding_window_view(block, look_back + horizon, axis=0)
    picked = view[starts]  # (N, C, L+H)
    picked = np.transpose(picked, (0, 2, 1))
    return picked[:, :look_back].copy(), picked[:, look_back:].copy()


def windows(
    store: SeriesStore, segment: str, look_back: int, horizon: int, stride: int = 1
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Every complete (input, target) window of a segment, the last partial batch included."""
    inputs, targets = window_arrays(store, segment, look_back, horizon, stride)
    yield from zip(inputs, targets)


@dataclass(frozen=True)
class BudgetPlan:
    period: int
    budgets: tuple[int, ...]

    def __post_init__(self):
        if any(b < self.period for b in self.budgets):
            raise ConfigError("every budget must be at least one period")
        if any(a >= b for a, b in zip(self.budgets, self.budgets[1:])):
            raise ConfigError("budgets must be strictly increasing")


def budgets_for(period: int, kind: str = "geometric", steps: int = 8) -> BudgetPlan:
    """P * 2^k (k = 0..7) for long datasets, P * k (k = 1..8) for short ones."""
    if period < 1:
        raise ConfigError("period must be >= 1")
    if kind == "geometric":
        return BudgetPlan(period, tuple(period * 2**k for k in range(steps)))
    if kind == "arithmetic":
        return BudgetPlan(period, tuple(period * k for k in range(1, steps + 1)))
    raise ConfigError(f"unknown budget kind {kind!r}")


def fewshot_slice(store: SeriesStore, budget: int) -> SeriesStore:
    """Keep only the last ``budget`` train points (those adjacent to validation)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    lo, hi = store.train_range
    new_lo = max(lo, hi - budget)
    train = (new_lo, hi)
    return replace(
        store,
        train_range=train,
        train_scalers=_fit_train_scalers(store.values, train),
        access_log=store.access_log,
    )


# registry ----------------------------------------------------------------------

def load_registry(path) -> dict[str, DatasetMeta]:
    """JSON registry: ``{"datasets": [{name, path, frequency, period, horizons, ratios, ...}]}``.

    Relative dataset paths resolve against the registry's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read registry {path}: {exc}") from exc
    out: dict[str, DatasetMeta] = {}
    for rec in doc.get("datasets", []):
        meta = DatasetMeta.from_record(rec)
        if meta.path is not None and not Path(meta.path).is_absolute():
            meta = replace(meta, path=str(path.parent / meta.path))
        out[meta.name] = meta
    return out


def write_registry(metas: Sequence[DatasetMeta], path) -> None:
    Path(path).write_text(json.dumps({"datasets": [m.to_record() for m in metas]}, indent=2) + "\n")


def load_dataset(meta: DatasetMeta) -> SeriesStore:
    if meta.path is None:
        raise ConfigError(f"dataset {meta.name!r} has no path")
    return load_csv(meta.path, meta)


# synthetic stand-in corpus -------------------------------------------------------------

def ett_like_values(
    seed: int = 0, length: int = 6000, channels: int = 7, period: int = 24, noise: float = 0.3
) -> np.ndarray:
    """Hourly-looking multichannel series built from prior components.

    Each channel mixes a daily cycle, a weaker weekly cycle (both rendered by
    the prior's Fourier seasonality), a gentle prior trend and AR(1) noise.
    """
    rng = np.random.default_rng([seed, 7919])
    cols = []
    for _ in range(channels):
        daily = P.render_seasonal(
            rng.uniform(-2, 2, size=(int(rng.integers(3, 8)), 2)) @ np.array([1, 1j]), period, length
        )
        weekly_period = 7 * period
        weekly = P.render_seasonal(
            rng.uniform(-2, 2, size=(3, 2)) @ np.array([1, 1j]), weekly_period, length
        )
        daily /= daily.std() or 1.0
        weekly /= weekly.std() or 1.0
        kind = rng.choice(["linear", "log1p", "none"])
        trend = P.render_trend(str(kind), rng.uniform(-1, 1) * (0.0005 if kind == "linear" else 0.3), length)
        ar = np.empty(length)
        eps = rng.normal(0, noise, size=length)
        ar[0] = eps[0]
        for t in range(1, length):
            ar[t] = 0.7 * ar[t - 1] + eps[t]
        level, scale = rng.uniform(-5, 20), rng.uniform(0.5, 4)
        cols.append(level + scale * (daily + 0.4 * weekly + trend + ar))
    return np.column_stack(cols)


def ett_like_store(seed: int = 0, length: int = 6000, name: str = "ETT-synth") -> SeriesStore:
    meta = DatasetMeta(name=name, frequency="1h", period=24, horizons=LONG_HORIZONS, ratios=ETT_RATIOS, channels=7)
    stamps = [f"t{i}" for i in range(length)]
    return from_array(ett_like_values(seed, length), meta, [f"ch{i}" for i in range(7)], stamps)


def write_corpus(directory, seed: int = 0, length: int = 6000, names: Sequence[str] = ("ETT-synth",)) -> Path:
    """Write one stand-in corpus CSV per name plus a registry listing them; returns the registry path.

    Dataset ``i`` is drawn with seed ``seed + i``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    metas = []
    for i, name in enumerate(names):
        store = ett_like_store(seed + i, length, name)
        csv_path = directory / f"{name}.csv"
        write_csv(store, csv_path)
        metas.append(replace(store.meta, path=csv_path.name))
    registry = directory / "registry.json"
    write_registry(metas, registry)
    return registry
