"""Forecast metrics and the evaluation protocols.

Protocols:

* long-term: stride-1 sliding windows over the test segment, per horizon;
* single-shot: one forecast per series from everything before its final H points;
* few-shot: refit supervised models on the last B train points for each budget B;
* zero-shot transfer: a model fitted on a source dataset forecasts a target,
  optionally through source/target scaler alignment.

Forecasters are duck-typed: ``name``, ``look_back``, ``zero_shot``,
``max_horizon``, ``fit(train_series) -> fitted`` and
``predict(inputs (N, L), horizon) -> (N, horizon)``. Multichannel data is
handled channel-independently.

Unless ``standardized=False``, errors are measured after z-scoring every
channel with the statistics of the full training segment, so that scores stay
comparable across budgets and models.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from synthlab import datasets as D
from synthlab import scalers
from synthlab.errors import InsufficientDataError, ShapeError

OK = "ok"
INSUFFICIENT = "insufficient-data"
OVERFLOW = "horizon-overflow"


# metrics ----------------------------------------------------------------------

def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != truth shape {t.shape}")
    if p.size == 0:
        raise ShapeError("metrics need at least one point")
    return p, t


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean((p - t) ** 2))


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def smape(pred, truth) -> float:
    """Percentage in [0, 200]; terms with |p| + |t| == 0 count as 0."""
    p, t = _pair(pred, truth)
    denom = np.abs(p) + np.abs(t)
    safe = np.where(denom == 0, 1.0, denom)
    terms = np.where(denom == 0, 0.0, np.abs(p - t) / safe)
    return float(200.0 * terms.mean())


METRICS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {"mse": mse, "mae": mae, "smape": smape}


def _metric_fns(names: Sequence[str]):
    unknown = [n for n in names if n not in METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown}; choose from {sorted(METRICS)}")
    return [(n, METRICS[n]) for n in names]


# records --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    model: str
    source: str
    target: str
    horizon: int
    metric: str
    value: float
    budget: int | None = None
    status: str = OK

    @property
    def key(self) -> tuple:
        return (self.model, self.source, self.target, self.horizon, -1 if self.budget is None else self.budget, self.metric)

    @property
    def present(self) -> bool:
        return self.status == OK and math.isfinite(self.value)


def sort_records(records: Iterable[EvalRecord]) -> list[EvalRecord]:
    return sorted(records, key=lambda r: r.key)


_FIELDS = [f.name for f in fields(EvalRecord)]


def write_records_csv(records: Sequence[EvalRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FIELDS)
        for r in records:
            writer.writerow([
                r.model, r.source, r.target, r.horizon, r.metric, repr(float(r.value)),
                "" if r.budget is None else r.budget, r.status,
            ])


def read_records_csv(path) -> list[EvalRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(
                model=row["model"], source=row["source"], target=row["target"],
                horizon=int(row["horizon"]), metric=row["metric"], value=float(row["value"]),
                budget=int(row["budget"]) if row.get("budget") else None,
                status=row.get("status") or OK,
            ))
    return out


def write_records_jsonl(records: Sequence[EvalRecord], path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            rec = asdict(r)
            if not math.isfinite(rec["value"]):
                rec["value"] = None
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _missing(model, source, target, horizon, metrics, status, budget=None) -> list[EvalRecord]:
    return [EvalRecord(model, source, target, horizon, m, math.nan, budget, status) for m in metrics]


# shared machinery ------------------------------------------------------------------

def _frame(store: D.SeriesStore, standardized: bool) -> list[scalers.FittedScaler] | None:
    if not standardized or store.standardized:
        return None
    return list(store.train_scalers)


def _score(preds: np.ndarray, truths: np.ndarray, frame, metric_fns, reduce: str = "mean") -> dict[str, float]:
    """preds/truths: (N, H, C) raw units.

    ``reduce="mean"`` averages over windows and channels; ``"median"`` takes
    the median of the per-channel scores.
    """
    if frame is not None:
        centers = np.array([s.center for s in frame])
        scales = np.array([s.scale for s in frame])
        preds = (preds - centers) / scales
        truths = (truths - centers) / scales
    if reduce == "mean":
        return {name: fn(preds, truths) for name, fn in metric_fns}
    if reduce == "median":
        return {
            name: float(np.median([fn(preds[..., c], truths[..., c]) for c in range(preds.shape[-1])]))
            for name, fn in metric_fns
        }
    raise ValueError("reduce must be 'mean' or 'median'")


def _overflows(forecaster, horizon: int) -> bool:
    cap = getattr(forecaster, "max_horizon", None)
    return cap is not None and horizon > cap


def _resolve(model_or_factory, horizon: int):
    """Accept a forecaster or a ``horizon -> forecaster`` factory."""
    if hasattr(model_or_factory, "predict"):
        return model_or_factory
    return model_or_factory(horizon)


def _fit_per_channel(forecaster, store: D.SeriesStore) -> list:
    if getattr(forecaster, "zero_shot", False) or getattr(forecaster, "fitted", False):
        return [forecaster] * store.n_channels
    train = store.train_values(purpose="fit")
    return [forecaster.fit(train[:, c].copy()) for c in range(store.n_channels)]


def _predict_channels(fitted: Sequence, inputs: np.ndarray, horizon: int) -> np.ndarray:
    """inputs (N, L, C) -> predictions (N, H, C)."""
    out = np.empty((inputs.shape[0], horizon, inputs.shape[2]))
    for c, model in enumerate(fitted):
        lb = min(getattr(model, "look_back", inputs.shape[1]) or inputs.shape[1], inputs.shape[1])
        out[:, :, c] = model.predict(inputs[:, -lb:, c], horizon)
    return out


def _window_length(forecaster, window_length: int | None) -> int:
    if window_length is not None:
        return window_length
    return int(getattr(forecaster, "look_back", 1) or 1)


# long-term ------------------------------------------------------------------------

def evaluate_long_term(
    model,
    store: D.SeriesStore,
    horizons: Sequence[int] | None = None,
    metrics: Sequence[str] = ("mse", "mae"),
    *,
    source: str = "self",
    standardized: bool = True,
    window_length: int | None = None,
    segment: str = "test",
) -> list[EvalRecord]:
    """One record per (horizon, metric); horizon overflow yields explicit missing records."""
    metric_fns = _metric_fns(metrics)
    horizons = tuple(horizons or store.meta.horizons)
    frame = _frame(store, standardized)
    records: list[EvalRecord] = []
    for h in horizons:
        forecaster = _resolve(model, h)
        name = forecaster.name
        if _overflows(forecaster, h):
            records += _missing(name, source, store.meta.name, h, metrics, OVERFLOW)
            continue
        try:
            fitted = _fit_per_channel(forecaster, store)
        except InsufficientDataError:
            records += _missing(name, source, store.meta.name, h, metrics, INSUFFICIENT)
            continue
        lb = _window_length(forecaster, window_length)
        try:
            inputs, truths = D.window_arrays(store, segment, lb, h)
        except InsufficientDataError:
            records += _missing(name, source, store.meta.name, h, metrics, INSUFFICIENT)
            continue
        preds = _predict_channels(fitted, inputs, h)
        for metric, value in _score(preds, truths, frame, metric_fns).items():
            records.append(EvalRecord(name, source, store.meta.name, h, metric, value))
    return records


# single-shot ------------------------------------------------------------------------

def evaluate_single_shot(
    model,
    series: Sequence[np.ndarray],
    horizon: int,
    metrics: Sequence[str] = ("smape", "mae", "mse"),
    *,
    source: str = "self",
    target: str = "collection",
    look_back: int | None = None,
    frames: Sequence[scalers.FittedScaler] | None = None,
) -> list[EvalRecord]:
    """Forecast each series once from the points before its final ``horizon``.

    Series shorter than look-back + horizon are skipped; the count is reported
    as a ``skipped`` record.
    """
    metric_fns = _metric_fns(metrics)
    forecaster = _resolve(model, horizon)
    name = forecaster.name
    if _overflows(forecaster, horizon):
        return _missing(name, source, target, horizon, metrics, OVERFLOW)
    lb = _window_length(forecaster, look_back)
    per_metric: dict[str, list[float]] = {m: [] for m in metrics}
    skipped = 0
    for i, s in enumerate(series):
        s = np.asarray(s, dtype=np.float64)
        if s.size < lb + horizon:
            skipped += 1
            continue
        history, truth = s[-horizon - lb : -horizon], s[-horizon:]
        pred = forecaster.predict(history[None, :], horizon)[0]
        if frames is not None:
            pred, truth = frames[i].transform(pred), frames[i].transform(truth)
        for metric, fn in metric_fns:
            per_metric[metric].append(fn(pred, truth))
    records = []
    for metric in metrics:
        vals = per_metric[metric]
        if vals:
            records.append(EvalRecord(name, source, target, horizon, metric, float(np.mean(vals))))
        else:
            records.append(EvalRecord(name, source, target, horizon, metric, math.nan, status=INSUFFICIENT))
    records.append(EvalRecord(name, source, target, horizon, "skipped", float(skipped)))
    return records


# few-shot ---------------------------------------------------------------------------

def evaluate_fewshot(
    model,
    store: D.SeriesStore,
    plan: D.BudgetPlan,
    horizon: int,
    metrics: Sequence[str] = ("mse", "mae"),
    *,
    source: str = "self",
    standardized: bool = True,
    window_length: int | None = None,
    reduce: str = "mean",
) -> list[EvalRecord]:
    """Records keyed by budget.

    Supervised models are refitted on the budget slice. Zero-shot models fit
    nothing but may look at no more than ``B`` points of context, so their
    scores stop changing once ``B`` reaches their look-back.
    """
    metric_fns = _metric_fns(metrics)
    frame = _frame(store, standardized)  # fixed: full-train statistics
    forecaster = _resolve(model, horizon)
    name = forecaster.name
    target = store.meta.name
    if _overflows(forecaster, horizon):
        return [r for b in plan.budgets for r in _missing(name, source, target, horizon, metrics, OVERFLOW, b)]
    lb = _window_length(forecaster, window_length)
    inputs, truths = D.window_arrays(store, "test", lb, horizon)
    records: list[EvalRecord] = []
    for budget in plan.budgets:
        sliced = D.fewshot_slice(store, budget)
        if getattr(forecaster, "zero_shot", False):
            context = min(budget, inputs.shape[1])
            if context < 2:
                records += _missing(name, source, target, horizon, metrics, INSUFFICIENT, budget)
                continue
            preds = _predict_channels([forecaster] * store.n_channels, inputs[:, -context:], horizon)
        else:
            try:
                fitted = _fit_per_channel(forecaster, sliced)
            except InsufficientDataError:
                records += _missing(name, source, target, horizon, metrics, INSUFFICIENT, budget)
                continue
            preds = _predict_channels(fitted, inputs, horizon)
        for metric, value in _score(preds, truths, frame, metric_fns, reduce).items():
            records.append(EvalRecord(name, source, target, horizon, metric, value, budget))
    return records


# zero-shot transfer --------------------------------------------------------------------

TRANSFER_LOOK_BACKS = (104, 148)


@dataclass
class TransferJob:
    model: object  # fitted forecaster trained on the source
    source: str
    target: D.SeriesStore
    scaler_kind: str | None = "standard"
    look_back: int = 104
    horizon: int = 6
    source_scaler: scalers.FittedScaler | None = None
    per: str = "series"  # or "dataset"
    metrics: tuple[str, ...] = ("mse", "mae", "smape")
    standardized: bool = True

    def __post_init__(self):
        model_lb = getattr(self.model, "look_back", None)
        if model_lb is not None and model_lb != self.look_back:
            raise ValueError(f"job look-back {self.look_back} != model look-back {model_lb}")
        cap = getattr(self.model, "horizon", None) or getattr(self.model, "max_horizon", None)
        if cap is not None and self.horizon > cap:
            raise ValueError(f"horizon {self.horizon} exceeds what the model can produce ({cap})")
        if self.per not in ("series", "dataset"):
            raise ValueError("per must be 'series' or 'dataset'")
        if self.scaler_kind is not None and self.source_scaler is None:
            raise ValueError("alignment needs a source scaler")
        if self.scaler_kind is not None and self.source_scaler.kind != self.scaler_kind:
            raise ValueError("source scaler kind differs from the job's scaler kind")


def fit_source_scaler(kind: str, store_or_series) -> scalers.FittedScaler:
    """Source distribution statistics from training data only, pooled over channels/series."""
    if isinstance(store_or_series, D.SeriesStore):
        data = store_or_series.train_values(purpose="fit").ravel()
    else:
        data = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in store_or_series])
    return scalers.fit(kind, data)


def train_on_source(
    kind: str, store: D.SeriesStore, look_back: int, horizon: int, **kwargs
):
    """One shared supervised model fitted on every channel's full training part."""
    from synthlab.baselines import LinearForecaster

    train = store.train_values(purpose="fit")
    series = [train[:, c].copy() for c in range(store.n_channels)]
    return LinearForecaster(look_back, horizon, kind, **kwargs).fit(series)


def _transfer_predict(job: TransferJob, inputs: np.ndarray, channel: int) -> np.ndarray:
    """inputs (N, L) target units -> (N, H) target units."""
    h = job.horizon
    if job.scaler_kind is None:
        return job.model.predict(inputs, h)
    src = job.source_scaler
    if job.per == "dataset":
        lo, hi = job.target.train_range
        tgt = scalers.fit(job.scaler_kind, job.target.read(lo, hi, purpose="fit", channel=channel))
        aligned = scalers.align_target_to_source(tgt, src, inputs)
        return scalers.unalign(tgt, src, job.model.predict(aligned, h))
    out = np.empty((inputs.shape[0], h))
    for i, row in enumerate(inputs):
        tgt = scalers.fit(job.scaler_kind, row)
        aligned = scalers.align_target_to_source(tgt, src, row)
        out[i] = scalers.unalign(tgt, src, job.model.predict(aligned[None, :], h)[0])
    return out


def evaluate_zero_shot_transfer(job: TransferJob, segment: str = "test") -> list[EvalRecord]:
    metric_fns = _metric_fns(job.metrics)
    store = job.target
    inputs, truths = D.window_arrays(store, segment, job.look_back, job.horizon)
    preds = np.empty_like(truths)
    for c in range(store.n_channels):
        preds[:, :, c] = _transfer_predict(job, inputs[:, :, c], c)
    frame = _frame(store, job.standardized)
    name = getattr(job.model, "name", "model")
    if job.scaler_kind is not None:
        name = f"{name}+{job.scaler_kind}"
    return [
        EvalRecord(name, job.source, store.meta.name, job.horizon, metric, value)
        for metric, value in _score(preds, truths, frame, metric_fns).items()
    ]


# parallel runner -----------------------------------------------------------------------

def run_jobs(jobs: Sequence[Callable[[], list[EvalRecord]]], n_jobs: int = 1) -> list[EvalRecord]:
    """Run independent evaluation jobs; the merged output is sorted, so ``n_jobs`` never changes it."""
    if n_jobs <= 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda job: job(), jobs))
    return sort_records(r for batch in results for r in batch)
