"""Summary statistics over evaluation records and table rendering.

A ``ResultsMatrix`` holds one metric as a dense models x sources x targets grid
with NaN for missing cells. Missing cells never take part in an aggregation.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from synthlab.evaluation import EvalRecord

logger = logging.getLogger(__name__)

MISSING = "–"
STATS = ("winrate", "rank", "relmetric")


@dataclass(frozen=True)
class ResultsMatrix:
    models: tuple[str, ...]
    sources: tuple[str, ...]
    targets: tuple[str, ...]
    metric: str
    values: np.ndarray  # (models, sources, targets), NaN = missing

    def __post_init__(self):
        shape = (len(self.models), len(self.sources), len(self.targets))
        if self.values.shape != shape:
            raise ValueError(f"value grid {self.values.shape} does not match axes {shape}")
        present = self.values[~np.isnan(self.values)]
        if np.any(~np.isfinite(present)) or np.any(present < 0):
            raise ValueError("present cells must be finite and >= 0")

    @classmethod
    def from_records(
        cls,
        records: Iterable[EvalRecord],
        metric: str,
        horizon: int | None = None,
        budget: int | None = None,
    ) -> "ResultsMatrix":
        """Cells that receive several records (e.g. several horizons) hold their mean."""
        cells: dict[tuple[str, str, str], list[float]] = {}
        models, sources, targets = set(), set(), set()
        for r in records:
            if r.metric != metric:
                continue
            if horizon is not None and r.horizon != horizon:
                continue
            if budget is not None and r.budget != budget:
                continue
            models.add(r.model)
            sources.add(r.source)
            targets.add(r.target)
            if r.present:
                cells.setdefault((r.model, r.source, r.target), []).append(r.value)
        return cls.from_cells({k: float(np.mean(v)) for k, v in cells.items()}, metric, models, sources, targets)

    @classmethod
    def from_cells(cls, cells: dict, metric: str, models=(), sources=(), targets=()) -> "ResultsMatrix":
        models = tuple(sorted(set(models) | {k[0] for k in cells}))
        sources = tuple(sorted(set(sources) | {k[1] for k in cells}))
        targets = tuple(sorted(set(targets) | {k[2] for k in cells}))
        grid = np.full((len(models), len(sources), len(targets)), np.nan)
        mi = {m: i for i, m in enumerate(models)}
        si = {s: i for i, s in enumerate(sources)}
        ti = {t: i for i, t in enumerate(targets)}
        for (m, s, t), v in cells.items():
            grid[mi[m], si[s], ti[t]] = v
        grid.setflags(write=False)
        return cls(models, sources, targets, metric, grid)

    def scaled(self, factor: float) -> "ResultsMatrix":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        grid = self.values * factor
        grid.setflags(write=False)
        return ResultsMatrix(self.models, self.sources, self.targets, self.metric, grid)


@dataclass(frozen=True)
class Summary:
    stat: str
    metric: str
    index: tuple[str, ...]  # names of the key components
    values: dict  # key tuple -> float (NaN = missing)


def _minimal(values: np.ndarray) -> np.ndarray:
    """Boolean mask of the entries equal to the minimum over present values."""
    present = ~np.isnan(values)
    if not present.any():
        return present
    best = values[present].min()
    return present & (values == best)


def win_rate(matrix: ResultsMatrix, metric: str | None = None) -> Summary:
    """Per (source, model): share of the source's targets on which the model is best.

    Tied models all receive the win, so a row can sum to more than 1.
    """
    _check_metric(matrix, metric)
    out = {}
    for s, source in enumerate(matrix.sources):
        grid = matrix.values[:, s, :]  # models x targets
        scored = [t for t in range(grid.shape[1]) if not np.all(np.isnan(grid[:, t]))]
        if not scored:
            logger.warning("source %s has no results; skipped", source)
            continue
        wins = np.zeros(len(matrix.models))
        for t in scored:
            wins += _minimal(grid[:, t])
        for m, model in enumerate(matrix.models):
            out[(source, model)] = wins[m] / len(scored)
    return Summary("winrate", matrix.metric, ("source", "model"), out)


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks (1 = smallest) with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def avg_rank(matrix: ResultsMatrix, metric: str | None = None) -> Summary:
    """Per source: rank among sources within every (target, model) group, averaged over groups."""
    _check_metric(matrix, metric)
    if len(matrix.sources) < 2:
        raise ValueError("ranking sources needs at least two of them")
    totals = np.zeros(len(matrix.sources))
    counts = np.zeros(len(matrix.sources))
    for m in range(len(matrix.models)):
        for t in range(len(matrix.targets)):
            column = matrix.values[m, :, t]
            present = np.flatnonzero(~np.isnan(column))
            if present.size == 0:
                continue
            totals[present] += midranks(column[present])
            counts[present] += 1
    out = {
        (source,): (totals[s] / counts[s] if counts[s] else math.nan)
        for s, source in enumerate(matrix.sources)
    }
    return Summary("rank", matrix.metric, ("source",), out)


def relative_deviation(value: float, best: float) -> float:
    if best == 0:
        return 0.0 if value == 0 else math.inf
    return (value - best) / best


def avg_relative_metric(matrix: ResultsMatrix, metric: str | None = None) -> Summary:
    """Per (source, model): mean over targets of (value - best) / best, best taken over every model and source."""
    _check_metric(matrix, metric)
    sums: dict[tuple[str, str], list[float]] = {}
    for t in range(len(matrix.targets)):
        plane = matrix.values[:, :, t]
        if np.all(np.isnan(plane)):
            continue
        best = float(np.nanmin(plane))
        for m, model in enumerate(matrix.models):
            for s, source in enumerate(matrix.sources):
                v = plane[m, s]
                if not np.isnan(v):
                    sums.setdefault((source, model), []).append(relative_deviation(float(v), best))
    out = {}
    for source in matrix.sources:
        for model in matrix.models:
            vals = sums.get((source, model))
            out[(source, model)] = float(np.mean(vals)) if vals else math.nan
    return Summary("relmetric", matrix.metric, ("source", "model"), out)


def summarize(matrix: ResultsMatrix, stat: str) -> Summary:
    if stat == "winrate":
        return win_rate(matrix)
    if stat == "rank":
        return avg_rank(matrix)
    if stat == "relmetric":
        return avg_relative_metric(matrix)
    raise ValueError(f"unknown statistic {stat!r}; choose from {STATS}")


def _check_metric(matrix: ResultsMatrix, metric: str | None) -> None:
    if metric is not None and metric != matrix.metric:
        raise ValueError(f"matrix holds {matrix.metric!r}, asked for {metric!r}")


# rendering ------------------------------------------------------------------------

def summary_table(summary: Summary) -> tuple[list[str], list[list]]:
    """Pivot to rows: two-part keys become (first part) x (second part) tables."""
    if len(summary.index) == 2:
        rows_keys = sorted({k[0] for k in summary.values})
        cols = sorted({k[1] for k in summary.values})
        header = [summary.index[0]] + cols
        rows = [[r] + [summary.values.get((r, c), math.nan) for c in cols] for r in rows_keys]
    else:
        header = list(summary.index) + [summary.stat]
        rows = [list(k) + [summary.values[k]] for k in sorted(summary.values)]
    return header, rows


def matrix_table(matrix: ResultsMatrix) -> tuple[list[str], list[list]]:
    header = ["model", "source"] + list(matrix.targets)
    rows = []
    for m, model in enumerate(matrix.models):
        for s, source in enumerate(matrix.sources):
            rows.append([model, source] + [float(v) for v in matrix.values[m, s]])
    return header, rows


def _cell_md(value, digits: int) -> str:
    if isinstance(value, str):
        return value
    if value is None or math.isnan(value):
        return MISSING
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def _cell_csv(value) -> str:
    if isinstance(value, str):
        return value
    if value is None or math.isnan(value):
        return MISSING
    return repr(float(value))


def render_table(header: Sequence[str], rows: Sequence[Sequence], fmt: str = "md", digits: int = 3) -> str:
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(_cell_md(v, digits) for v in row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell_csv(v) for v in row])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}; use md or csv")


def render(obj, fmt: str = "md", digits: int | None = None) -> str:
    """Render a Summary or a ResultsMatrix deterministically (sorted keys, "–" for missing)."""
    if isinstance(obj, ResultsMatrix):
        header, rows = matrix_table(obj)
        return render_table(header, rows, fmt, 3 if digits is None else digits)
    header, rows = summary_table(obj)
    if digits is None:
        digits = 2 if obj.stat == "winrate" else 3
    return render_table(header, rows, fmt, digits)


def parse_csv(text: str, label_columns: int = 1) -> tuple[list[str], list[list]]:
    """Inverse of the CSV renderer: label columns stay strings, others become floats (NaN for missing)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for row in reader:
        labels = row[:label_columns]
        vals = [math.nan if v == MISSING else float(v) for v in row[label_columns:]]
        rows.append(labels + vals)
    return header, rows
