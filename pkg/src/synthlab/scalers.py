"""Standard, min-max and robust (median/IQR) scalers, plus source alignment.

A degenerate fit (negligible spread, see ``is_negligible_spread``) replaces the denominator with 1 and sets
``degenerate`` on the scaler instead of failing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("standard", "minmax", "iqr")


@dataclass(frozen=True)
class FittedScaler:
    kind: str
    center: float
    scale: float
    clip_bounds: tuple[float, float] | None = None
    degenerate: bool = False

    def transform(self, x):
        y = (np.asarray(x, dtype=np.float64) - self.center) / self.scale
        if self.clip_bounds is not None:
            y = np.clip(y, *self.clip_bounds)
        return y

    def inverse_transform(self, y):
        return np.asarray(y, dtype=np.float64) * self.scale + self.center

    @property
    def statistics(self) -> dict[str, float]:
        if self.kind == "standard":
            return {"mean": self.center, "std": self.scale}
        if self.kind == "minmax":
            return {"min": self.center, "max": self.center + self.scale}
        return {"median": self.center, "iqr": self.scale}

    def to_record(self) -> dict:
        rec = {"kind": self.kind, **self.statistics, "degenerate": self.degenerate}
        if self.clip_bounds is not None:
            rec["clip_bounds"] = list(self.clip_bounds)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "FittedScaler":
        kind = rec["kind"]
        if kind == "standard":
            center, scale = rec["mean"], rec["std"]
        elif kind == "minmax":
            center, scale = rec["min"], rec["max"] - rec["min"]
        elif kind == "iqr":
            center, scale = rec["median"], rec["iqr"]
        else:
            raise ValueError(f"unknown scaler kind {kind!r}")
        clip = rec.get("clip_bounds")
        degenerate = bool(rec.get("degenerate", False))
        if degenerate:
            scale = 1.0
        return cls(kind, float(center), float(scale), tuple(clip) if clip else None, degenerate)


def quartiles(values: np.ndarray) -> tuple[float, float, float]:
    """(Q1, median, Q3) with linear interpolation between closest ranks."""
    q1, q2, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(q2), float(q3)


SPREAD_RTOL = 10 * np.finfo(np.float64).eps
SPREAD_FLOOR = 1e-150


def is_negligible_spread(spread: float, magnitude: float) -> bool:
    """Spread below the float resolution of the data (or tiny enough to overflow 1/spread) counts as zero.

    This catches constant data whose std is a rounding residue of the mean.
    """
    return not spread > max(SPREAD_RTOL * magnitude, SPREAD_FLOOR)


def fit(kind: str, data, clip_bounds: tuple[float, float] | None = None) -> FittedScaler:
    x = np.asarray(data, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("scaler fit needs at least 2 points")
    if kind == "standard":
        center, spread = float(x.mean()), float(x.std())  # population std
    elif kind == "minmax":
        center = float(x.min())
        spread = float(x.max()) - center
    elif kind == "iqr":
        q1, center, q3 = quartiles(x)
        spread = q3 - q1
    else:
        raise ValueError(f"unknown scaler kind {kind!r}; expected one of {KINDS}")
    degenerate = is_negligible_spread(spread, float(np.abs(x).max()))
    return FittedScaler(kind, center, 1.0 if degenerate else spread, clip_bounds, degenerate)


def transform(scaler: FittedScaler, x):
    return scaler.transform(x)


def inverse_transform(scaler: FittedScaler, y):
    return scaler.inverse_transform(y)


def _check_pair(target: FittedScaler, source: FittedScaler) -> None:
    if target.kind != source.kind:
        raise ValueError(f"cannot align a {target.kind} scaler with a {source.kind} scaler")


def align_target_to_source(target: FittedScaler, source: FittedScaler, x):
    """Map target-frame values into the source dataset's value distribution."""
    _check_pair(target, source)
    return source.inverse_transform(target.transform(x))


def unalign(target: FittedScaler, source: FittedScaler, y):
    """Inverse of :func:`align_target_to_source`."""
    _check_pair(target, source)
    return target.inverse_transform(source.transform(y))
