"""Supervised reference forecasters: seasonal naive, last value, ridge-linear and
decomposition-linear (moving-average trend + remainder, one linear map each).

Linear models are fitted in closed form through the normal equations. The
bias is left unpenalised, so a very large ridge drives the forecast to the
mean target window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synthlab.errors import InsufficientDataError

DEFAULT_RIDGE = 1e-6
DEFAULT_KERNEL = 25


def last_value(history, horizon: int) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    return np.repeat(history[..., -1:], horizon, axis=-1)


def seasonal_naive(history, period: int, horizon: int) -> np.ndarray:
    """Repeat the last full cycle; falls back to last value when history < period."""
    history = np.asarray(history, dtype=np.float64)
    n = history.shape[-1]
    if period < 1 or n < period:
        return last_value(history, horizon)
    idx = n - period + (np.arange(horizon) % period)
    return history[..., idx]


def sliding_windows(series, look_back: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """All (input, continuation) pairs lying wholly inside ``series``."""
    series = np.asarray(series, dtype=np.float64)
    count = series.size - look_back - horizon + 1
    if count < 1:
        return np.empty((0, look_back)), np.empty((0, horizon))
    view = np.lib.stride_tricks.sliding_window_view(series, look_back + horizon)[:count]
    return view[:, :look_back].copy(), view[:, look_back:].copy()


def _pooled_windows(train, look_back: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(train, np.ndarray) and train.ndim == 1:
        pieces = [train]
    else:
        pieces = [np.asarray(s, dtype=np.float64) for s in train]
    xs, ys = zip(*(sliding_windows(s, look_back, horizon) for s in pieces))
    return np.concatenate(xs), np.concatenate(ys)


def ridge_solve(x: np.ndarray, y: np.ndarray, ridge: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights (features, outputs) and bias for ``y ≈ x @ W + b`` with an unpenalised bias."""
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    if ridge == 0:
        # unregularised: minimum-norm least squares copes with collinear windows
        weights = np.linalg.lstsq(xc, yc, rcond=None)[0]
        return weights, y_mean - x_mean @ weights
    gram = xc.T @ xc
    gram[np.diag_indices_from(gram)] += ridge
    weights = np.linalg.solve(gram, xc.T @ yc)
    return weights, y_mean - x_mean @ weights


@dataclass
class LinearDirectModel:
    weight: np.ndarray  # (H, L)
    bias: np.ndarray  # (H,)
    look_back: int
    horizon: int

    def predict(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        return x[..., -self.look_back :] @ self.weight.T + self.bias


def fit_linear_direct(train, look_back: int, horizon: int, ridge: float = DEFAULT_RIDGE) -> LinearDirectModel:
    """Ridge map from length-``look_back`` windows to the next ``horizon`` points.

    ``train`` is one series or a sequence of series whose windows are pooled.
    """
    x, y = _pooled_windows(train, look_back, horizon)
    if x.shape[0] < 1:
        raise InsufficientDataError(
            f"no training window of length {look_back + horizon} fits in the training data"
        )
    weights, bias = ridge_solve(x, y, ridge)
    return LinearDirectModel(weights.T.copy(), bias, look_back, horizon)


def moving_average(x, kernel: int) -> np.ndarray:
    """Centred moving average over the last axis with edge-replicated padding."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("moving-average kernel must be a positive odd integer")
    x = np.asarray(x, dtype=np.float64)
    half = (kernel - 1) // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    padded = np.pad(x, pad, mode="edge")
    csum = np.cumsum(padded, axis=-1)
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), csum], axis=-1)
    return (csum[..., kernel:] - csum[..., :-kernel]) / kernel


def decompose(x, kernel: int = DEFAULT_KERNEL) -> tuple[np.ndarray, np.ndarray]:
    trend = moving_average(x, kernel)
    return trend, np.asarray(x, dtype=np.float64) - trend


@dataclass
class DecompLinearModel:
    kernel: int
    trend: LinearDirectModel
    remainder: LinearDirectModel

    @property
    def look_back(self) -> int:
        return self.trend.look_back

    @property
    def horizon(self) -> int:
        return self.trend.horizon

    def predict(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)[..., -self.look_back :]
        trend, rem = decompose(x, self.kernel)
        return self.trend.predict(trend) + self.remainder.predict(rem)


def fit_decomp_linear(
    train, look_back: int, horizon: int, kernel: int = DEFAULT_KERNEL, ridge: float = DEFAULT_RIDGE
) -> DecompLinearModel:
    """Both branch maps are solved jointly so their summed output fits the target."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("moving-average kernel must be a positive odd integer")
    x, y = _pooled_windows(train, look_back, horizon)
    if x.shape[0] < 1:
        raise InsufficientDataError(
            f"no training window of length {look_back + horizon} fits in the training data"
        )
    trend, rem = decompose(x, kernel)
    weights, bias = ridge_solve(np.concatenate([trend, rem], axis=1), y, ridge)
    trend_model = LinearDirectModel(weights[:look_back].T.copy(), bias, look_back, horizon)
    rem_model = LinearDirectModel(weights[look_back:].T.copy(), np.zeros(horizon), look_back, horizon)
    return DecompLinearModel(kernel, trend_model, rem_model)


# harness adapters ---------------------------------------------------------------

class LastValueForecaster:
    zero_shot = True
    max_horizon = None

    def __init__(self, look_back: int = 1, name: str = "last"):
        self.look_back = look_back
        self.name = name

    def fit(self, train):
        return self

    def predict(self, inputs, horizon: int) -> np.ndarray:
        return last_value(inputs, horizon)


class SeasonalNaiveForecaster:
    zero_shot = True
    max_horizon = None

    def __init__(self, period: int, look_back: int | None = None, name: str = "snaive"):
        self.period = period
        self.look_back = look_back or period
        self.name = name

    def fit(self, train):
        return self

    def predict(self, inputs, horizon: int) -> np.ndarray:
        return seasonal_naive(inputs, self.period, horizon)


class LinearForecaster:
    """Supervised adapter; ``kind`` is ``linear`` or ``dlinear``. Fitted per horizon."""

    zero_shot = False

    def __init__(
        self,
        look_back: int,
        horizon: int,
        kind: str = "linear",
        kernel: int = DEFAULT_KERNEL,
        ridge: float = DEFAULT_RIDGE,
        name: str | None = None,
    ):
        if kind not in ("linear", "dlinear"):
            raise ValueError(f"unknown linear kind {kind!r}")
        self.look_back = look_back
        self.horizon = horizon
        self.kind = kind
        self.kernel = kernel
        self.ridge = ridge
        self.name = name or kind
        self.model: LinearDirectModel | DecompLinearModel | None = None

    @property
    def fitted(self) -> bool:
        return self.model is not None

    @property
    def max_horizon(self) -> int | None:
        return self.horizon if self.fitted else None

    def fit(self, train) -> "LinearForecaster":
        if self.kind == "linear":
            model = fit_linear_direct(train, self.look_back, self.horizon, self.ridge)
        else:
            model = fit_decomp_linear(train, self.look_back, self.horizon, self.kernel, self.ridge)
        fitted = LinearForecaster(self.look_back, self.horizon, self.kind, self.kernel, self.ridge, self.name)
        fitted.model = model
        return fitted

    def predict(self, inputs, horizon: int) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("LinearForecaster.predict called before fit")
        if horizon > self.horizon:
            raise ValueError(f"model was fitted for horizon {self.horizon}, asked for {horizon}")
        return self.model.predict(inputs)[..., :horizon]

    # persistence ------------------------------------------------------------------
    def to_arrays(self) -> dict[str, np.ndarray]:
        if self.model is None:
            raise RuntimeError("nothing to save: model not fitted")
        meta = np.array([self.look_back, self.horizon, self.kernel], dtype=np.int64)
        out = {"kind": np.array(self.kind), "meta": meta, "ridge": np.array(self.ridge)}
        if isinstance(self.model, DecompLinearModel):
            out.update(
                trend_weight=self.model.trend.weight, trend_bias=self.model.trend.bias,
                rem_weight=self.model.remainder.weight, rem_bias=self.model.remainder.bias,
            )
        else:
            out.update(weight=self.model.weight, bias=self.model.bias)
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "LinearForecaster":
        kind = str(arrays["kind"])
        look_back, horizon, kernel = (int(v) for v in arrays["meta"])
        fc = cls(look_back, horizon, kind, kernel, float(arrays["ridge"]))
        if kind == "dlinear":
            fc.model = DecompLinearModel(
                kernel,
                LinearDirectModel(arrays["trend_weight"], arrays["trend_bias"], look_back, horizon),
                LinearDirectModel(arrays["rem_weight"], arrays["rem_bias"], look_back, horizon),
            )
        else:
            fc.model = LinearDirectModel(arrays["weight"], arrays["bias"], look_back, horizon)
        return fc


def save_linear(forecaster: LinearForecaster, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, **forecaster.to_arrays())


def load_linear(path) -> LinearForecaster:
    with np.load(path, allow_pickle=False) as arrays:
        return LinearForecaster.from_arrays(dict(arrays))


def make_forecaster(kind: str, look_back: int, horizon: int, period: int = 1, **kwargs):
    if kind == "last":
        return LastValueForecaster()
    if kind == "snaive":
        return SeasonalNaiveForecaster(period)
    return LinearForecaster(look_back, horizon, kind, **kwargs)
