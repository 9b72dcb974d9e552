"""Synthetic series prior: Fourier seasonality plus an analytic trend.

A draw goes through these steps:

1. number of Fourier coefficients, each a complex pair with real/imag parts uniform in ``coeff_range``;
2. period length, discrete uniform;
3. trend kind and its sharpness (a signed multiplier);
4. start offset in ``[0, P)`` and number of whole periods in the train part;
5. train end = start + periods * P + extra offset in ``[0, P)``;
6. render one period by inverse DFT, tile it, add the trend (or keep the trend alone);
7. min-max scale on the train part, clip into ``clip_bounds``, pad into batches.

The exponential trend is ``expm1(sharpness * t)`` with ``t`` counted from 1, so
its magnitude at the first point is about ``sharpness``; set
``PriorConfig.exponential_form = "exp"`` for the unshifted ``exp(sharpness * t)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from synthlab.errors import AliasingError, ConfigError, DegenerateSampleError, FormatError, ShapeError

TREND_KINDS = ("none", "linear", "log", "log1p", "quadratic", "exponential")

DEFAULT_TREND_PROBABILITIES = {
    "linear": 0.18,
    "log": 0.18,
    "log1p": 0.09,
    "exponential": 0.09,
    "quadratic": 0.09,
    "none": 0.37,
}

# (inner, outer): sharpness ~ U[-outer, -inner] ∪ U[inner, outer]
DEFAULT_SHARPNESS_RANGES = {
    "linear": (0.0001, 0.01),
    "log": (0.01, 1.0),
    "log1p": (0.01, 1.0),
    "quadratic": (0.001, 0.01),
    "exponential": (0.0005, 0.005),
}

MAX_RESAMPLE_ATTEMPTS = 100


@dataclass(frozen=True)
class PriorConfig:
    coeff_count_range: tuple[int, int] = (3, 7)
    coeff_range: tuple[float, float] = (-2.0, 2.0)
    period_range: tuple[int, int] = (8, 199)
    train_periods_range: tuple[int, int] = (2, 7)
    trend_probabilities: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_TREND_PROBABILITIES)
    )
    pure_trend_probability: float = 0.02
    sharpness_ranges: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_SHARPNESS_RANGES)
    )
    clip_bounds: tuple[float, float] = (-1.0, 2.0)
    target_length: int = 720
    max_history: int = 500
    exponential_form: str = "expm1"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        probs = dict(self.trend_probabilities)
        unknown = set(probs) - set(TREND_KINDS)
        if unknown:
            raise ConfigError(f"unknown trend kinds: {sorted(unknown)}")
        if any(p < 0 for p in probs.values()):
            raise ConfigError("trend probabilities must be non-negative")
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ConfigError("trend probabilities (including 'none') must sum to 1")
        for kind, p in probs.items():
            if kind != "none" and p > 0:
                if kind not in self.sharpness_ranges:
                    raise ConfigError(f"no sharpness range for trend kind {kind!r}")
                inner, outer = self.sharpness_ranges[kind]
                if not 0 <= inner <= outer:
                    raise ConfigError(f"bad sharpness range for {kind!r}: {(inner, outer)}")
        p_lo, p_hi = self.period_range
        if not 2 <= p_lo <= p_hi < self.max_history:
            raise ConfigError("period_range must lie within [2, max_history)")
        c_lo, c_hi = self.coeff_count_range
        # counts above P/2 are capped per draw, so only the lower end must always fit
        if not 1 <= c_lo <= min(c_hi, p_lo // 2):
            raise ConfigError("coeff_count_range.min must lie within [1, period_range.min/2]")
        lo, hi = self.coeff_range
        if lo > hi:
            raise ConfigError("coeff_range is inverted")
        n_lo, n_hi = self.train_periods_range
        if not 1 <= n_lo <= n_hi:
            raise ConfigError("train_periods_range must be positive and ordered")
        cmin, cmax = self.clip_bounds
        if not cmin < 0 < 1 < cmax:
            raise ConfigError("clip_bounds must satisfy min < 0 < 1 < max")
        if not 0 <= self.pure_trend_probability <= 1:
            raise ConfigError("pure_trend_probability must be a probability")
        if self.target_length < 1 or self.max_history < 2:
            raise ConfigError("target_length >= 1 and max_history >= 2 required")
        if self.exponential_form not in ("expm1", "exp"):
            raise ConfigError("exponential_form must be 'expm1' or 'exp'")

    def kinds_and_probs(self) -> tuple[list[str], np.ndarray]:
        kinds = [k for k in TREND_KINDS if k in self.trend_probabilities]
        return kinds, np.array([self.trend_probabilities[k] for k in kinds])


@dataclass(frozen=True)
class SeriesSpec:
    coefficients: tuple[complex, ...]
    period: int
    trend_kind: str
    sharpness: float
    pure_trend: bool
    train_start: int
    n_train_periods: int
    train_end: int

    @property
    def extra_offset(self) -> int:
        return self.train_end - self.train_start - self.n_train_periods * self.period


@dataclass
class SyntheticSample:
    history: np.ndarray
    target: np.ndarray
    scale_min: float
    scale_max: float
    history_mask: np.ndarray
    target_mask: np.ndarray


@dataclass
class SyntheticBatch:
    history: np.ndarray  # (n, Lh), left-padded with zeros
    history_mask: np.ndarray
    target: np.ndarray  # (n, Lt), right-padded with zeros
    target_mask: np.ndarray
    specs: list[SeriesSpec]
    scale_min: np.ndarray
    scale_max: np.ndarray


def sample_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream for sample ``index``; lets batches render in any order."""
    return np.random.default_rng([seed, index, attempt])


def _signed_uniform(rng: np.random.Generator, inner: float, outer: float) -> float:
    # the two halves have equal length, so a fair sign choice keeps the union uniform
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return sign * rng.uniform(inner, outer)


def sample_spec(config: PriorConfig, rng: np.random.Generator) -> SeriesSpec:
    c_lo, c_hi = config.coeff_count_range
    n_coeffs = int(rng.integers(c_lo, c_hi + 1))
    lo, hi = config.coeff_range
    parts = rng.uniform(lo, hi, size=(n_coeffs, 2))
    period = int(rng.integers(config.period_range[0], config.period_range[1] + 1))
    # short periods cannot hold every bin without aliasing; drop the highest ones
    parts = parts[: period // 2]
    coefficients = tuple(complex(re, im) for re, im in parts)

    kinds, probs = config.kinds_and_probs()
    kind = kinds[int(rng.choice(len(kinds), p=probs))]
    if kind == "none":
        sharpness, pure = 0.0, False
    else:
        sharpness = _signed_uniform(rng, *config.sharpness_ranges[kind])
        pure = bool(rng.random() < config.pure_trend_probability)

    train_start = int(rng.integers(0, period))
    n_periods = int(rng.integers(config.train_periods_range[0], config.train_periods_range[1] + 1))
    extra = int(rng.integers(0, period))
    train_end = train_start + n_periods * period + extra
    return SeriesSpec(coefficients, period, kind, float(sharpness), pure, train_start, n_periods, train_end)


def render_seasonal(coefficients: Sequence[complex], period: int, total_length: int) -> np.ndarray:
    """Place coefficients in bins 1..N of a length-``period`` spectrum, inverse-DFT, tile."""
    n = len(coefficients)
    if n > period / 2:
        raise AliasingError(f"{n} coefficients exceed half the period {period}")
    if total_length < 1:
        raise ShapeError("total_length must be >= 1")
    spectrum = np.zeros(period, dtype=np.complex128)
    spectrum[1 : n + 1] = coefficients
    one_period = np.fft.ifft(spectrum).real
    return one_period[np.arange(total_length) % period]


def render_trend(kind: str, sharpness: float, length: int, exponential_form: str = "expm1") -> np.ndarray:
    if length < 1:
        raise ShapeError("length must be >= 1")
    t = np.arange(1, length + 1, dtype=np.float64)
    if kind == "none":
        return np.zeros(length)
    if kind == "linear":
        return sharpness * t
    if kind == "log":
        return sharpness * np.log(t)
    if kind == "log1p":
        return sharpness * np.log1p(t)
    if kind == "quadratic":
        return sharpness * t**2
    if kind == "exponential":
        if exponential_form == "exp":
            return np.exp(sharpness * t)
        return np.expm1(sharpness * t)
    raise ConfigError(f"unknown trend kind {kind!r}")


def compose(seasonal: np.ndarray, trend: np.ndarray, pure_trend: bool) -> np.ndarray:
    seasonal = np.asarray(seasonal, dtype=np.float64)
    trend = np.asarray(trend, dtype=np.float64)
    if seasonal.shape != trend.shape:
        raise ShapeError(f"seasonal {seasonal.shape} and trend {trend.shape} differ")
    if pure_trend:
        return trend.copy()
    return seasonal + trend


def render_raw(spec: SeriesSpec, config: PriorConfig) -> np.ndarray:
    """Full raw series: train part plus a complete target after it."""
    total = spec.train_end + config.target_length
    seasonal = render_seasonal(spec.coefficients, spec.period, total)
    trend = render_trend(spec.trend_kind, spec.sharpness, total, config.exponential_form)
    return compose(seasonal, trend, spec.pure_trend)


def split_scale_clip(raw: np.ndarray, spec: SeriesSpec, config: PriorConfig) -> SyntheticSample:
    """Cut history/target, min-max scale with the kept history, clip.

    The scaler is fitted on the history actually kept (the last ``max_history``
    points of the train part), the same window inference sees.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < spec.train_end + 1:
        raise ShapeError("raw series ends before the train part does")
    train = raw[spec.train_start : spec.train_end]
    if train.size < 2:
        raise DegenerateSampleError("train slice shorter than 2 points")
    history = train[-config.max_history :]
    target = raw[spec.train_end : spec.train_end + config.target_length]
    lo, hi = float(history.min()), float(history.max())
    if not hi > lo:
        raise DegenerateSampleError("flat train part")
    span = hi - lo
    cmin, cmax = config.clip_bounds
    scaled_history = np.clip((history - lo) / span, cmin, cmax)
    scaled_target = np.clip((target - lo) / span, cmin, cmax)
    return SyntheticSample(
        history=scaled_history,
        target=scaled_target,
        scale_min=lo,
        scale_max=hi,
        history_mask=np.ones(history.size, dtype=bool),
        target_mask=np.ones(target.size, dtype=bool),
    )


def draw_sample(config: PriorConfig, seed: int, index: int) -> tuple[SeriesSpec, SyntheticSample]:
    """Sample ``index`` of the stream keyed by ``seed``; degenerate draws are redrawn."""
    for attempt in range(MAX_RESAMPLE_ATTEMPTS):
        spec = sample_spec(config, sample_rng(seed, index, attempt))
        try:
            return spec, split_scale_clip(render_raw(spec, config), spec, config)
        except DegenerateSampleError:
            continue
    raise ConfigError(
        f"prior produced {MAX_RESAMPLE_ATTEMPTS} degenerate draws in a row; config is unusable"
    )


def pad_batch(samples: Sequence[SyntheticSample], specs: Sequence[SeriesSpec] = ()) -> SyntheticBatch:
    n = len(samples)
    lh = max(s.history.size for s in samples)
    lt = max(s.target.size for s in samples)
    history = np.zeros((n, lh))
    hmask = np.zeros((n, lh), dtype=bool)
    target = np.zeros((n, lt))
    tmask = np.zeros((n, lt), dtype=bool)
    for i, s in enumerate(samples):
        k = s.history.size
        history[i, lh - k :] = s.history
        hmask[i, lh - k :] = True
        m = s.target.size
        target[i, :m] = s.target
        tmask[i, :m] = True
    return SyntheticBatch(
        history, hmask, target, tmask, list(specs),
        np.array([s.scale_min for s in samples]),
        np.array([s.scale_max for s in samples]),
    )


def generate_batch(n: int, config: PriorConfig, seed: int, start_index: int = 0) -> SyntheticBatch:
    """Samples ``start_index .. start_index + n - 1`` of the seeded stream, padded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    drawn = [draw_sample(config, seed, start_index + i) for i in range(n)]
    return pad_batch([s for _, s in drawn], [spec for spec, _ in drawn])


def generate_indices(indices: Iterable[int], config: PriorConfig, seed: int) -> SyntheticBatch:
    drawn = [draw_sample(config, seed, int(i)) for i in indices]
    if not drawn:
        raise ValueError("no indices given")
    return pad_batch([s for _, s in drawn], [spec for spec, _ in drawn])


# serialization ------------------------------------------------------------------

BINARY_MAGIC = b"SPL1"


def write_samples_csv(samples: Sequence[SyntheticSample], fh) -> None:
    fh.write("sample_id,role,t,value\n")
    for sid, s in enumerate(samples):
        for role, values in (("history", s.history), ("target", s.target)):
            for t, v in enumerate(values):
                fh.write(f"{sid},{role},{t},{float(v)!r}\n")


def write_samples_binary(samples: Sequence[SyntheticSample], fh: BinaryIO) -> None:
    """``SPL1`` | u32 count | per sample: u32 history_len, u32 target_len, f64 values (history then target)."""
    fh.write(BINARY_MAGIC)
    fh.write(struct.pack("<I", len(samples)))
    for s in samples:
        fh.write(struct.pack("<II", s.history.size, s.target.size))
        fh.write(np.ascontiguousarray(s.history, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(s.target, dtype="<f8").tobytes())


def read_samples_binary(fh: BinaryIO) -> list[tuple[np.ndarray, np.ndarray]]:
    if fh.read(4) != BINARY_MAGIC:
        raise FormatError("not an SPL1 sample file")
    head = fh.read(4)
    if len(head) != 4:
        raise FormatError("truncated sample file")
    (count,) = struct.unpack("<I", head)
    out = []
    for _ in range(count):
        lens = fh.read(8)
        if len(lens) != 8:
            raise FormatError("truncated sample file")
        lh, lt = struct.unpack("<II", lens)
        body = fh.read(8 * (lh + lt))
        if len(body) != 8 * (lh + lt):
            raise FormatError("truncated sample file")
        values = np.frombuffer(body, dtype="<f8").astype(np.float64)
        out.append((values[:lh], values[lh:]))
    return out
