"""Encoder-only transformer forecaster trained on the synthetic prior.

Each history point is projected to ``d_model`` by a 1->d linear map, a CLS
token is prepended, learnable positions (sinusoid-initialised) are added, and
the CLS output of the last encoder layer goes through LeakyReLU into a
``head_width``-wide linear head. Any horizon up to ``head_width`` is served by
truncating the head.

Histories are left-padded. Position 0 belongs to CLS and history slot ``j`` of
a length-``L`` window gets position ``L - j``, so the most recent point is
always at position 1 whatever the padding.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from synthlab import engine as E
from synthlab import prior as P
from synthlab.engine import AdamState, LrSchedule, Tensor, adam_step, lr_at
from synthlab.errors import ConfigError, ContextOverflowError, FormatError, HorizonOverflowError, NumericError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"PFN1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PfnConfig:
    n_layers: int = 5
    n_heads: int = 4
    d_model: int = 128
    d_ffn: int = 512
    max_history: int = 500
    head_width: int = 720
    leaky_slope: float = 0.01
    dropout: float = 0.0

    def __post_init__(self):
        if min(self.n_layers, self.n_heads, self.d_model, self.d_ffn, self.max_history, self.head_width) < 1:
            raise ConfigError("all PfnConfig sizes must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.leaky_slope <= 0:
            raise ConfigError("leaky_slope must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    n_samples: int = 500_000
    batch_size: int = 512
    epochs: int = 400
    base_lr: float = 0.003
    seed: int = 0
    n_validation: int = 256

    def __post_init__(self):
        if min(self.n_samples, self.batch_size, self.epochs, self.n_validation) < 1 or self.base_lr <= 0:
            raise ConfigError("TrainConfig values must be positive")

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.n_samples / self.batch_size)

    @property
    def warmup_steps(self) -> int:
        return math.ceil(self.steps_per_epoch / 2)

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.warmup_steps, self.steps_per_epoch * self.epochs)


DESK_CONTEXT = 128


def desk_configs(seed: int = 0) -> tuple[P.PriorConfig, PfnConfig, TrainConfig]:
    """Small preset that trains in minutes on one CPU core.

    Histories are capped at 128 points, so prior periods are drawn from [8, 63]
    to keep at least two cycles visible.
    """
    prior = P.PriorConfig(max_history=DESK_CONTEXT, period_range=(8, 63))
    model = PfnConfig(n_layers=2, n_heads=4, d_model=32, d_ffn=128, max_history=DESK_CONTEXT)
    train = TrainConfig(n_samples=20_000, batch_size=128, epochs=5, base_lr=0.003, seed=seed)
    return prior, model, train


def parameter_shapes(config: PfnConfig) -> "OrderedDict[str, tuple[int, ...]]":
    d, f = config.d_model, config.d_ffn
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    shapes["input.weight"] = (d,)
    shapes["input.bias"] = (d,)
    shapes["cls"] = (d,)
    shapes["positions"] = (config.max_history + 1, d)
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        shapes[pre + "qkv.weight"] = (d, 3 * d)
        shapes[pre + "qkv.bias"] = (2 * d,)  # query and value only; a key bias cancels in softmax
        shapes[pre + "out.weight"] = (d, d)
        shapes[pre + "out.bias"] = (d,)
        shapes[pre + "norm1.gamma"] = (d,)
        shapes[pre + "norm1.beta"] = (d,)
        shapes[pre + "ffn1.weight"] = (d, f)
        shapes[pre + "ffn1.bias"] = (f,)
        shapes[pre + "ffn2.weight"] = (f, d)
        shapes[pre + "ffn2.bias"] = (d,)
        shapes[pre + "norm2.gamma"] = (d,)
        shapes[pre + "norm2.beta"] = (d,)
    shapes["head.weight"] = (d, config.head_width)
    shapes["head.bias"] = (config.head_width,)
    return shapes


def sinusoidal_table(rows: int, d: int) -> np.ndarray:
    pos = np.arange(rows, dtype=np.float64)[:, None]
    freq = np.power(10000.0, -np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.zeros((rows, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq)[:, : d // 2]
    return table


class PfnModel:
    def __init__(self, config: PfnConfig, params: "OrderedDict[str, Tensor]"):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: PfnConfig, seed: int = 0) -> "PfnModel":
        rng = np.random.default_rng(seed)
        params: OrderedDict[str, Tensor] = OrderedDict()
        for name, shape in parameter_shapes(config).items():
            if name == "positions":
                value = sinusoidal_table(*shape)
            elif name == "cls" or name.endswith(".beta"):
                value = np.zeros(shape)
            elif name.endswith(".gamma"):
                value = np.ones(shape)
            else:
                fan_in = 1 if name.startswith("input.") else _fan_in(name, config)
                bound = 1.0 / math.sqrt(fan_in)
                value = rng.uniform(-bound, bound, size=shape)
            params[name] = E.parameter(value, name=name)
        return cls(config, params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    # forward ------------------------------------------------------------------
    def forward(self, history, mask=None, *, dropout_rng: np.random.Generator | None = None) -> Tensor:
        """(B, L) scaled histories and validity mask -> (B, head_width) predictions."""
        x = np.asarray(history.data if isinstance(history, Tensor) else history, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ShapeError("history must be (batch, length)")
        b, length = x.shape
        if length > self.config.max_history:
            raise ContextOverflowError(
                f"history length {length} exceeds max_history {self.config.max_history}"
            )
        if length < 1:
            raise ShapeError("history must contain at least one point")
        mask = np.ones_like(x, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError("mask shape differs from history shape")
        p = self.params
        cfg = self.config
        d = cfg.d_model

        tokens = E.add(E.mul(Tensor(x[:, :, None]), p["input.weight"]), p["input.bias"])
        tokens = tokens + p["positions"][length:0:-1]
        cls_tok = E.add(Tensor(np.zeros((b, 1, 1))), E.reshape(p["cls"] + p["positions"][0], (1, 1, d)))
        h = E.concat([cls_tok, tokens], axis=1)
        key_mask = np.concatenate([np.ones((b, 1), dtype=bool), mask], axis=1)[:, None, None, :]

        for i in range(cfg.n_layers):
            last = i == cfg.n_layers - 1
            h = self._encoder_layer(h, key_mask, f"layers.{i}.", cls_only=last, dropout_rng=dropout_rng)
        cls_out = E.reshape(h, (b, d)) if h.shape[1] == 1 else h[:, 0, :]
        act = E.leaky_relu(cls_out, cfg.leaky_slope)
        return E.linear(act, p["head.weight"], p["head.bias"])

    __call__ = forward

    def _encoder_layer(self, h: Tensor, key_mask: np.ndarray, pre: str, cls_only: bool, dropout_rng) -> Tensor:
        # the last layer only needs the CLS query; downstream reads nothing else
        p = self.params
        b, t, d = h.shape
        nh = self.config.n_heads
        dh = d // nh
        bias = p[pre + "qkv.bias"]
        full_bias = E.concat([bias[:d], Tensor(np.zeros(d)), bias[d:]], axis=0)
        qkv = E.add(E.linear(h, p[pre + "qkv.weight"]), full_bias)
        heads = E.transpose(E.reshape(qkv, (b, t, 3, nh, dh)), (2, 0, 3, 1, 4))  # 3,B,h,T,dh
        q = heads[0, :, :, 0:1, :] if cls_only else heads[0]
        q = E.mul(q, 1.0 / math.sqrt(dh))
        k, v = heads[1], heads[2]
        scores = E.matmul(q, E.transpose(k, (0, 1, 3, 2)))
        attn = E.masked_softmax(scores, key_mask)
        ctx = E.matmul(attn, v)
        tq = ctx.shape[2]
        ctx = E.reshape(E.transpose(ctx, (0, 2, 1, 3)), (b, tq, d))
        attn_out = self._dropout(E.linear(ctx, p[pre + "out.weight"], p[pre + "out.bias"]), dropout_rng)
        resid = h[:, 0:1, :] if cls_only else h
        h1 = E.layer_norm(resid + attn_out, p[pre + "norm1.gamma"], p[pre + "norm1.beta"])
        ff = E.relu(E.linear(h1, p[pre + "ffn1.weight"], p[pre + "ffn1.bias"]))
        ff = self._dropout(E.linear(ff, p[pre + "ffn2.weight"], p[pre + "ffn2.bias"]), dropout_rng)
        return E.layer_norm(h1 + ff, p[pre + "norm2.gamma"], p[pre + "norm2.beta"])

    def _dropout(self, x: Tensor, rng) -> Tensor:
        rate = self.config.dropout
        if rate == 0 or rng is None:
            return x
        keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
        return E.mul(x, keep)


def _fan_in(name: str, config: PfnConfig) -> int:
    if name.startswith("head."):
        return config.d_model
    if ".ffn2." in name:
        return config.d_ffn
    return config.d_model


def expected_parameter_count(config: PfnConfig) -> int:
    d, f, w = config.d_model, config.d_ffn, config.head_width
    embed = 2 * d + d + (config.max_history + 1) * d
    attention = d * 3 * d + 2 * d + d * d + d
    ffn = d * f + f + f * d + d
    norms = 4 * d
    head = d * w + w
    return embed + config.n_layers * (attention + ffn + norms) + head


def masked_mse(predictions: Tensor, targets, target_mask) -> Tensor:
    """Mean squared error over valid target slots; predictions wider than targets are truncated."""
    targets = np.asarray(targets, dtype=np.float64)
    target_mask = np.asarray(target_mask, dtype=bool)
    if targets.shape != target_mask.shape:
        raise ShapeError("targets and mask differ in shape")
    if predictions.ndim != targets.ndim or predictions.shape[0] != targets.shape[0]:
        raise ShapeError("predictions and targets disagree on batch layout")
    width = targets.shape[-1]
    if predictions.shape[-1] < width:
        raise ShapeError("predictions narrower than targets")
    count = int(target_mask.sum())
    if count == 0:
        raise ShapeError("loss over a batch with no valid target slots")
    pred = predictions if predictions.shape[-1] == width else predictions[..., :width]
    diff = E.mul(E.sub(pred, targets), target_mask.astype(np.float64))
    return E.mul(E.tsum(E.square(diff)), 1.0 / count)


loss = masked_mse


# training -------------------------------------------------------------------

@dataclass
class TrainResult:
    model: PfnModel
    epoch_losses: list[float]
    initial_val_loss: float
    final_val_loss: float
    steps: int
    step_losses: list[float] = field(default_factory=list)


def validation_batch(prior_config: P.PriorConfig, train_config: TrainConfig) -> P.SyntheticBatch:
    """Held-out draws: the indices right after the training pool in the same stream."""
    start = train_config.n_samples
    return P.generate_batch(train_config.n_validation, prior_config, train_config.seed, start_index=start)


def evaluate_loss(model: PfnModel, batch: P.SyntheticBatch, chunk: int = 256) -> float:
    total, count = 0.0, 0
    for lo in range(0, batch.history.shape[0], chunk):
        sl = slice(lo, lo + chunk)
        pred = model.forward(batch.history[sl], batch.history_mask[sl]).data
        width = batch.target.shape[1]
        err = (pred[:, :width] - batch.target[sl]) ** 2 * batch.target_mask[sl]
        total += float(err.sum())
        count += int(batch.target_mask[sl].sum())
    return total / count


def train(
    model: PfnModel,
    prior_config: P.PriorConfig,
    train_config: TrainConfig,
    on_step: Callable[[int, float, float], None] | None = None,
    max_steps: int | None = None,
) -> TrainResult:
    """Adam + warmup/cosine over a fixed pool of ``n_samples`` seeded prior draws.

    Every epoch visits the pool in a fresh permutation derived from
    ``(seed, epoch)``. Each update ``k`` uses ``lr_at(schedule, k)``.
    """
    if prior_config.max_history > model.config.max_history:
        raise ConfigError("prior histories are longer than the model context")
    if prior_config.target_length > model.config.head_width:
        raise ConfigError("prior targets are wider than the model head")
    schedule = train_config.schedule()
    params = model.parameters()
    state = AdamState.for_params(params)
    val = validation_batch(prior_config, train_config)
    initial_val = evaluate_loss(model, val)
    drop_rng = np.random.default_rng([train_config.seed, 2]) if model.config.dropout > 0 else None

    epoch_losses: list[float] = []
    step_losses: list[float] = []
    step = 0
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = np.random.default_rng([train_config.seed, 1, epoch]).permutation(train_config.n_samples)
        running, n_batches = 0.0, 0
        for lo in range(0, train_config.n_samples, bs):
            if max_steps is not None and step >= max_steps:
                break
            batch = P.generate_indices(order[lo : lo + bs], prior_config, train_config.seed)
            lr = lr_at(schedule, step)
            model.zero_grad()
            out = model.forward(batch.history, batch.history_mask, dropout_rng=drop_rng)
            value = masked_mse(out, batch.target, batch.target_mask)
            if not np.isfinite(value.data):
                raise NumericError(
                    f"non-finite loss at step {step} (lr={lr:.3g}, seed={train_config.seed}, epoch={epoch})"
                )
            value.backward()
            try:
                adam_step(params, state, lr)
            except NumericError as exc:
                raise NumericError(
                    f"{exc} at step {step} (lr={lr:.3g}, seed={train_config.seed}, epoch={epoch})"
                ) from exc
            loss_value = float(value.data)
            step_losses.append(loss_value)
            running += loss_value
            n_batches += 1
            if on_step is not None:
                on_step(step, lr, loss_value)
            step += 1
        if n_batches:
            epoch_losses.append(running / n_batches)
            logger.info("epoch %d: mean loss %.5f", epoch, epoch_losses[-1])
    final_val = evaluate_loss(model, val)
    return TrainResult(model, epoch_losses, initial_val, final_val, step, step_losses)


# inference --------------------------------------------------------------------

DEFAULT_LOOK_BACK = 250


def predict_batch(
    model: PfnModel, histories, horizon: int, look_back: int = DEFAULT_LOOK_BACK, chunk: int = 256
) -> np.ndarray:
    """Forecast each row of ``histories`` (N, L) in its own units; returns (N, horizon)."""
    if horizon > model.config.head_width:
        raise HorizonOverflowError(f"horizon {horizon} exceeds head width {model.config.head_width}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    x = np.atleast_2d(np.asarray(histories, dtype=np.float64))
    if x.shape[1] < 2:
        raise ValueError("need at least 2 history points")
    window = min(look_back, model.config.max_history, x.shape[1])
    x = x[:, -window:]
    lo = x.min(axis=1, keepdims=True)
    span = x.max(axis=1, keepdims=True) - lo
    span = np.where(span > 0, span, 1.0)  # flat history: identity denominator
    scaled = np.clip((x - lo) / span, -1.0, 2.0)
    out = np.empty((x.shape[0], horizon))
    for start in range(0, x.shape[0], chunk):
        head = model.forward(scaled[start : start + chunk]).data
        out[start : start + chunk] = head[:, :horizon]
    return out * span + lo


def predict(model: PfnModel, history, horizon: int, look_back: int = DEFAULT_LOOK_BACK) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64).ravel()
    if history.size < 2:
        raise ValueError("need at least 2 history points")
    if horizon > model.config.head_width:
        raise HorizonOverflowError(f"horizon {horizon} exceeds head width {model.config.head_width}")
    return predict_batch(model, history[None, :], horizon, look_back)[0]


class PfnForecaster:
    """Zero-shot adapter for the evaluation harness; ``fit`` is a no-op."""

    zero_shot = True

    def __init__(self, model: PfnModel, look_back: int = DEFAULT_LOOK_BACK, name: str = "pfn"):
        self.model = model
        self.look_back = min(look_back, model.config.max_history)
        self.max_horizon = model.config.head_width
        self.name = name

    def fit(self, train):
        return self

    def predict(self, inputs, horizon: int) -> np.ndarray:
        return predict_batch(self.model, inputs, horizon, self.look_back)


# checkpoints ---------------------------------------------------------------------

def save(model: PfnModel, path, metadata: dict | None = None) -> None:
    """``PFN1`` | u32 version | u32 header_len | JSON header | per parameter (name, shape, <f8 data)."""
    header = json.dumps(
        {"config": asdict(model.config), "metadata": metadata or {}}, sort_keys=True
    ).encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header)), header]
    chunks.append(struct.pack("<I", len(model.params)))
    for name, t in model.params.items():
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


@dataclass
class Checkpoint:
    version: int
    config: PfnConfig
    model: PfnModel
    metadata: dict


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("checkpoint is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    version, header_len = r.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(header_len))
        config = PfnConfig(**header["config"])
    except (ValueError, TypeError, KeyError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from exc
    expected = parameter_shapes(config)
    (count,) = r.unpack("<I")
    if count != len(expected):
        raise FormatError(f"checkpoint holds {count} parameters, config implies {len(expected)}")
    params: OrderedDict[str, Tensor] = OrderedDict()
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        (ndim,) = r.unpack("<B")
        shape = tuple(r.unpack(f"<{ndim}I")) if ndim else ()
        if expected.get(name) != shape:
            raise FormatError(f"parameter {name!r} has shape {shape}, config implies {expected.get(name)}")
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        params[name] = E.parameter(data, name=name)
    if r.pos != len(r.blob):
        raise FormatError("trailing bytes after parameter table")
    return Checkpoint(version, config, PfnModel(config, params), header.get("metadata", {}))


def load(path) -> PfnModel:
    return load_checkpoint(path).model
