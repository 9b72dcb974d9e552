import math

import numpy as np
import pytest

from conftest import tiny_configs
from synthlab import engine as E
from synthlab import pfn
from synthlab.errors import ConfigError, ContextOverflowError, FormatError, HorizonOverflowError, ShapeError


def _closed_form_count(n_layers, d, f, max_history, width):
    per_layer = (d * 3 * d + 2 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d
    return (d + d) + d + (max_history + 1) * d + n_layers * per_layer + (d * width + width)


def test_parameter_count_is_closed_form():
    cfg = pfn.PfnConfig()
    model = pfn.PfnModel.init(cfg, 0)
    assert model.n_parameters() == _closed_form_count(5, 128, 512, 500, 720)
    assert pfn.expected_parameter_count(cfg) == model.n_parameters()


def test_positions_start_sinusoidal():
    cfg = pfn.PfnConfig(n_layers=1, d_model=16, d_ffn=32, max_history=30)
    table = pfn.PfnModel.init(cfg, 0).params["positions"].data
    assert table.shape == (31, 16)
    assert np.all(table[0, 0::2] == 0.0)
    for pos in (0, 5, 30):
        for i in range(8):
            angle = pos / 10000 ** (2 * i / 16)
            assert table[pos, 2 * i] == pytest.approx(math.sin(angle), abs=1e-15)
            assert table[pos, 2 * i + 1] == pytest.approx(math.cos(angle), abs=1e-15)


def test_init_is_deterministic_and_validated():
    _, cfg, _ = tiny_configs()
    a, b = pfn.PfnModel.init(cfg, 5), pfn.PfnModel.init(cfg, 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.state_arrays().values(), b.state_arrays().values()))
    assert a.params["cls"].data.tolist() == [0.0] * 8
    with pytest.raises(ConfigError):
        pfn.PfnConfig(d_model=10, n_heads=4)


@pytest.mark.parametrize("length", [1, 100, 250, 500])
def test_default_forward_shape(length):
    model = pfn.PfnModel.init(pfn.PfnConfig(), 0)
    out = model.forward(np.random.default_rng(0).random((2, length)))
    assert out.shape == (2, 720)


def test_context_overflow():
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 0)
    with pytest.raises(ContextOverflowError):
        model.forward(np.zeros((1, cfg.max_history + 1)))


def test_padded_slots_never_matter():
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 1)
    rng = np.random.default_rng(0)
    x = rng.random((4, 20))
    mask = np.ones_like(x, dtype=bool)
    mask[:, :7] = False
    base = model.forward(x, mask).data
    for _ in range(5):
        garbage = x.copy()
        garbage[:, :7] = rng.normal(scale=100, size=(4, 7))
        garbage[:, :7] = garbage[:, rng.permutation(7)]
        assert np.max(np.abs(model.forward(garbage, mask).data - base)) <= 1e-12


def test_identical_rows_identical_outputs():
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 2)
    row = np.random.default_rng(1).random(15)
    out = model.forward(np.stack([row, row, row])).data
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])


def test_loss_examples():
    assert pfn.loss(E.tensor(np.ones((2, 3))), np.ones((2, 3)), np.ones((2, 3), bool)).item() == 0.0
    assert pfn.loss(E.tensor([[1.0, 0.0]]), [[0.0, 0.0]], [[True, False]]).item() == 1.0
    rng = np.random.default_rng(3)
    p, t = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    m = rng.random((3, 5)) < 0.5
    m[0, 0] = True
    total, count = 0.0, 0
    for i in range(3):
        for j in range(5):
            if m[i, j]:
                total += (p[i, j] - t[i, j]) ** 2
                count += 1
    assert pfn.loss(E.tensor(p), t, m).item() == pytest.approx(total / count, abs=1e-14)
    with pytest.raises(ShapeError):
        pfn.loss(E.tensor(p), t, np.zeros((3, 5), bool))


def test_full_model_gradient_check():
    cfg = pfn.PfnConfig(n_layers=1, n_heads=2, d_model=8, d_ffn=16, max_history=6, head_width=4)
    model = pfn.PfnModel.init(cfg, 0)
    rng = np.random.default_rng(0)
    x = rng.random((2, 6))
    mask = np.ones_like(x, dtype=bool)
    mask[1, :2] = False
    target = rng.random((2, 4))
    # a non-trivial CLS and beta keep every path live
    model.params["cls"].data[:] = rng.normal(size=8) * 0.3
    f = lambda: pfn.loss(model.forward(x, mask), target, np.ones_like(target, dtype=bool))
    assert E.grad_check(f, model.parameters()) < 1e-4


def test_single_step_at_warmup_start_changes_nothing():
    prior_cfg, cfg, train_cfg = tiny_configs()
    model = pfn.PfnModel.init(cfg, 0)
    before = model.state_arrays()
    pfn.train(model, prior_cfg, train_cfg, max_steps=1)
    after = model.state_arrays()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_training_is_deterministic_and_makes_progress():
    prior_cfg, cfg, train_cfg = tiny_configs()
    runs = []
    for _ in range(2):
        model = pfn.PfnModel.init(cfg, 0)
        res = pfn.train(model, prior_cfg, train_cfg)
        runs.append((model.state_arrays(), res))
    (a, ra), (b, rb) = runs
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert ra.step_losses == rb.step_losses
    assert len(ra.epoch_losses) == 2 and ra.steps == 8
    assert ra.final_val_loss < ra.initial_val_loss


def test_predict_horizon_limits_and_identity_scaler():
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 3)
    hist = np.linspace(0, 1, 10)
    assert pfn.predict(model, hist, 720).shape == (720,)
    with pytest.raises(HorizonOverflowError):
        pfn.predict(model, hist, 721)
    head = model.forward(hist[None, :]).data[0]
    assert np.array_equal(pfn.predict(model, hist, 50), head[:50])


def test_predict_output_frame_is_inverse_minmax():
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 3)
    hist = np.random.default_rng(2).normal(size=40) * 7 + 3
    window = hist[-cfg.max_history :]
    lo, hi = window.min(), window.max()
    head = model.forward(((window - lo) / (hi - lo))[None, :]).data[0]
    assert np.allclose(pfn.predict(model, hist, 12), head[:12] * (hi - lo) + lo, atol=1e-12)
    flat = pfn.predict(model, np.full(10, 4.0), 5)
    assert np.all(np.isfinite(flat))
    with pytest.raises(ValueError):
        pfn.predict(model, [1.0], 5)


def test_checkpoint_round_trip_and_corruption(tmp_path):
    _, cfg, _ = tiny_configs()
    model = pfn.PfnModel.init(cfg, 4)
    path = tmp_path / "m.ckpt"
    pfn.save(model, path, {"seed": 4})
    ck = pfn.load_checkpoint(path)
    assert ck.config == cfg and ck.metadata == {"seed": 4}
    x = np.random.default_rng(0).random((3, 12))
    assert model.forward(x).data.tobytes() == ck.model.forward(x).data.tobytes()

    blob = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        pfn.load(bad)
    bad.write_bytes(blob[:-10])
    with pytest.raises(FormatError):
        pfn.load(bad)
    bad.write_bytes(blob + b"\0")
    with pytest.raises(FormatError):
        pfn.load(bad)
    # header claims a wider model than the stored blob
    wider = pfn.PfnModel.init(pfn.PfnConfig(**{**cfg.__dict__, "d_model": 16}), 0)
    other = tmp_path / "w.ckpt"
    pfn.save(wider, other)
    wblob = other.read_bytes()
    head_len = int.from_bytes(blob[8:12], "little")
    wide_head_len = int.from_bytes(wblob[8:12], "little")
    mixed = wblob[: 12 + wide_head_len] + blob[12 + head_len :]
    bad.write_bytes(mixed)
    with pytest.raises(FormatError):
        pfn.load(bad)
    bad.write_bytes(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(FormatError):
        pfn.load(bad)


def test_forecaster_adapter():
    _, cfg, _ = tiny_configs()
    fc = pfn.PfnForecaster(pfn.PfnModel.init(cfg, 0))
    assert fc.zero_shot and fc.look_back == cfg.max_history and fc.max_horizon == 720
    assert fc.fit(None) is fc
    assert fc.predict(np.random.default_rng(0).random((5, 30)), 7).shape == (5, 7)


def test_desk_preset_values():
    prior_cfg, model_cfg, train_cfg = pfn.desk_configs()
    assert (model_cfg.n_layers, model_cfg.d_model) == (2, 32)
    assert (train_cfg.n_samples, train_cfg.epochs, train_cfg.batch_size, train_cfg.base_lr) == (20_000, 5, 128, 0.003)
    assert train_cfg.warmup_steps == math.ceil(train_cfg.steps_per_epoch / 2)
    assert prior_cfg.max_history == model_cfg.max_history
