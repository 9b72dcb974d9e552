import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import window_count_loop
from synthlab import datasets as D
from synthlab.errors import ConfigError, IngestionError, InsufficientDataError, SplitError

META = D.DatasetMeta(name="toy", period=4, horizons=(2,), ratios=(0.7, 0.1, 0.2))


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_load_csv_examples(tmp_path):
    p = _write(tmp_path, "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6.5\n")
    store = D.load_csv(p, D.DatasetMeta(name="t", ratios=(0.34, 0.33, 0.33)))
    assert len(store) == 3 and store.n_channels == 2
    assert store.values[:, 1].tolist() == [2.0, 4.0, 6.5]
    assert store.timestamps[0] == "2020-01-01"

    with pytest.raises(IngestionError, match="row 3"):
        D.load_csv(_write(tmp_path, "date,a\n1,2\n2,NaN\n3,4\n"), META)
    with pytest.raises(IngestionError, match="row 2"):
        D.load_csv(_write(tmp_path, "date,a,b\n1,2\n"), META)
    with pytest.raises(IngestionError, match="row 4"):
        D.load_csv(_write(tmp_path, "date,a\n1,2\n2,3\n3,abc\n"), META)
    with pytest.raises(IngestionError):
        D.load_csv(_write(tmp_path, ""), META)


def test_csv_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    store = D.from_array(rng.normal(size=(50, 3)) * 1e3, META, timestamps=[f"s{i}" for i in range(50)])
    path = tmp_path / "r.csv"
    D.write_csv(store, path)
    back = D.load_csv(path, META)
    assert back.values.tobytes() == store.values.tobytes()
    assert back.timestamps == store.timestamps


def test_split_examples():
    assert D.split(100, (0.7, 0.1, 0.2)) == ((0, 70), (70, 80), (80, 100))
    with pytest.raises(SplitError):
        D.split(100, (1.0, 0.0, 0.0))
    with pytest.raises(SplitError):
        D.split(100, (0.5, 0.2, 0.2))


@settings(max_examples=200, deadline=None)
@given(st.integers(10, 5000), st.sampled_from([(0.7, 0.1, 0.2), (0.6, 0.2, 0.2), (0.8, 0.1, 0.1)]))
def test_split_matches_cumulative_floor(length, ratios):
    from fractions import Fraction

    fr = [Fraction(str(r)) for r in ratios]
    b1 = math.floor(length * fr[0])
    b2 = math.floor(length * (fr[0] + fr[1]))
    assert D.split(length, ratios) == ((0, b1), (b1, b2), (b2, length))


def test_meta_validation_and_registry(tmp_path):
    with pytest.raises(ConfigError):
        D.DatasetMeta(name="x", ratios=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        D.DatasetMeta(name="x", horizons=(800,))
    meta = D.DatasetMeta(name="x", period=24, path="x.csv", channels=2)
    D.write_registry([meta], tmp_path / "reg.json")
    loaded = D.load_registry(tmp_path / "reg.json")["x"]
    assert loaded.path == str(tmp_path / "x.csv") and loaded.period == 24
    with pytest.raises(ConfigError):
        D.load_registry(tmp_path / "missing.json")


def test_standardize_examples():
    rng = np.random.default_rng(1)
    raw = np.column_stack([rng.normal(5, 2, 200), np.concatenate([rng.normal(0, 1, 140), rng.normal(9, 4, 60)])])
    store = D.from_array(raw, META)
    z = D.standardize(store)
    lo, hi = z.train_range
    assert np.allclose(z.values[lo:hi].mean(axis=0), 0.0, atol=1e-9)
    for c in range(2):
        assert np.allclose(D.destandardize(z, z.values[:, c], c), raw[:, c], atol=1e-9)
    tlo, thi = z.test_range
    assert abs(z.values[tlo:thi, 1].mean()) > 1.0  # test segment was not used for the fit
    # mutating val/test leaves the fitted statistics alone
    raw2 = raw.copy()
    raw2[140:] = 1e6
    assert D.standardize(D.from_array(raw2, META)).train_scalers == z.train_scalers


def test_window_examples():
    store = D.from_array(np.arange(100.0), D.DatasetMeta(name="w", ratios=(0.8, 0.1, 0.1)))
    assert D.window_count(10, 3, 2) == 6
    assert D.window_count(5, 3, 2) == 1
    pairs = list(D.windows(store, "test", 3, 2))
    assert len(pairs) == 6
    brute = [(np.arange(s, s + 3), np.arange(s + 3, s + 5)) for s in range(90, 96)]
    for (x, y), (bx, by) in zip(pairs, brute):
        assert x[:, 0].tolist() == bx.tolist() and y[:, 0].tolist() == by.tolist()
    with pytest.raises(InsufficientDataError):
        list(D.windows(store, "test", 8, 3))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.integers(1, 60), st.integers(1, 60))
def test_window_count_formula(n, look_back, horizon):
    assert D.window_count(n, look_back, horizon) == window_count_loop(n, look_back, horizon)


def test_budget_plans():
    assert D.budgets_for(24, "geometric").budgets == (24, 48, 96, 192, 384, 768, 1536, 3072)
    assert D.budgets_for(52, "arithmetic").budgets == (52, 104, 156, 208, 260, 312, 364, 416)
    assert D.budgets_for(1).budgets == (1, 2, 4, 8, 16, 32, 64, 128)
    with pytest.raises(ConfigError):
        D.BudgetPlan(10, (10, 5))
    with pytest.raises(ConfigError):
        D.BudgetPlan(10, (5, 20))


def test_fewshot_slice_examples():
    store = D.from_array(np.arange(125.0), D.DatasetMeta(name="f", ratios=(0.8, 0.1, 0.1)))
    assert store.train_range == (0, 100)
    assert D.fewshot_slice(store, 500).train_range == (0, 100)
    s5 = D.fewshot_slice(store, 5)
    assert s5.train_range == (95, 100)
    assert s5.train_values()[:, 0].tolist() == [95.0, 96.0, 97.0, 98.0, 99.0]
    assert s5.val_range == store.val_range and s5.test_range == store.test_range
    assert s5.train_scalers[0].center == 97.0 != store.train_scalers[0].center
    a, b = D.fewshot_slice(store, 7), D.fewshot_slice(store, 30)
    assert set(range(*a.train_range)) <= set(range(*b.train_range))


def test_access_log_records_purposes():
    store = D.from_array(np.arange(100.0), META)
    sliced = D.fewshot_slice(store, 10)
    sliced.train_values(purpose="fit")
    D.window_arrays(sliced, "test", 5, 2)
    fits = [(lo, hi) for purpose, lo, hi in store.access_log if purpose == "fit"]
    assert fits == [(60, 70)]
    assert any(p == "eval" for p, _, _ in store.access_log)


def test_corpus_is_deterministic(tmp_path):
    r1 = D.write_corpus(tmp_path / "a", seed=3, length=500, names=("X", "Y"))
    r2 = D.write_corpus(tmp_path / "b", seed=3, length=500, names=("X", "Y"))
    for name in ("X", "Y"):
        assert (tmp_path / "a" / f"{name}.csv").read_bytes() == (tmp_path / "b" / f"{name}.csv").read_bytes()
    reg = D.load_registry(r1)
    store = D.load_dataset(reg["X"])
    assert store.n_channels == 7 and len(store) == 500 and store.meta.period == 24
    assert store.train_range == (0, 300)
    assert not np.array_equal(store.values, D.load_dataset(D.load_registry(r2)["Y"]).values)
