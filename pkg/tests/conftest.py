import numpy as np
import pytest

from synthlab import pfn
from synthlab import prior as P


def tiny_configs(seed: int = 0, max_history: int = 24, head_width: int = 720):
    prior = P.PriorConfig(
        max_history=max_history, period_range=(8, 11), coeff_count_range=(3, 4), target_length=head_width
    )
    model = pfn.PfnConfig(n_layers=1, n_heads=2, d_model=8, d_ffn=16, max_history=max_history, head_width=head_width)
    train = pfn.TrainConfig(n_samples=64, batch_size=16, epochs=2, base_lr=0.003, seed=seed, n_validation=16)
    return prior, model, train


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The desk-scale training run, shared by the acceptance checks that need a trained model."""
    import time

    prior_cfg, model_cfg, train_cfg = pfn.desk_configs(seed=0)
    model = pfn.PfnModel.init(model_cfg, seed=0)
    start = time.perf_counter()
    result = pfn.train(model, prior_cfg, train_cfg)
    elapsed = time.perf_counter() - start
    path = tmp_path_factory.mktemp("desk") / "desk.ckpt"
    pfn.save(model, path, {"seed": 0, "steps": result.steps, "final_loss": result.final_val_loss})
    return {"model": model, "result": result, "seconds": elapsed, "path": path, "prior": prior_cfg}


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; lines are repeated in the terminal summary."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
