import numpy as np
import pytest

from keydyn import synth
from keydyn.nn import ModelConfig
from keydyn.trainer import RunSpec, TrainConfig, train_multiclass


@pytest.fixture(scope="session")
def small_corpus():
    """4 users x 3 sessions x 260 presses, well separated."""
    return synth.generate(synth.make_profiles(4, seed=3, separation=40), presses_per_session=260)


def small_spec(task="multiclass", **train):
    cfg = dict(learning_rate=0.005, epochs=4, batch_size=16, seed=0)
    cfg.update(train)
    return RunSpec(task=task, selection="last", length=20, stride=20,
                   model=ModelConfig(length=20, kernel_sizes=[2, 3], out_channels=6,
                                     gru_hidden=6, rate_width=4),
                   train=TrainConfig(**cfg))


@pytest.fixture(scope="session")
def backbone(small_corpus):
    return train_multiclass(small_spec(), small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for crit, verdict, detail in sorted(ACCEPTANCE, key=lambda r: _crit_key(r[0])):
        terminalreporter.write_line(f"criterion {crit:<4} {verdict:<5} {detail}")


def _crit_key(c):
    num = "".join(ch for ch in c if ch.isdigit())
    return int(num), c
