import time
from typing import NamedTuple

import numpy as np
import pytest

from rotateqvs.model import ModelParams
from rotateqvs.synthetic import SyntheticSpec, generate
from rotateqvs.training import TrainConfig, TrainResult, train

# settings used for every planted-pattern training run in the suite
SYNTH_CONFIG = TrainConfig(dim=25, lr=0.1, neg_ratio=10, margin=20.0, epochs=300, batch_size=64,
                           valid_every=25, seed=0)

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


class TimedRun(NamedTuple):
    result: TrainResult
    seconds: float
    checkpoint: object


@pytest.fixture(scope="session")
def synthetic_dataset():
    return generate(SyntheticSpec())


@pytest.fixture(scope="session")
def trained_synthetic(synthetic_dataset, tmp_path_factory):
    """One full-length planted-pattern run, shared by the pattern and acceptance tests."""
    checkpoint = tmp_path_factory.mktemp("planted") / "checkpoint.bin"
    start = time.perf_counter()
    result = train(synthetic_dataset, SYNTH_CONFIG, checkpoint_path=checkpoint)
    return TimedRun(result, time.perf_counter() - start, checkpoint)


def hand_params(entity, relation, time) -> ModelParams:
    """Build params from lists of ``(k, 4)`` rows, one per table row."""
    def table(rows):
        return np.ascontiguousarray(np.transpose(np.asarray(rows, dtype=np.float64), (2, 0, 1)))
    return ModelParams(table(entity), table(relation), table(time))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)
