import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from panometric import contrastive as ctr
from panometric.corpus import generate_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_3x100():
    """The 3 x 100 training corpus at 32 x 64, seed 0."""
    return generate_corpus(100, W=64, H=32, seed=0)


@pytest.fixture(scope="session")
def trained_encoder(corpus_3x100):
    images, labels, _ = corpus_3x100
    start = time.perf_counter()
    with threadpool_limits(limits=1):
        result = ctr.train_distort_encoder(images, labels, ctr.TrainConfig(seed=0, steps=2000))
    result.elapsed = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def heldout_corpus():
    return generate_corpus(40, W=64, H=32, seed=777)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
