import os
from pathlib import Path

import numpy as np
import pytest

from hotvae import numerics as nx

ACCEPTANCE_LINES: list[str] = []


def central_difference(f, array: np.ndarray, index, h: float = 1e-5) -> float:
    """(f(x+h) - f(x-h)) / 2h for one coordinate of ``array``, restoring it afterwards."""
    old = array[index]
    array[index] = old + h
    up = f()
    array[index] = old - h
    down = f()
    array[index] = old
    return (up - down) / (2 * h)


def autodiff_grad(f, params):
    for p in params:
        p.grad = None
    with nx.Tape() as tape:
        out = f()
    nx.backward(out, tape)
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


def data_dir() -> Path:
    return Path(os.environ.get("HOTVAE_DATA_DIR", Path(__file__).resolve().parent.parent / "data"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
