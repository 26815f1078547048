import numpy as np
import pytest

from fedhe import datakit, hecore


@pytest.fixture(scope="session")
def key():
    return hecore.keygen(hecore.KeyGenConfig(seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bcbase_table():
    return datakit.synth("bcbase_like", 600, seed=5)


@pytest.fixture(scope="session")
def orb_table():
    return datakit.synth("orb_like", 500, seed=5)


@pytest.fixture(scope="session")
def toy_classification():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(240, 6))
    y = (x[:, 0] - 0.7 * x[:, 1] + 0.5 * x[:, 2] * x[:, 3] + 0.3 * rng.normal(size=240) > 0.4).astype(float)
    return x, y


@pytest.fixture(scope="session")
def toy_regression():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 5))
    y = 3.0 + x @ np.array([1.5, -2.0, 0.0, 0.5, 0.0]) + 0.2 * rng.normal(size=200)
    return x, y


_CRITERIA: list[tuple[int, str]] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        _CRITERIA.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
