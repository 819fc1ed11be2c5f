import numpy as np
import pytest

from sadre.harness.corpus import synth_corpus

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed in the summary."""

    def record(num: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {detail}"
        _CRITERIA[num] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus8():
    return [c.plane for c in synth_corpus(8, 256, seed=11)]


@pytest.fixture(scope="session")
def corpus20():
    return [c.plane for c in synth_corpus(20, 256, seed=12)]
