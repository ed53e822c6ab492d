import numpy as np
import pytest

from balign.config import ParamGrid, SystemConfig
from balign.signal import TimingConstants


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cfg():
    """Reduced link: 64 subcarriers, otherwise the default parameters."""
    return SystemConfig(n_subcarriers=64)


@pytest.fixture(scope="session")
def small_grid(small_cfg):
    return ParamGrid.from_config(small_cfg)


@pytest.fixture(scope="session")
def timing(small_cfg):
    return TimingConstants.from_config(small_cfg)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
