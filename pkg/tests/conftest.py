import numpy as np
import pytest

from csilab.channel_gen import ScenarioConfig, generate_channels


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig(rng_seed=1, name="test-k32")


@pytest.fixture(scope="session")
def small_channels(scenario):
    """200 channels of shape (32, 8, 1)."""
    return generate_channels(scenario, 200)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
