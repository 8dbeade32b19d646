import pytest

from qeraser.events import RunConfig
from qeraser.optics import SlitGeometry
from qeraser.pipeline import run_pipeline

SEED = 20261016
N_PAIRS = 1_000_000

_acceptance_lines = []


@pytest.fixture
def geom():
    return SlitGeometry()


@pytest.fixture(scope="session")
def kim_run():
    return run_pipeline(RunConfig(seed=SEED, n_pairs=N_PAIRS, mode="kim"))


@pytest.fixture(scope="session")
def marked_run():
    return run_pipeline(RunConfig(seed=SEED + 1, n_pairs=N_PAIRS, mode="marked"))


@pytest.fixture(scope="session")
def plain_run():
    return run_pipeline(RunConfig(seed=SEED + 2, n_pairs=N_PAIRS, mode="plain"))


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
