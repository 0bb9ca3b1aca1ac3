import numpy as np
import pytest

from ddlandweber.io import write_pgm
from ddlandweber.phantoms import phantom_set

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def make_dataset(directory, count=13, size=32, seed=1):
    directory.mkdir(parents=True, exist_ok=True)
    for i, u in enumerate(phantom_set(count, size, seed)):
        write_pgm(str(directory / f"img{i:02d}.pgm"), u)
    return directory


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    return make_dataset(tmp_path_factory.mktemp("desk") / "data")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
