import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edcausal.simulator import SimConfig, generate_graph, simulate_dataset  # noqa: E402

DATA = Path(__file__).parent / "data"

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []

SMALL = SimConfig(
    num_constructs=5,
    num_students=100,
    num_steps=2000,
    edge_probability=0.3,
    weight_range=(0.3, 0.6),
    seed=0,
)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def small_world():
    """Five-construct graph with strong edges and 100 x 2000 steps of data."""
    graph = generate_graph(SMALL)
    return SMALL, graph, simulate_dataset(SMALL, graph)


@pytest.fixture(scope="session")
def tiny_world():
    cfg = SimConfig(num_constructs=4, num_students=20, num_steps=60, edge_probability=0.4, seed=3)
    graph = generate_graph(cfg)
    return cfg, graph, simulate_dataset(cfg, graph)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
