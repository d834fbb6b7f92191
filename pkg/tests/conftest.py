import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mgcurv.curvature import VerificationContext
from mgcurv.graph import build_graph

GRAPH_DIR = Path(__file__).resolve().parents[1] / "graphs"

DESCRIPTIONS = {
    "interval": {"vertices": [0, 1], "edges": [{"tail": 0, "head": 1, "length": 1.0}]},
    "circle": {"vertices": ["o"], "edges": [{"tail": "o", "head": "o", "length": 1.0}]},
    "star": {
        "vertices": ["hub", "a", "b", "c"],
        "edges": [{"tail": "hub", "head": x, "length": 1.0} for x in "abc"],
    },
    "lollipop": {
        "vertices": [0, 1, 2],
        "edges": [
            {"tail": 0, "head": 1, "length": 0.7},
            {"tail": 1, "head": 2, "length": 0.4},
            {"tail": 2, "head": 2, "length": 0.9},
        ],
    },
}

# acceptance lines collected from tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def make_graph(name):
    return build_graph(DESCRIPTIONS[name])


@pytest.fixture(scope="session")
def interval():
    return make_graph("interval")


@pytest.fixture(scope="session")
def circle():
    return make_graph("circle")


@pytest.fixture(scope="session")
def star():
    return make_graph("star")


@pytest.fixture(scope="session")
def lollipop():
    return make_graph("lollipop")


@pytest.fixture(scope="session")
def graphs(interval, circle, star, lollipop):
    return {"interval": interval, "circle": circle, "star": star, "lollipop": lollipop}


@pytest.fixture(scope="session")
def contexts(graphs):
    """Verification contexts at h = 0.05, built once per session."""
    return {name: VerificationContext.build(G, 0.05) for name, G in graphs.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
