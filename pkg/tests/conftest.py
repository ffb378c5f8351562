import json

import pytest

from privsbm.graph_model import Graph, Labeling, SbmParams
from privsbm.mechanism import MechanismConfig


@pytest.fixture
def small_params():
    return SbmParams(n=4, k=2, a=2.0, b=1.0, beta=1.0)


@pytest.fixture
def block_truth():
    return Labeling((1, 1, 2, 2), 2)


@pytest.fixture
def matching_graph():
    return Graph.from_edges(4, [(0, 1), (2, 3)])


@pytest.fixture
def wide_mechanism(small_params):
    """Envelope containing every graph on four vertices."""
    return MechanismConfig.create(small_params, epsilon=2.0, c=10.0)


@pytest.fixture
def config_file(tmp_path):
    """Write a JSON config and return its path."""

    def write(raw, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return path

    return write
