import json

import numpy as np
import pytest

from aggtree import (
    AggregationTreeModel,
    Discrete,
    GaussianCopula,
    Normal,
    RootedTree,
    node_id,
)


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record_criterion(request):
    """Registers a pass/fail line for the end-of-run acceptance report."""
    store = request.config._acceptance

    def record(num, desc, passed):
        store[num] = (desc, bool(passed))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(store):
        desc, ok = store[num]
        terminalreporter.write_line(
            "%s  criterion %2d: %s" % ("PASS" if ok else "FAIL", num, desc))


def four_leaf_members():
    tree = RootedTree.from_nested(
        {"children": [{"children": [{}, {}]}, {"children": [{}, {}]}]})
    marginals = {
        "1.1": Normal(4.0, 3.0),
        "1.2": Normal(2.0, 4.0),
        "2.1": Normal(0.0, 10.0),
        "2.2": Normal(3.0, 2.0),
    }
    copulas = {
        "1": GaussianCopula.bivariate(0.7),
        "2": GaussianCopula.bivariate(0.5),
        "root": GaussianCopula.bivariate(0.2),
    }
    return tree, marginals, copulas


@pytest.fixture
def four_leaf_model():
    """Four normal leaves in two sibling pairs, all-Gaussian copulas."""
    tree, marginals, copulas = four_leaf_members()
    return AggregationTreeModel(tree, marginals, copulas)


# covariance of the four-leaf model rounded to four decimals, as published
FOUR_LEAF_COV_4DP = np.array([
    [3.0, 2.4249, 0.9502, 0.3290],
    [2.4249, 4.0, 1.1254, 0.3896],
    [0.9502, 1.1254, 10.0, 2.2361],
    [0.3290, 0.3896, 2.2361, 2.0],
])

FOUR_LEAF_MEAN = np.array([4.0, 2.0, 0.0, 3.0])


@pytest.fixture
def bernoulli3_model():
    """Three fair Bernoulli leaves: pair under rho=0.7, root rho=0.2."""
    tree = RootedTree.from_nested({"children": [{"children": [{}, {}]}, {}]})
    coin = [0.5, 0.5]
    marginals = {
        "1.1": Discrete([0.0, 1.0], coin),
        "1.2": Discrete([0.0, 1.0], coin),
        "2": Discrete([0.0, 1.0], coin),
    }
    copulas = {
        "1": GaussianCopula.bivariate(0.7),
        "root": GaussianCopula.bivariate(0.2),
    }
    return AggregationTreeModel(tree, marginals, copulas)


FOUR_LEAF_CONFIG = {
    "tree": {"children": [{"children": [{}, {}]}, {"children": [{}, {}]}]},
    "marginals": {
        "1.1": {"type": "normal", "mean": 4, "var": 3},
        "1.2": {"type": "normal", "mean": 2, "var": 4},
        "2.1": {"type": "normal", "mean": 0, "var": 10},
        "2.2": {"type": "normal", "mean": 3, "var": 2},
    },
    "copulas": {
        "1": {"type": "gaussian", "rho": 0.7},
        "2": {"type": "gaussian", "rho": 0.5},
        "root": {"type": "gaussian", "rho": 0.2},
    },
    "seed": 42,
    "n": 1000,
}


@pytest.fixture
def four_leaf_config():
    return json.loads(json.dumps(FOUR_LEAF_CONFIG))


@pytest.fixture
def config_file(tmp_path):
    """Writes a config dict to a temp json file and returns the path."""

    def write(cfg, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        return str(path)

    return write


def leaf(spec):
    return node_id(spec)
