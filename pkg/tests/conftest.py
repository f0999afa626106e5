import json
from pathlib import Path

import numpy as np
import pytest

from roadmon.netmodel import Link, Network, ODMatrix, load_network, load_od_matrix

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_pair(stem: str):
    net = load_network(FIXTURES / f"{stem}_links.csv")
    od = load_od_matrix(FIXTURES / f"{stem}_od.csv", net)
    return net, od


def build_net(edges, node_ids=None):
    """Network from (u, v[, ff[, ct]]) tuples; hop weight defaults to 1."""
    links = []
    for edge in edges:
        u, v = edge[0], edge[1]
        ff = edge[2] if len(edge) > 2 else 1.0
        ct = edge[3] if len(edge) > 3 else ff
        links.append(Link(u, v, 1.0, 1, ff, ct, 100.0, 0.0, 0.0))
    return Network(links, node_ids)


def star_net(leaves: int):
    """Node 0 in the middle, leaves 1..k attached both ways."""
    edges = []
    for leaf in range(1, leaves + 1):
        edges.append((0, leaf))
        edges.append((leaf, 0))
    return build_net(edges)


def random_network(rng, n_max=12, p=0.35):
    """Random directed network; weights are multiples of 0.25 so that
    shortest-path ties are exact in float arithmetic."""
    n = int(rng.integers(4, n_max + 1))
    links = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p:
                ff = int(rng.integers(1, 13)) * 0.25
                ct = ff + int(rng.integers(0, 9)) * 0.25
                links.append(Link(u, v, 1.0, int(rng.integers(1, 4)), ff, ct,
                                  100.0, 0.0, float(rng.integers(0, 500))))
    if not links:
        links.append(Link(0, 1, 1.0, 1, 1.0, 1.0, 100.0, 0.0, 0.0))
    return Network(links, node_ids=range(n))


def random_od(rng, network, max_pairs=6):
    ids = list(network.node_ids)
    entries = {}
    for _ in range(int(rng.integers(2, max_pairs + 1))):
        o, d = rng.choice(len(ids), size=2, replace=False)
        key = (ids[int(o)], ids[int(d)])
        if key not in entries:
            entries[key] = float(rng.integers(1, 20)) * 10.0
    return ODMatrix(entries)


@pytest.fixture(scope="session")
def diamond():
    return load_pair("diamond")


@pytest.fixture(scope="session")
def eight():
    return load_pair("eight")


@pytest.fixture(scope="session")
def ten():
    return load_pair("ten")


@pytest.fixture(scope="session")
def synth():
    return load_pair("synth")


@pytest.fixture(scope="session")
def synth_manifest():
    return json.loads(fixture_path("synth_manifest.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
