# wienernet/tests/conftest.py
"""
Shared fixtures: the 3-node chain model, a white-state model and small
experiment configs isolated from the user's home and environment.
"""
import math

import numpy as np
import pytest

from wienernet.config import ExperimentConfig, GraphSpec
from wienernet.graph import Graph, chain_graph
from wienernet.lds_sim import LdsModel
from wienernet.spectral import SpectralDesign

CHAIN_H = [
    [0.2, 0.5, 0.0],
    [0.3, 0.2, 0.4],
    [0.0, 0.2, 0.2],
]
CHAIN_F = 2 * math.pi / 64


@pytest.fixture
def chain():
    return chain_graph(3)


@pytest.fixture
def chain_model():
    return LdsModel(h=np.array(CHAIN_H), noise_gain=np.ones(3), ma_coeffs=(1.0, -0.3))


@pytest.fixture
def empty3():
    return Graph(node_count=3)


@pytest.fixture
def ma_model():
    """h = 0 driven by MA(1) noise (1, -0.3)."""
    return LdsModel(h=np.zeros((3, 3)), noise_gain=np.ones(3), ma_coeffs=(1.0, -0.3))


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """Keep ~/.wienernet and WIENERNET_* variables out of every test."""
    home = tmp_path / "home"
    home.mkdir()
    monkeypatch.setenv("HOME", str(home))
    for name in ("WIENERNET_SEED", "WIENERNET_OUT", "WIENERNET_TRIALS",
                 "WIENERNET_EPSILON", "WIENERNET_WORKERS", "WIENERNET_ASCII"):
        monkeypatch.delenv(name, raising=False)
    return home


@pytest.fixture
def small_config(tmp_path):
    """3-node chain, short trajectories, a handful of trials."""
    return ExperimentConfig(
        graph=GraphSpec(kind="chain", size=3),
        N=32,
        trials=3,
        search_start=1,
        search_stop=64,
        out=tmp_path / "out",
    )


def make_design(n: int, p: int, seed: int = 0, node: int = 0) -> SpectralDesign:
    """Random complex design with columns scaled to norm sqrt(n)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    x *= math.sqrt(n) / np.linalg.norm(x, axis=0)
    beta = rng.standard_normal(p) + 1j * rng.standard_normal(p)
    y = x @ beta + 0.3 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    y *= math.sqrt(n) / np.linalg.norm(y)
    return SpectralDesign(
        node=node,
        frequency=CHAIN_F,
        response=y,
        design=x,
        column_scales=np.ones(p),
        response_scale=1.0,
    )
