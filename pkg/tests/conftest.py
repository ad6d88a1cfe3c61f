import pathlib

import numpy as np
import pytest
import toml

from scale_aware_sharding.collectives import VirtualTransport
from scale_aware_sharding.topology import ClusterSpec


@pytest.fixture
def fxt_cluster():
    # Returned as a function so that tests can choose the cluster shape.
    def build(num_nodes, devices_per_node, **kwargs):
        kwargs.setdefault("intra_node_bandwidth", 128e9)
        kwargs.setdefault("inter_node_bandwidth_per_node", 12.5e9)
        return ClusterSpec(
            num_nodes=num_nodes, devices_per_node=devices_per_node, **kwargs
        )

    return build


@pytest.fixture
def fxt_transport():
    with VirtualTransport() as transport:
        yield transport


@pytest.fixture
def fxt_random_shards():
    def generate(ranks, size, seed=0, dtype=np.int64):
        rng = np.random.default_rng(seed)
        if np.dtype(dtype) == np.uint8:
            return {
                r: rng.integers(0, 256, size=size, dtype=np.uint8) for r in ranks
            }

        if np.dtype(dtype).kind == "f":
            return {r: rng.standard_normal(size).astype(dtype) for r in ranks}

        return {r: rng.integers(-1000, 1000, size=size, dtype=dtype) for r in ranks}

    return generate


@pytest.fixture
def fxt_load_test_toml():
    # Scenario definitions are a default.toml merged with per-test overrides.
    def load(test_module, file_name):
        with open(pathlib.Path("tests", test_module, f"{file_name}.toml"), "r") as f:
            return toml.load(f)

    return load
