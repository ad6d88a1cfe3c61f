import pytest

from scale_aware_sharding.topology import (
    min_feasible_partition,
    model_state_bytes,
    model_state_bytes_per_device,
)
from scale_aware_sharding.utilities.exceptions import InfeasibleError, OutOfRangeError


@pytest.mark.dependency()
def test_zero_parameters():
    with pytest.raises(OutOfRangeError):
        model_state_bytes(0)


@pytest.mark.dependency()
def test_headroom_above_one(fxt_cluster):
    with pytest.raises(OutOfRangeError):
        min_feasible_partition(1, fxt_cluster(1, 8), headroom_fraction=1.5)


@pytest.mark.parametrize(
    "params, bytes_per_param, expected",
    [(10 * 10**9, 16, 160 * 10**9), (10**9, 16, 16 * 10**9), (10**9, 18, 18 * 10**9)],
)
def test_model_state_bytes(params, bytes_per_param, expected):
    assert model_state_bytes(params, bytes_per_param) == expected


def test_per_device_share():
    assert model_state_bytes_per_device(160e9, 8) == 20e9


@pytest.mark.dependency(depends=["test_zero_parameters", "test_headroom_above_one"])
def test_ten_billion_parameters_fit_one_node(fxt_cluster):
    cluster = fxt_cluster(8, 8, device_memory=32e9)
    assert min_feasible_partition(160e9, cluster, node_granular=True) == 8
    # p = 6 would fit but does not divide 64 ranks
    assert min_feasible_partition(160e9, cluster) == 8


def test_tiny_model(fxt_cluster):
    cluster = fxt_cluster(2, 4)
    assert min_feasible_partition(1, cluster) == 1
    assert min_feasible_partition(1, cluster, node_granular=True) == 4


def test_model_too_large(fxt_cluster):
    with pytest.raises(InfeasibleError):
        min_feasible_partition(10e12, fxt_cluster(1, 8, device_memory=32e9))


def test_larger_models_never_need_fewer_devices(fxt_cluster):
    cluster = fxt_cluster(16, 8, device_memory=32e9)
    sizes = [2**i * 1e9 for i in range(12)]
    partitions = [min_feasible_partition(size, cluster) for size in sizes]
    assert partitions == sorted(partitions)
