import numpy as np
import pytest

from scale_aware_sharding.collectives import (
    ChunkLayout,
    VirtualTransport,
    all_gather,
    hierarchical_all_gather,
    inter_node_stage,
    intra_node_stage,
    rearrange_stage,
)
from scale_aware_sharding.cost_model import inter_node_traffic
from scale_aware_sharding.topology import build_group_layout
from scale_aware_sharding.utilities.exceptions import ShapeError
from tests.helpers import check_buffers_equal

chunks = {0: b"\x00", 1: b"\x01", 2: b"\x02", 3: b"\x03"}


@pytest.mark.dependency()
def test_group_not_aligned_to_nodes(fxt_cluster):
    with pytest.raises(ShapeError):
        inter_node_stage((1, 2, 3, 4), fxt_cluster(4, 2), {r: b"x" for r in range(8)})


@pytest.mark.dependency()
def test_layout_larger_than_cluster(fxt_cluster):
    with pytest.raises(ShapeError):
        hierarchical_all_gather(
            build_group_layout(8, 8), fxt_cluster(2, 2), {r: b"x" for r in range(8)}
        )


@pytest.mark.dependency(
    depends=["test_group_not_aligned_to_nodes", "test_layout_larger_than_cluster"]
)
def test_four_chunks_on_two_nodes(fxt_cluster):
    cluster = fxt_cluster(2, 2)
    stage_one, layouts = inter_node_stage((0, 1, 2, 3), cluster, chunks)
    assert stage_one[0].tobytes() == b"\x00\x02"
    assert stage_one[1].tobytes() == b"\x01\x03"
    assert layouts[0] == ChunkLayout((0, 2))
    assert layouts[3] == ChunkLayout((1, 3))

    staging = rearrange_stage(stage_one, 2)
    assert [b.tobytes() for b in staging[0]] == [b"\x00", b"\x02"]

    output = intra_node_stage((0, 1, 2, 3), cluster, staging)
    for rank in range(4):
        assert output[rank].tobytes() == b"\x00\x01\x02\x03"


def test_skipping_rearrangement_gives_wrong_layout(fxt_cluster):
    output = hierarchical_all_gather(
        build_group_layout(4, 4), fxt_cluster(2, 2), chunks, rearrange=False
    )
    layout = ChunkLayout.identify(output[0], [chunks[r] for r in range(4)])
    assert layout.chunks == (0, 2, 1, 3)


def test_single_node_group_is_vanilla(fxt_cluster, fxt_random_shards):
    shards = fxt_random_shards(range(8), 16, seed=2, dtype=np.uint8)
    expected = all_gather(range(8), shards)
    actual = hierarchical_all_gather(build_group_layout(8, 8), fxt_cluster(1, 8), shards)
    check_buffers_equal(expected, actual)


def test_several_partition_groups(fxt_cluster, fxt_random_shards):
    cluster = fxt_cluster(4, 2)
    layout = build_group_layout(8, 4)
    shards = fxt_random_shards(range(8), 5, seed=4)
    actual = hierarchical_all_gather(layout, cluster, shards)
    expected = {}
    for group in layout.partition_groups:
        expected.update(all_gather(group, {r: shards[r] for r in group}))

    check_buffers_equal(expected, actual)


def test_inter_node_bytes_match_cost_model(fxt_cluster, fxt_random_shards):
    cluster = fxt_cluster(8, 8)
    chunk_bytes = 16
    shards = fxt_random_shards(range(64), chunk_bytes, dtype=np.uint8)
    with VirtualTransport(cluster) as transport:
        hierarchical_all_gather(build_group_layout(64, 64), cluster, shards, transport)
        node_bytes = [transport.node_inter_node_bytes(node) for node in range(8)]

    expected = inter_node_traffic(64, 8, 64 * chunk_bytes, hierarchical=True)
    assert node_bytes == [expected] * 8


@pytest.mark.parametrize("p", range(1, 65))
def test_matches_vanilla_all_gather(fxt_cluster, p):
    # Every k in 1, 2, 4 and 8 that divides p is checked against one vanilla
    # all-gather of the same shards.
    clusters = [fxt_cluster(p // k, k) for k in (1, 2, 4, 8) if p % k == 0]
    layout = build_group_layout(p, p)
    with VirtualTransport() as transport:
        for seed in range(5):
            for chunk_bytes in (1, 7, 1024):
                rng = np.random.default_rng([seed, p, chunk_bytes])
                shards = {
                    r: rng.integers(0, 256, size=chunk_bytes, dtype=np.uint8)
                    for r in range(p)
                }
                expected = all_gather(range(p), shards, transport)
                for cluster in clusters:
                    actual = hierarchical_all_gather(layout, cluster, shards, transport)
                    check_buffers_equal(expected, actual)

        assert transport.pending_messages() == 0
