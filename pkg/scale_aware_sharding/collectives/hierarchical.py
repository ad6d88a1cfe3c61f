"""
Three-stage hierarchical all-gather.

For a partition group of p ranks covering q = p / k whole nodes:

1. Inter-node stage: the q ranks sharing a node-local rank j all-gather over
   k independent channels. Afterwards a rank holds [C_j, C_{k+j}, ...].
2. Rearrangement: the stage 1 buffer is split into q staging buffers, batch t
   holding chunk C_{t*k+j}.
3. Intra-node stage: q batched all-gathers among the node's ranks; batch t
   yields [C_{t*k}, ..., C_{t*k+k-1}] and is written at offset t*k chunks.

Gathering the stage 1 buffers inside the node without rearranging them would
produce the layout [C_0, C_2, C_1, C_3] for p = 4, k = 2 instead of
[C_0, C_1, C_2, C_3].

For Copyright information, please see LICENCE.
"""

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from scale_aware_sharding.topology import ClusterSpec, GroupLayout
from scale_aware_sharding.utilities.exceptions import ShapeError, ValidationError

from .primitives import (
    ChunkLayout,
    CollectiveGroup,
    Payload,
    _as_array,
    _collect,
    all_gather,
    batched_all_gather,
)
from .transport import VirtualTransport


def _node_aligned_nodes(group: Sequence[int], cluster: ClusterSpec) -> List[int]:
    k = cluster.devices_per_node
    p = len(group)
    if p % k:
        raise ShapeError(f"partition size {p} is not a multiple of {k} devices per node")

    first = group[0]
    if first % k or tuple(group) != tuple(range(first, first + p)):
        raise ShapeError(f"ranks {tuple(group)} are not aligned to node boundaries")

    if first + p > cluster.n:
        raise ShapeError(f"ranks {tuple(group)} exceed a cluster of {cluster.n} ranks")

    return [cluster.node_of(first) + m for m in range(p // k)]


def inter_node_stage(
    group: Sequence[int],
    cluster: ClusterSpec,
    shards: Mapping[int, Payload],
    transport: Optional[VirtualTransport] = None,
) -> Tuple[Dict[int, np.ndarray], Dict[int, ChunkLayout]]:
    """
    Run the k parallel inter-node all-gathers of a node-aligned group.

    Returns:
    Each rank's stage 1 buffer and the chunk layout of that buffer.
    """
    nodes = _node_aligned_nodes(group, cluster)
    k = cluster.devices_per_node
    transport = transport or VirtualTransport(cluster)
    buffers = {}
    layouts = {}
    for j in range(k):
        channel = CollectiveGroup(tuple(cluster.rank_of(node, j) for node in nodes))
        buffers.update(
            all_gather(channel, {r: shards[r] for r in channel.ranks}, transport)
        )
        layout = ChunkLayout(tuple(m * k + j for m in range(len(nodes))))
        layouts.update({r: layout for r in channel.ranks})

    return buffers, layouts


def rearrange_stage(
    stage_one: Mapping[int, np.ndarray], batches: int
) -> Dict[int, List[np.ndarray]]:
    """
    Copy each stage 1 buffer into per batch staging buffers.

    Returns:
    For every rank a list of `batches` staging buffers, batch t holding the
    chunk found at position t of the rank's stage 1 buffer.
    """
    staging = {}
    for rank, buffer in stage_one.items():
        if len(buffer) % batches:
            raise ValidationError(
                f"a buffer of {len(buffer)} elements cannot hold {batches} chunks"
            )

        size = len(buffer) // batches
        staging[rank] = [
            np.array(buffer[t * size : (t + 1) * size], copy=True)
            for t in range(batches)
        ]

    return staging


def intra_node_stage(
    group: Sequence[int],
    cluster: ClusterSpec,
    staging: Mapping[int, Sequence[np.ndarray]],
    transport: Optional[VirtualTransport] = None,
) -> Dict[int, np.ndarray]:
    """
    Gather the staging buffers inside each node with batched all-gathers.

    Batch t of every node is written at output offset t * k chunks.
    """
    nodes = _node_aligned_nodes(group, cluster)
    transport = transport or VirtualTransport(cluster)
    outputs = {}
    for node in nodes:
        node_group = CollectiveGroup(cluster.node_ranks(node))
        batches = len(staging[node_group.ranks[0]])
        results = batched_all_gather(
            [node_group] * batches,
            [{r: staging[r][t] for r in node_group.ranks} for t in range(batches)],
            transport,
        )
        for rank in node_group.ranks:
            first = results[0][rank]
            size = len(first)
            output = np.empty(size * batches, dtype=first.dtype)
            for t, result in enumerate(results):
                output[t * size : (t + 1) * size] = result[rank]

            outputs[rank] = output

    return outputs


def hierarchical_all_gather(
    layout: GroupLayout,
    cluster: ClusterSpec,
    shards: Mapping[int, Payload],
    transport: Optional[VirtualTransport] = None,
    rearrange: bool = True,
) -> Dict[int, np.ndarray]:
    """
    All-gather within every partition group using the three-stage algorithm.

    Args:
        layout: The partition group layout.
        cluster: The cluster the ranks live on.
        shards: Mapping of every rank to its chunk.
        transport: The transport carrying the messages.
        rearrange: Set to False to skip the rearrangement stage. This yields a
          wrong chunk order and exists to exercise the verifier.

    Returns:
    A mapping of rank to the gathered buffer, bit-identical to `all_gather`
    on the same inputs. Partition groups of at most k ranks use `all_gather`
    directly.
    """
    if layout.n > cluster.n:
        raise ShapeError(f"{layout.n} ranks do not fit a cluster of {cluster.n} ranks")

    transport = transport or VirtualTransport(cluster)
    k = cluster.devices_per_node
    outputs = {}
    for group in layout.partition_groups:
        _collect(CollectiveGroup(group), shards)
        if layout.p <= k:
            outputs.update(all_gather(group, {r: shards[r] for r in group}, transport))
            continue

        batches = layout.p // k
        stage_one, _ = inter_node_stage(group, cluster, shards, transport)
        if rearrange:
            staging = rearrange_stage(stage_one, batches)
        else:
            staging = {rank: [_as_array(b)] for rank, b in stage_one.items()}

        outputs.update(intra_node_stage(group, cluster, staging, transport))

    return outputs
