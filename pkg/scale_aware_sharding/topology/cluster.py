"""
The physical shape of a training cluster.

Ranks are numbered node-major: rank = node * devices_per_node + local rank.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass
from typing import Tuple

from scale_aware_sharding.utilities.validation import (
    validate_count,
    validate_non_negative,
    validate_positive,
)


@dataclass(frozen=True)
class ClusterSpec:
    "Nodes, devices and links of a two level cluster."
    num_nodes: int
    "Number of computational nodes."

    devices_per_node: int
    "Number of devices on each node (k)."

    intra_node_bandwidth: float
    "Bandwidth between devices of one node in bytes per second."

    inter_node_bandwidth_per_node: float
    "NIC bandwidth of a node in bytes per second, shared by its devices."

    alpha_intra: float = 0.0
    "Per message startup latency inside a node in seconds."

    alpha_inter: float = 0.0
    "Per message startup latency between nodes in seconds."

    device_memory: float = 32e9
    "Memory of one device in bytes."

    device_peak_flops: float = 125e12
    "Peak compute rate of one device in FLOP per second."

    def __post_init__(self):
        validate_count("num_nodes", self.num_nodes, 1)
        validate_count("devices_per_node", self.devices_per_node, 1)
        validate_positive("intra_node_bandwidth", self.intra_node_bandwidth)
        validate_positive(
            "inter_node_bandwidth_per_node", self.inter_node_bandwidth_per_node
        )
        validate_non_negative("alpha_intra", self.alpha_intra)
        validate_non_negative("alpha_inter", self.alpha_inter)
        validate_positive("device_memory", self.device_memory)
        validate_positive("device_peak_flops", self.device_peak_flops)

    @property
    def k(self) -> int:
        return self.devices_per_node

    @property
    def n(self) -> int:
        "Total number of ranks."
        return self.num_nodes * self.devices_per_node

    def _check_rank(self, rank):
        validate_count("rank", rank)
        if rank >= self.n:
            raise IndexError(f"rank {rank} is outside a cluster of {self.n} ranks")

    def node_of(self, rank: int) -> int:
        self._check_rank(rank)
        return rank // self.devices_per_node

    def local_node_rank(self, rank: int) -> int:
        self._check_rank(rank)
        return rank % self.devices_per_node

    def rank_of(self, node: int, local_rank: int) -> int:
        if not 0 <= node < self.num_nodes:
            raise IndexError(f"node {node} is outside a cluster of {self.num_nodes}")

        if not 0 <= local_rank < self.devices_per_node:
            raise IndexError(
                f"local rank {local_rank} is outside a node of {self.devices_per_node}"
            )

        return node * self.devices_per_node + local_rank

    def node_ranks(self, node: int) -> Tuple[int, ...]:
        return tuple(self.rank_of(node, j) for j in range(self.devices_per_node))

    def spans_nodes(self, ranks) -> bool:
        "True when the given ranks live on more than one node."
        return len({self.node_of(r) for r in ranks}) > 1
