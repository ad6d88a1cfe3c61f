"""
Partition and replication groups.

Model states are partitioned within groups of p consecutive ranks (partition
groups). Ranks holding the same local group rank in every partition group
form a replication group and own the same part of the model states.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

from scale_aware_sharding.utilities.exceptions import (
    NonDivisibleError,
    OutOfRangeError,
    ShapeError,
)
from scale_aware_sharding.utilities.validation import validate_count

from .cluster import ClusterSpec


@dataclass(frozen=True)
class GroupLayout:
    "The decomposition of n ranks into partition and replication groups."
    n: int
    "Total number of ranks."

    p: int
    "Partition group size."

    partition_groups: Tuple[Tuple[int, ...], ...]
    "n/p contiguous rank ranges, in group order."

    replication_groups: Tuple[Tuple[int, ...], ...]
    "p groups of n/p ranks, group j holding the ranks r with r mod p = j."

    local_group_rank: Dict[int, int]
    "Position of each rank within its partition group."

    def partition_group_of(self, rank: int) -> Tuple[int, ...]:
        return self.partition_groups[rank // self.p]

    def replication_group_of(self, rank: int) -> Tuple[int, ...]:
        return self.replication_groups[self.local_group_rank[rank]]

    def owned_chunk(self, rank: int) -> int:
        "Index of the model state chunk owned by a rank."
        return self.local_group_rank[rank]

    @property
    def num_partition_groups(self) -> int:
        return self.n // self.p


def build_group_layout(n: int, p: int) -> GroupLayout:
    """
    Divide n ranks into partition groups of size p.

    Args:
        n: The total number of ranks.
        p: The partition group size. p = n gives a single partition group,
          i.e. partitioning across all ranks.

    Returns:
    The group layout. Identical arguments always give identical layouts.
    """
    validate_count("n", n, 1)
    validate_count("p", p)
    if p < 1 or p > n:
        raise OutOfRangeError(f"partition size must be between 1 and {n}, got {p}")

    if n % p:
        raise NonDivisibleError(f"partition size {p} does not divide {n} ranks")

    partition_groups = tuple(
        tuple(range(g * p, (g + 1) * p)) for g in range(n // p)
    )
    replication_groups = tuple(tuple(range(j, n, p)) for j in range(p))
    return GroupLayout(
        n=n,
        p=p,
        partition_groups=partition_groups,
        replication_groups=replication_groups,
        local_group_rank={r: r % p for r in range(n)},
    )


def validate_partition_shape(cluster: ClusterSpec, p: int):
    """
    Check that partition groups of size p line up with the cluster's nodes.

    A group must either fit inside one node (p <= k) or cover whole nodes
    (k divides p). Other shapes would straddle node boundaries unevenly and
    are rejected.
    """
    build_group_layout(cluster.n, p)
    k = cluster.devices_per_node
    if p > k and p % k:
        raise ShapeError(
            f"partition size {p} must not exceed {k} devices per node or be a "
            "multiple of it"
        )
