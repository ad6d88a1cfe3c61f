"""
Analytical cost formulas.

Notation: n ranks in total, k devices per node, partition group size p, model
(or message) size M in bytes, s micro-steps per global step and effective
bandwidths B_all (all ranks), B_part (partition group) and B_repl
(replication group) in bytes per second. The costs are bandwidth terms only;
add `collective_latency` to account for message startup.

For Copyright information, please see LICENCE.
"""

import math
from enum import Enum

from scale_aware_sharding.utilities.exceptions import OutOfRangeError, ShapeError
from scale_aware_sharding.utilities.validation import (
    validate_count,
    validate_non_negative,
    validate_positive,
)


class LatencyAlgorithm(Enum):
    """Collective algorithms with distinct latency terms."""

    TREE = "tree"
    """ceil(log2(p)) message startups."""

    RING = "ring"
    """2p message startups."""


def allgather_cost_flat(n: int, M: float, B_all: float) -> float:
    "Time to gather M bytes partitioned across all n ranks: (n-1)M/(n B_all)."
    validate_count("n", n, 1)
    validate_positive("M", M)
    validate_positive("B_all", B_all)
    return (n - 1) * M / (n * B_all)


def allgather_cost_mics(p: int, M: float, B_part: float) -> float:
    "Time to gather M bytes within a partition group: (p-1)M/(p B_part)."
    validate_count("p", p, 1)
    validate_positive("M", M)
    validate_positive("B_part", B_part)
    return (p - 1) * M / (p * B_part)


def allgather_cost_ratio(n: int, p: int, B_all: float, B_part: float) -> float:
    """
    Ratio of the flat gather cost over the partition group gather cost.

    The ratio is at least B_part / B_all whenever 1 < p <= n and is infinite
    for p = 1, where the partition group gather is free.
    """
    validate_count("n", n, 1)
    validate_count("p", p, 1)
    if p > n:
        raise OutOfRangeError(f"p must not exceed n, got p={p} and n={n}")

    if p == 1:
        return math.inf

    return allgather_cost_flat(n, 1, B_all) / allgather_cost_mics(p, 1, B_part)


def inter_node_traffic(p: int, k: int, M: float, hierarchical: bool) -> float:
    """
    Bytes a node receives over inter-node links when gathering M bytes.

    Args:
        p: The partition group size.
        k: Devices per node.
        M: The size of the gathered data in bytes.
        hierarchical: Use the three-stage algorithm rather than a single
          channel spanning the nodes.

    Returns:
    (p-1)M/p for the vanilla gather and (p-k)M/p for the hierarchical one. A
    group inside one node (p <= k) gathered hierarchically never leaves the
    node.
    """
    validate_count("p", p, 1)
    validate_count("k", k, 1)
    validate_non_negative("M", M)
    if p > k and p % k:
        raise ShapeError(f"partition size {p} is not a multiple of {k} devices per node")

    if not hierarchical:
        return (p - 1) * M / p

    if p <= k:
        return 0.0

    return (p - k) * M / p


def traffic_reduction_ratio(p: int, k: int) -> float:
    """
    Factor by which hierarchical gathering cuts inter-node traffic: (p-1)/(p-k).

    Returns infinity when p = k since no traffic is left to cut.
    """
    validate_count("k", k, 1)
    validate_count("p", p, k)
    if p == k:
        return math.inf

    return (p - 1) / (p - k)


def two_hop_cost(s: int, M: float, n: int, p: int, B_part: float, B_repl: float):
    "Cost of the 2-hop schedule: sM(p-1)/(p B_part) + 2M(n-p)/(n B_repl)."
    validate_count("s", s, 1)
    validate_positive("M", M)
    validate_count("n", n, 1)
    validate_count("p", p, 1)
    validate_positive("B_part", B_part)
    validate_positive("B_repl", B_repl)
    if p > n:
        raise OutOfRangeError(f"p must not exceed n, got p={p} and n={n}")

    return s * M * (p - 1) / (p * B_part) + 2 * M * (n - p) / (n * B_repl)


def alt_sync_cost(s: int, M: float, n: int, B_all: float) -> float:
    "Cost of all-reducing the gradients every micro-step: 2sM(n-1)/(n B_all)."
    validate_count("s", s, 1)
    validate_positive("M", M)
    validate_count("n", n, 1)
    validate_positive("B_all", B_all)
    return 2 * s * M * (n - 1) / (n * B_all)


def two_hop_ratio_bound(s: int, B_all: float, B_part: float, B_repl: float) -> float:
    """
    Lower bound of alt_sync_cost / two_hop_cost.

    (2s / B_all) / (s / B_part + 2 / B_repl), which is 4/3 for s = 4 and equal
    bandwidths and drops below 1 for s = 1 unless the group bandwidths exceed
    1.5 B_all.
    """
    validate_count("s", s, 1)
    validate_positive("B_all", B_all)
    validate_positive("B_part", B_part)
    validate_positive("B_repl", B_repl)
    return (2 * s / B_all) / (s / B_part + 2 / B_repl)


def cost_reduction(ratio: float) -> float:
    "Fraction of time saved when a cost shrinks by the given ratio: 1 - 1/ratio."
    validate_positive("ratio", ratio)
    return 1 - 1 / ratio


def zero3_iteration_volume(n: int, M: float) -> float:
    """
    Bytes each rank moves per micro-step when partitioning across all ranks.

    A forward all-gather, a backward all-gather and a gradient reduce-scatter,
    each of (n-1)M/n bytes.
    """
    validate_count("n", n, 1)
    validate_non_negative("M", M)
    return 3 * (n - 1) * M / n


def collective_latency(p: int, alpha: float, algorithm=LatencyAlgorithm.TREE):
    "Startup latency of a collective over p ranks: ceil(log2 p) alpha or 2 p alpha."
    validate_count("p", p, 1)
    validate_non_negative("alpha", alpha)
    algorithm = LatencyAlgorithm(algorithm)
    if algorithm is LatencyAlgorithm.TREE:
        return math.ceil(math.log2(p)) * alpha

    return 2 * p * alpha


def tflops_estimate(T: float, l: int, L: int, h: int, V: int) -> float:  # noqa: E741
    """
    Training FLOP rate of a transformer model.

    F = 96 T l L h^2 (1 + l/(6h) + V/(16 L h)), counting activation
    recomputation.

    Args:
        T: Throughput in sequences per second.
        l: Sequence length.
        L: Number of transformer layers.
        h: Hidden size.
        V: Vocabulary size.
    """
    validate_positive("T", T)
    validate_positive("l", l)
    validate_positive("L", L)
    validate_positive("h", h)
    validate_non_negative("V", V)
    return 96 * T * l * L * h**2 * (1 + l / (6 * h) + V / (16 * L * h))


def scaling_efficiency(
    base_throughput: float, base_devices: int, throughput: float, devices: int
) -> float:
    "Per device throughput at scale relative to the base measurement."
    validate_positive("base_throughput", base_throughput)
    validate_count("base_devices", base_devices, 1)
    validate_non_negative("throughput", throughput)
    validate_count("devices", devices, 1)
    return (throughput / devices) / (base_throughput / base_devices)
