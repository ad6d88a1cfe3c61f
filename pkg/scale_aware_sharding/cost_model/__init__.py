"""
Closed-form models of communication cost, traffic, memory and throughput.

For Copyright information, please see LICENCE.
"""

from .bandwidth import (  # noqa: F401
    BandwidthEntry,
    BandwidthProfile,
    BandwidthRole,
    default_bandwidth_profile,
    effective_bandwidth,
    group_bandwidth,
)
from .formulas import (  # noqa: F401
    LatencyAlgorithm,
    allgather_cost_flat,
    allgather_cost_mics,
    allgather_cost_ratio,
    alt_sync_cost,
    collective_latency,
    cost_reduction,
    inter_node_traffic,
    scaling_efficiency,
    tflops_estimate,
    traffic_reduction_ratio,
    two_hop_cost,
    two_hop_ratio_bound,
    zero3_iteration_volume,
)
from .report import CostEntry, CostReport  # noqa: F401
