"""
Model state memory and the smallest partition group that can hold it.

For Copyright information, please see LICENCE.
"""

from scale_aware_sharding.utilities.exceptions import InfeasibleError, ShapeError
from scale_aware_sharding.utilities.validation import (
    validate_count,
    validate_fraction,
    validate_positive,
)

from .cluster import ClusterSpec
from .groups import validate_partition_shape

DEFAULT_BYTES_PER_PARAM_STATES = 16
"fp16 parameter and gradient plus fp32 Adam states."

DEFAULT_HEADROOM_FRACTION = 0.85
"Share of device memory available to model states."


def model_state_bytes(
    num_params: int, bytes_per_param_states: int = DEFAULT_BYTES_PER_PARAM_STATES
) -> int:
    validate_positive("num_params", num_params)
    validate_positive("bytes_per_param_states", bytes_per_param_states)
    return num_params * bytes_per_param_states


def model_state_bytes_per_device(state_bytes, p: int):
    validate_positive("model_state_bytes", state_bytes)
    validate_count("p", p, 1)
    return state_bytes / p


def min_feasible_partition(
    model_state_bytes: float,
    cluster: ClusterSpec,
    node_granular: bool = False,
    headroom_fraction: float = DEFAULT_HEADROOM_FRACTION,
) -> int:
    """
    Find the smallest partition group able to hold the model states.

    Args:
        model_state_bytes: Size of the model states in bytes.
        cluster: The cluster the model is trained on.
        node_granular: Only consider partition groups made of whole nodes.
        headroom_fraction: Share of each device's memory usable by model
          states, the remainder being left for activations and temporaries.

    Returns:
    The smallest partition size p dividing the number of ranks, lining up with
    the nodes (see `groups.validate_partition_shape`) and leaving
    model_state_bytes / p within the usable device memory.
    """
    validate_positive("model_state_bytes", model_state_bytes)
    validate_fraction("headroom_fraction", headroom_fraction)
    usable = cluster.device_memory * headroom_fraction
    k = cluster.devices_per_node
    for p in range(1, cluster.n + 1):
        if cluster.n % p or (node_granular and p % k):
            continue

        try:
            validate_partition_shape(cluster, p)
        except ShapeError:
            continue

        if model_state_bytes / p <= usable:
            return p

    raise InfeasibleError(
        f"{model_state_bytes:.6g} bytes of model states do not fit on "
        f"{cluster.n} devices with {usable:.6g} usable bytes each"
    )
