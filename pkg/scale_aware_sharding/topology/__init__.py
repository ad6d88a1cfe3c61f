"""
Cluster shapes, partition and replication groups and memory feasibility.

For Copyright information, please see LICENCE.
"""

from .cluster import ClusterSpec  # noqa: F401
from .groups import (  # noqa: F401
    GroupLayout,
    build_group_layout,
    validate_partition_shape,
)
from .memory import (  # noqa: F401
    DEFAULT_BYTES_PER_PARAM_STATES,
    DEFAULT_HEADROOM_FRACTION,
    min_feasible_partition,
    model_state_bytes,
    model_state_bytes_per_device,
)
