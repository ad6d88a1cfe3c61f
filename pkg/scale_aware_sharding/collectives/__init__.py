"""
Collectives over virtual ranks.

The vanilla collectives act as oracles for the three-stage hierarchical
all-gather. Batched variants launch several collectives as one event.

For Copyright information, please see LICENCE.
"""

from .hierarchical import (  # noqa: F401
    hierarchical_all_gather,
    inter_node_stage,
    intra_node_stage,
    rearrange_stage,
)
from .primitives import (  # noqa: F401
    REDUCTION_DTYPES,
    ChunkLayout,
    CollectiveGroup,
    ShardBuffer,
    all_gather,
    all_reduce,
    batched_all_gather,
    batched_reduce_scatter,
    partition_buffer,
    reduce_scatter,
    trim_buffer,
)
from .transport import CollectiveRecord, VirtualTransport  # noqa: F401
