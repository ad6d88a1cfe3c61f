"""
Brute force ground truth for gradient synchronisation.

For Copyright information, please see LICENCE.
"""

from typing import Dict, Mapping, Sequence

import numpy as np

from scale_aware_sharding.collectives import partition_buffer
from scale_aware_sharding.topology import GroupLayout
from scale_aware_sharding.utilities.exceptions import ValidationError


def oracle_global_sync(
    grads_per_step: Sequence[Mapping[int, Sequence]], layout: GroupLayout
) -> Dict[int, np.ndarray]:
    """
    Sum every gradient over all ranks and micro-steps and slice by ownership.

    Returns:
    The chunk each rank should hold after a complete global step under any
    correct schedule.
    """
    if not grads_per_step:
        raise ValidationError("the oracle needs at least one micro-step")

    total = None
    for grads in grads_per_step:
        for rank in range(layout.n):
            grad = np.asarray(grads[rank])
            total = np.array(grad, copy=True) if total is None else total + grad

    chunks, _ = partition_buffer(total, layout.p)
    return {
        rank: np.array(chunks[layout.owned_chunk(rank)], copy=True)
        for rank in range(layout.n)
    }
