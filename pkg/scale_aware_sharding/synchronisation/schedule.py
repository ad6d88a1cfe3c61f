"""
The 2-hop and alternative gradient synchronisation schedules.

Every rank owns one chunk of the gradient, the chunk whose index is its
position in its partition group, and accumulates it over the s micro-steps of
a global step.

2-hop: each micro-step reduce-scatters the gradients inside every partition
group; at the accumulation boundary the owned chunks are all-reduced inside
every replication group.

Alternative: each micro-step all-reduces the full gradients across all ranks
and every rank keeps only its owned chunk.

Both use sum semantics; averaging is left to callers.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from scale_aware_sharding.collectives import (
    VirtualTransport,
    all_reduce,
    partition_buffer,
    reduce_scatter,
)
from scale_aware_sharding.topology import GroupLayout
from scale_aware_sharding.utilities.exceptions import (
    BoundaryViolationError,
    SizeMismatchError,
    ValidationError,
)
from scale_aware_sharding.utilities.validation import validate_count

from .events import EventLog, SyncEvent, SyncPhase


class Schedule(Enum):
    """Gradient synchronisation schedules."""

    TWO_HOP = "two_hop"
    """Partition group reduce-scatter per micro-step, replication group
    all-reduce at the boundary."""

    ALTERNATIVE = "alternative"
    """Global all-reduce per micro-step keeping only the owned chunk."""


@dataclass(frozen=True)
class SyncState:
    "A rank's position in the accumulation cycle."
    rank: int

    accumulated_shard: np.ndarray
    "Running sum of the rank's owned gradient chunk."

    micro_step: int
    "Micro-steps completed since the last boundary."

    s: int
    "Micro-steps per global step."


def initial_sync_states(
    layout: GroupLayout, grad_len: int, s: int, dtype=np.int64
) -> Dict[int, SyncState]:
    "Zeroed states for every rank of the layout."
    validate_count("grad_len", grad_len, 1)
    validate_count("s", s, 1)
    chunk = -(-grad_len // layout.p)
    return {
        rank: SyncState(rank, np.zeros(chunk, dtype=dtype), 0, s)
        for rank in range(layout.n)
    }


def _check_states(layout, states):
    missing = [r for r in range(layout.n) if r not in states]
    if missing:
        raise ValidationError(f"no synchronisation state for ranks {missing}")


def _padded_gradients(layout, states, grads):
    _check_states(layout, states)
    padded = {}
    lengths = set()
    for rank in range(layout.n):
        if rank not in grads:
            raise ValidationError(f"no gradient for rank {rank}")

        chunks, length = partition_buffer(grads[rank], layout.p)
        lengths.add(length)
        padded[rank] = np.concatenate(chunks)
        if len(chunks[0]) != len(states[rank].accumulated_shard):
            raise SizeMismatchError(
                f"gradient of rank {rank} does not match its accumulated shard"
            )

    if len(lengths) > 1:
        raise SizeMismatchError(
            f"gradients of one micro-step must be equal in length, got {sorted(lengths)}"
        )

    return padded


def _check_micro_step(states):
    for state in states.values():
        if state.micro_step >= state.s:
            raise BoundaryViolationError(
                f"rank {state.rank} has completed all {state.s} micro-steps; "
                "synchronise at the boundary first"
            )


def _accumulate(state, chunk):
    return replace(
        state,
        accumulated_shard=state.accumulated_shard + chunk,
        micro_step=state.micro_step + 1,
    )


def two_hop_micro_step(
    layout: GroupLayout,
    states: Mapping[int, SyncState],
    grads: Mapping[int, Sequence],
    transport: Optional[VirtualTransport] = None,
    event_log: Optional[EventLog] = None,
    step: int = 0,
) -> Dict[int, SyncState]:
    """
    Reduce-scatter one micro-step's gradients inside every partition group.

    Args:
        layout: The partition group layout.
        states: Every rank's synchronisation state.
        grads: Every rank's full length gradient for this micro-step.
        transport: The transport carrying the collectives.
        event_log: Receives one event per partition group.
        step: The global step, recorded in the event log.

    Returns:
    New states with the reduced chunk added to each rank's accumulated shard
    and the micro-step advanced. No communication crosses partition groups.
    """
    _check_micro_step(states)
    padded = _padded_gradients(layout, states, grads)
    transport = transport or VirtualTransport()
    updated = {}
    for g, group in enumerate(layout.partition_groups):
        chunks = {r: padded[r] for r in group}
        reduced = reduce_scatter(group, chunks, transport=transport)
        for rank in group:
            updated[rank] = _accumulate(states[rank], reduced[rank])

        if event_log is not None:
            event_log.append(
                SyncEvent(
                    step,
                    SyncPhase.MICRO_REDUCE_SCATTER,
                    f"partition:{g}",
                    padded[group[0]].nbytes,
                )
            )

    return updated


def two_hop_boundary(
    layout: GroupLayout,
    states: Mapping[int, SyncState],
    transport: Optional[VirtualTransport] = None,
    event_log: Optional[EventLog] = None,
    step: int = 0,
) -> Dict[int, SyncState]:
    """
    All-reduce the accumulated shards inside every replication group.

    Returns:
    New states in which every member of a replication group holds the global
    sum of its owned chunk, with the micro-step reset to 0. Replication
    groups of a single rank need no communication.
    """
    _check_states(layout, states)
    for state in states.values():
        if state.micro_step != state.s:
            raise BoundaryViolationError(
                f"rank {state.rank} is at micro-step {state.micro_step} of "
                f"{state.s}; the boundary is only reached after the last one"
            )

    transport = transport or VirtualTransport()
    updated = {}
    for j, group in enumerate(layout.replication_groups):
        if len(group) == 1:
            reduced = {group[0]: states[group[0]].accumulated_shard}
        else:
            reduced = all_reduce(
                group,
                {r: states[r].accumulated_shard for r in group},
                transport=transport,
            )
            if event_log is not None:
                event_log.append(
                    SyncEvent(
                        step,
                        SyncPhase.BOUNDARY_ALL_REDUCE,
                        f"replication:{j}",
                        states[group[0]].accumulated_shard.nbytes,
                    )
                )

        for rank in group:
            updated[rank] = replace(
                states[rank], accumulated_shard=reduced[rank], micro_step=0
            )

    return updated


def alternative_schedule_step(
    layout: GroupLayout,
    states: Mapping[int, SyncState],
    grads: Mapping[int, Sequence],
    transport: Optional[VirtualTransport] = None,
    event_log: Optional[EventLog] = None,
    step: int = 0,
) -> Dict[int, SyncState]:
    """
    All-reduce one micro-step's gradients across every rank.

    Each rank adds only the chunk it owns to its accumulated shard and
    discards the rest.
    """
    _check_micro_step(states)
    padded = _padded_gradients(layout, states, grads)
    transport = transport or VirtualTransport()
    everyone = tuple(range(layout.n))
    reduced = all_reduce(everyone, padded, transport=transport)
    if event_log is not None:
        event_log.append(
            SyncEvent(step, SyncPhase.GLOBAL_ALL_REDUCE, "global", padded[0].nbytes)
        )

    updated = {}
    for rank in everyone:
        size = len(states[rank].accumulated_shard)
        owned = layout.owned_chunk(rank)
        updated[rank] = _accumulate(
            states[rank], reduced[rank][owned * size : (owned + 1) * size]
        )

    return updated


def run_global_step(
    layout: GroupLayout,
    grads_per_step: Sequence[Mapping[int, Sequence]],
    schedule: Schedule = Schedule.TWO_HOP,
    states: Optional[Mapping[int, SyncState]] = None,
    transport: Optional[VirtualTransport] = None,
    event_log: Optional[EventLog] = None,
    step: int = 0,
) -> Dict[int, SyncState]:
    """
    Run every micro-step of one global step and the boundary.

    Args:
        layout: The partition group layout.
        grads_per_step: One mapping of rank to gradient per micro-step.
        schedule: The synchronisation schedule to follow.
        states: Starting states; zeroed states are created when not given.
        transport: The transport carrying the collectives.
        event_log: Receives the synchronisation events.
        step: The global step, recorded in the event log.

    Returns:
    The states after the boundary, every micro-step counter reset to 0. For
    the alternative schedule the shards are already globally reduced so the
    boundary only resets the counters.
    """
    schedule = Schedule(schedule)
    if not grads_per_step:
        raise ValidationError("a global step needs at least one micro-step")

    if states is None:
        first = np.asarray(grads_per_step[0][0])
        states = initial_sync_states(
            layout, len(first), len(grads_per_step), first.dtype
        )

    transport = transport or VirtualTransport()
    for grads in grads_per_step:
        if schedule is Schedule.TWO_HOP:
            states = two_hop_micro_step(
                layout, states, grads, transport, event_log, step
            )
        else:
            states = alternative_schedule_step(
                layout, states, grads, transport, event_log, step
            )

    if schedule is Schedule.TWO_HOP:
        return two_hop_boundary(layout, states, transport, event_log, step)

    for state in states.values():
        if state.micro_step != state.s:
            raise BoundaryViolationError(
                f"rank {state.rank} is at micro-step {state.micro_step} of {state.s}"
            )

    return {rank: replace(state, micro_step=0) for rank, state in states.items()}
