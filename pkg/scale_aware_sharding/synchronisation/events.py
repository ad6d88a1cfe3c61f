"""
Communication event log written by the synchronisation schedules.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List


class SyncPhase(Enum):
    """Kinds of synchronisation collective."""

    MICRO_REDUCE_SCATTER = "micro_rs"
    """Reduce-scatter inside a partition group at the end of a micro-step."""

    BOUNDARY_ALL_REDUCE = "boundary_ar"
    """All-reduce inside a replication group at the accumulation boundary."""

    GLOBAL_ALL_REDUCE = "global_ar"
    """All-reduce across every rank at the end of a micro-step."""


@dataclass(frozen=True)
class SyncEvent:
    "One synchronisation collective."
    step: int
    "Global step the collective belongs to."

    phase: SyncPhase

    group_id: str
    "partition:<g>, replication:<j> or global."

    bytes: int
    "Bytes contributed by each participating rank."

    def as_record(self) -> dict:
        return {
            "step": self.step,
            "phase": self.phase.value,
            "group_id": self.group_id,
            "bytes": self.bytes,
        }


@dataclass
class EventLog:
    "Append-only sequence of synchronisation events."
    events: List[SyncEvent] = field(default_factory=list)

    def append(self, event: SyncEvent):
        self.events.append(event)

    def count(self, phase: SyncPhase) -> int:
        return sum(1 for e in self.events if e.phase is phase)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)
