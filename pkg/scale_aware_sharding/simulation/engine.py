"""
Deterministic discrete-event timeline.

Tasks run on streams (one task at a time per stream). A task becomes ready
once every task in `after` has finished and every task in `after_start` has
started; an idle stream starts its ready task with the lowest id. Completion
events are ordered by (time, event id), so a timeline is a pure function of
the tasks added to it.

For Copyright information, please see LICENCE.
"""

import heapq
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from scale_aware_sharding.utilities.exceptions import ShardingError, ValidationError
from scale_aware_sharding.utilities.validation import validate_non_negative

logger = logging.getLogger(__name__)


class Stream(Enum):
    """Execution resources of a device."""

    COMPUTE = "compute"
    COMMUNICATION = "communication"


class Phase(Enum):
    """Parts of a training iteration."""

    FWD_GATHER = "fwd_gather"
    FWD_COMPUTE = "fwd_compute"
    BWD_GATHER = "bwd_gather"
    BWD_COMPUTE = "bwd_compute"
    MICRO_SYNC = "micro_sync"
    BOUNDARY_SYNC = "boundary_sync"


@dataclass(frozen=True)
class ScheduledTask:
    "A task with its place on the timeline."
    task_id: int
    name: str
    stream: Stream
    phase: Phase
    start: float
    finish: float

    @property
    def duration(self) -> float:
        return self.finish - self.start


@dataclass(frozen=True)
class _Task:
    task_id: int
    name: str
    stream: Stream
    phase: Phase
    duration: float
    after: Tuple[int, ...]
    after_start: Tuple[int, ...]


class Timeline:
    "A set of tasks and their dependencies, scheduled by `run`."

    def __init__(self):
        self._tasks: List[_Task] = []

    def __len__(self):
        return len(self._tasks)

    def add(
        self,
        name: str,
        stream: Stream,
        phase: Phase,
        duration: float,
        after: Iterable[Optional[int]] = (),
        after_start: Iterable[Optional[int]] = (),
    ) -> int:
        """
        Add a task.

        Dependencies must be tasks added earlier; None entries are ignored.

        Returns:
        The id of the new task.
        """
        validate_non_negative("duration", duration)
        task_id = len(self._tasks)
        after = tuple(t for t in after if t is not None)
        after_start = tuple(t for t in after_start if t is not None)
        for dependency in after + after_start:
            if not 0 <= dependency < task_id:
                raise ValidationError(
                    f"task {name} depends on unknown or later task {dependency}"
                )

        self._tasks.append(
            _Task(
                task_id, name, Stream(stream), Phase(phase), duration, after, after_start
            )
        )
        return task_id

    def run(self) -> List[ScheduledTask]:
        "Schedule every task and return them in id order."
        remaining = {}
        on_finish: Dict[int, List[int]] = {}
        on_start: Dict[int, List[int]] = {}
        ready: Dict[Stream, List[int]] = {stream: [] for stream in Stream}
        for task in self._tasks:
            remaining[task.task_id] = len(task.after) + len(task.after_start)
            for dependency in task.after:
                on_finish.setdefault(dependency, []).append(task.task_id)

            for dependency in task.after_start:
                on_start.setdefault(dependency, []).append(task.task_id)

            if not remaining[task.task_id]:
                heapq.heappush(ready[task.stream], task.task_id)

        busy: Dict[Stream, Optional[int]] = {stream: None for stream in Stream}
        started: Dict[int, float] = {}
        finished: Dict[int, float] = {}
        events: List[Tuple[float, int, int]] = []
        event_ids = itertools.count()

        def release(dependents):
            for dependent in dependents:
                remaining[dependent] -= 1
                if not remaining[dependent]:
                    heapq.heappush(ready[self._tasks[dependent].stream], dependent)

        def dispatch(now):
            progress = True
            while progress:
                progress = False
                for stream in Stream:
                    if busy[stream] is not None or not ready[stream]:
                        continue

                    task = self._tasks[heapq.heappop(ready[stream])]
                    busy[stream] = task.task_id
                    started[task.task_id] = now
                    heapq.heappush(
                        events, (now + task.duration, next(event_ids), task.task_id)
                    )
                    release(on_start.get(task.task_id, ()))
                    progress = True

        dispatch(0.0)
        while events:
            now, _, task_id = heapq.heappop(events)
            task = self._tasks[task_id]
            finished[task_id] = now
            busy[task.stream] = None
            logger.debug("%s finished at %.9f", task.name, now)
            release(on_finish.get(task_id, ()))
            dispatch(now)

        if len(finished) != len(self._tasks):
            raise ShardingError(
                f"{len(self._tasks) - len(finished)} tasks could never start"
            )

        return [
            ScheduledTask(
                task.task_id,
                task.name,
                task.stream,
                task.phase,
                started[task.task_id],
                finished[task.task_id],
            )
            for task in self._tasks
        ]
