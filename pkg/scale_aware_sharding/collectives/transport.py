"""
In-process message passing between virtual ranks.

Every rank owns a mailbox keyed by (source, tag). Collectives are written as
rounds: a send round in which every rank posts its messages, then a receive
round in which every rank collects them. A round is a barrier, so receives
never block. A message posted to several ranks is copied once and shared
read-only by its receivers. Rounds run on the calling thread when max_workers
is 1 and on a thread pool otherwise; results are returned in rank order
either way.

For Copyright information, please see LICENCE.
"""

import itertools
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from scale_aware_sharding.topology import ClusterSpec
from scale_aware_sharding.utilities.exceptions import ShardingError
from scale_aware_sharding.utilities.validation import validate_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CollectiveRecord:
    "One collective launch as seen by the transport."
    kind: str
    "Name of the collective, e.g. all_gather or reduce_scatter_coalesced."

    ranks: Tuple[int, ...]
    "Participating ranks; the union for a batched launch."

    operations: int = 1
    "Number of collectives issued by this launch."


class VirtualTransport:
    """
    Mailboxes and traffic counters for a set of virtual ranks.

    Args:
        cluster: Optional cluster used to split received bytes into intra-node
          and inter-node traffic.
        max_workers: Number of threads executing each round.
    """

    def __init__(self, cluster: Optional[ClusterSpec] = None, max_workers: int = 1):
        self.cluster = cluster
        self.max_workers = validate_count("max_workers", max_workers, 1)
        self.received_bytes: Dict[int, int] = {}
        self.inter_node_received_bytes: Dict[int, int] = {}
        self.records: List[CollectiveRecord] = []
        self._mailboxes: Dict[int, Dict[Tuple[int, int], np.ndarray]] = {}
        self._lock = threading.Lock()
        self._tags = itertools.count()
        self._pool: Optional[ThreadPoolExecutor] = None
        self._nodes: Dict[int, int] = {}
        if cluster is not None:
            self._nodes = {r: cluster.node_of(r) for r in range(cluster.n)}

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def new_tag(self) -> int:
        with self._lock:
            return next(self._tags)

    def record(self, kind: str, ranks: Tuple[int, ...], operations: int = 1):
        logger.debug("%s over %d ranks (%d operations)", kind, len(ranks), operations)
        with self._lock:
            self.records.append(CollectiveRecord(kind, tuple(ranks), operations))

    def _node(self, rank: int) -> int:
        node = self._nodes.get(rank)
        if node is None:
            return self.cluster.node_of(rank)

        return node

    def send(self, source: int, destination: int, tag: int, payload: np.ndarray):
        self.post(source, (destination,), tag, payload)

    def post(
        self, source: int, destinations: Iterable[int], tag: int, payload: np.ndarray
    ):
        "Send one payload from `source` to every rank in `destinations`."
        message = np.array(payload, copy=True)
        message.flags.writeable = False
        size = message.nbytes
        destinations = tuple(destinations)
        if self.cluster is not None:
            source_node = self._node(source)
            remote = [self._node(d) != source_node for d in destinations]
        else:
            remote = [False] * len(destinations)

        with self._lock:
            for destination, inter_node in zip(destinations, remote):
                mailbox = self._mailboxes.setdefault(destination, {})
                if (source, tag) in mailbox:
                    raise ShardingError(
                        f"rank {source} already sent message {tag} to rank {destination}"
                    )

                mailbox[(source, tag)] = message
                self.received_bytes[destination] = (
                    self.received_bytes.get(destination, 0) + size
                )
                if inter_node:
                    self.inter_node_received_bytes[destination] = (
                        self.inter_node_received_bytes.get(destination, 0) + size
                    )

    def receive(self, destination: int, source: int, tag: int) -> np.ndarray:
        return self.collect(destination, (source,), tag)[0]

    def collect(
        self, destination: int, sources: Iterable[int], tag: int
    ) -> List[np.ndarray]:
        "Take the messages of `tag` from each source, in the order given."
        with self._lock:
            mailbox = self._mailboxes.get(destination, {})
            messages = []
            for source in sources:
                try:
                    messages.append(mailbox.pop((source, tag)))
                except KeyError:
                    raise ShardingError(
                        f"rank {destination} has no message {tag} from rank {source}"
                    ) from None

            return messages

    def run_round(self, step: Callable[[int], object], ranks: Iterable[int]) -> list:
        """
        Run one round of a collective for every rank.

        Returns:
        The per rank results of `step` in the order of `ranks`.
        """
        ranks = list(ranks)
        if self.max_workers == 1 or len(ranks) == 1:
            return [step(rank) for rank in ranks]

        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.max_workers)

        return list(self._pool.map(step, ranks))

    def pending_messages(self) -> int:
        with self._lock:
            return sum(len(box) for box in self._mailboxes.values())

    def node_inter_node_bytes(self, node: int) -> int:
        "Bytes received over inter-node links by all ranks of a node."
        if self.cluster is None:
            raise ShardingError("the transport has no cluster to attribute nodes")

        return sum(
            self.inter_node_received_bytes.get(rank, 0)
            for rank in self.cluster.node_ranks(node)
        )
