"""
Vanilla and batched collectives over virtual ranks.

Messages follow a direct exchange pattern: every rank sends its contribution
straight to each peer. Reductions always add contributions in ascending group
position so results are bit-identical however the ranks are scheduled.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from scale_aware_sharding.topology import ClusterSpec
from scale_aware_sharding.utilities.exceptions import (
    ShapeError,
    SizeMismatchError,
    TypeMismatchError,
    ValidationError,
)
from scale_aware_sharding.utilities.validation import validate_count

from .transport import VirtualTransport

REDUCTION_DTYPES = (np.dtype("int64"), np.dtype("float32"), np.dtype("float64"))
"Element types accepted by the reducing collectives."

Payload = Union["ShardBuffer", np.ndarray, bytes, bytearray, Sequence]


@dataclass(frozen=True)
class ShardBuffer:
    "A rank's contribution to one collective."
    rank: int
    "The contributing rank."

    payload: np.ndarray
    "One dimensional array holding the rank's data."

    logical_length: Optional[int] = None
    """
    Number of meaningful elements when the payload has been zero padded to a
    uniform chunk size.
    """

    @property
    def chunk_size(self) -> int:
        "Size of the payload in bytes."
        return self.payload.nbytes


@dataclass(frozen=True)
class CollectiveGroup:
    "An ordered set of ranks; a rank's position is the index of its chunk."
    ranks: Tuple[int, ...]

    def __post_init__(self):
        ranks = tuple(self.ranks)
        if not ranks:
            raise ValidationError("a collective group needs at least one rank")

        if len(set(ranks)) != len(ranks):
            raise ValidationError(
                f"ranks in a collective group must be distinct: {ranks}"
            )

        object.__setattr__(self, "ranks", ranks)

    @property
    def size(self) -> int:
        return len(self.ranks)

    def position(self, rank: int) -> int:
        return self.ranks.index(rank)

    def spans_nodes(self, cluster: ClusterSpec) -> bool:
        return cluster.spans_nodes(self.ranks)


@dataclass(frozen=True)
class ChunkLayout:
    "Memory order of the chunks held in a rank's buffer, e.g. (0, 2, 1, 3)."
    chunks: Tuple[int, ...]

    def is_complete(self, p: int) -> bool:
        return sorted(self.chunks) == list(range(p))

    @classmethod
    def identify(cls, buffer, shards: Sequence) -> "ChunkLayout":
        """
        Recover the chunk order of a gathered buffer.

        Each chunk of `buffer` is matched against `shards`, given in group
        order; the first unused equal shard wins and -1 marks a chunk that
        matches nothing.
        """
        shards = [_as_array(s).tobytes() for s in shards]
        data = _as_array(buffer).tobytes()
        size = len(shards[0]) if shards else 0
        if size == 0:
            return cls(())

        used = set()
        chunks = []
        for offset in range(0, len(data), size):
            piece = data[offset : offset + size]
            match = next(
                (i for i, s in enumerate(shards) if i not in used and s == piece), -1
            )
            if match >= 0:
                used.add(match)

            chunks.append(match)

        return cls(tuple(chunks))


def _as_array(payload: Payload) -> np.ndarray:
    if isinstance(payload, ShardBuffer):
        payload = payload.payload

    if isinstance(payload, (bytes, bytearray)):
        return np.frombuffer(bytes(payload), dtype=np.uint8)

    array = np.asarray(payload)
    if array.ndim != 1:
        array = array.reshape(-1)

    return array


def _as_group(group) -> CollectiveGroup:
    if isinstance(group, CollectiveGroup):
        return group

    return CollectiveGroup(tuple(group))


def _collect(group: CollectiveGroup, payloads: Mapping[int, Payload]):
    missing = [r for r in group.ranks if r not in payloads]
    if missing:
        raise ValidationError(f"no payload for ranks {missing}")

    arrays = {rank: _as_array(payloads[rank]) for rank in group.ranks}
    dtypes = {a.dtype for a in arrays.values()}
    if len(dtypes) > 1:
        raise TypeMismatchError(
            "payloads of one collective must share an element type, got "
            + ", ".join(sorted(str(d) for d in dtypes))
        )

    sizes = {a.nbytes for a in arrays.values()}
    if len(sizes) > 1:
        raise SizeMismatchError(
            f"payloads of one collective must be equal in size, got {sorted(sizes)}"
        )

    return arrays


def _check_reducible(arrays: Mapping[int, np.ndarray], group: CollectiveGroup):
    dtype = next(iter(arrays.values())).dtype
    if dtype not in REDUCTION_DTYPES:
        raise TypeMismatchError(f"cannot reduce elements of type {dtype}")

    length = len(next(iter(arrays.values())))
    if length % group.size:
        raise SizeMismatchError(
            f"buffers of {length} elements cannot be split into {group.size} chunks"
        )


def _check_op(op: str):
    if op != "sum":
        raise ValidationError(f"unsupported reduction {op!r}, only 'sum' is available")


def _all_gather(group, arrays, transport):
    if group.size == 1:
        return {rank: np.array(array, copy=True) for rank, array in arrays.items()}

    tag = transport.new_tag()

    def send(rank):
        peers = [peer for peer in group.ranks if peer != rank]
        transport.post(rank, peers, tag, arrays[rank])

    def receive(rank):
        position = group.position(rank)
        peers = group.ranks[:position] + group.ranks[position + 1 :]
        chunks = transport.collect(rank, peers, tag)
        chunks.insert(position, arrays[rank])
        return np.concatenate(chunks)

    transport.run_round(send, group.ranks)
    return dict(zip(group.ranks, transport.run_round(receive, group.ranks)))


def _reduce_scatter(group, arrays, transport):
    tag = transport.new_tag()
    chunk = len(next(iter(arrays.values()))) // group.size

    def send(rank):
        for position, peer in enumerate(group.ranks):
            if peer != rank:
                piece = arrays[rank][position * chunk : (position + 1) * chunk]
                transport.send(rank, peer, tag, piece)

    def receive(rank):
        position = group.position(rank)
        peers = group.ranks[:position] + group.ranks[position + 1 :]
        parts = transport.collect(rank, peers, tag)
        parts.insert(position, arrays[rank][position * chunk : (position + 1) * chunk])
        total = np.array(parts[0], copy=True)
        for part in parts[1:]:
            np.add(total, part, out=total)

        return total

    transport.run_round(send, group.ranks)
    return dict(zip(group.ranks, transport.run_round(receive, group.ranks)))


def all_gather(
    group, shards: Mapping[int, Payload], transport: Optional[VirtualTransport] = None
) -> Dict[int, np.ndarray]:
    """
    Gather every rank's chunk onto every rank.

    Args:
        group: The ranks taking part, in chunk order.
        shards: Mapping of rank to its chunk (array, bytes or ShardBuffer).
        transport: The transport carrying the messages; a private one is used
          when not given.

    Returns:
    A mapping of rank to the concatenation of all chunks in group order.
    """
    group = _as_group(group)
    arrays = _collect(group, shards)
    transport = transport or VirtualTransport()
    transport.record("all_gather", group.ranks)
    return _all_gather(group, arrays, transport)


def reduce_scatter(
    group,
    buffers: Mapping[int, Payload],
    op: str = "sum",
    transport: Optional[VirtualTransport] = None,
) -> Dict[int, np.ndarray]:
    """
    Reduce full size buffers and scatter the result.

    Every rank contributes a buffer of `group.size` equal chunks. The rank at
    position i receives the elementwise sum of chunk i over all ranks, added
    in ascending group position.
    """
    _check_op(op)
    group = _as_group(group)
    arrays = _collect(group, buffers)
    _check_reducible(arrays, group)
    transport = transport or VirtualTransport()
    transport.record("reduce_scatter", group.ranks)
    return _reduce_scatter(group, arrays, transport)


def all_reduce(
    group,
    buffers: Mapping[int, Payload],
    op: str = "sum",
    transport: Optional[VirtualTransport] = None,
) -> Dict[int, np.ndarray]:
    """
    Reduce buffers so every rank holds the elementwise sum.

    Performed as a reduce-scatter followed by an all-gather; buffers whose
    length is not a multiple of the group size are zero padded for the
    exchange and trimmed afterwards.
    """
    _check_op(op)
    group = _as_group(group)
    arrays = _collect(group, buffers)
    dtype = next(iter(arrays.values())).dtype
    if dtype not in REDUCTION_DTYPES:
        raise TypeMismatchError(f"cannot reduce elements of type {dtype}")

    length = len(next(iter(arrays.values())))
    padded = {}
    for rank, array in arrays.items():
        chunks, _ = partition_buffer(array, group.size)
        padded[rank] = np.concatenate(chunks)

    transport = transport or VirtualTransport()
    transport.record("all_reduce", group.ranks)
    scattered = _reduce_scatter(group, padded, transport)
    gathered = _all_gather(group, scattered, transport)
    return {rank: trim_buffer(buffer, length) for rank, buffer in gathered.items()}


def _check_batch(groups: List[CollectiveGroup]):
    owners: Dict[int, CollectiveGroup] = {}
    for group in groups:
        members = set(group.ranks)
        for rank in group.ranks:
            owner = owners.setdefault(rank, group)
            if owner is not group and set(owner.ranks) != members:
                raise ShapeError(
                    "groups of a batched collective must be disjoint or share the "
                    f"same ranks: {owner.ranks} and {group.ranks}"
                )


def batched_all_gather(
    groups: Sequence,
    shard_sets: Sequence[Mapping[int, Payload]],
    transport: Optional[VirtualTransport] = None,
) -> List[Dict[int, np.ndarray]]:
    """
    Launch several all-gathers at once.

    The result equals issuing each all-gather on its own but the transport
    records a single coalesced launch.

    Returns:
    One rank to buffer mapping per group, in the order given.
    """
    groups = [_as_group(g) for g in groups]
    if len(groups) != len(shard_sets):
        raise ValidationError(
            f"{len(groups)} groups were given with {len(shard_sets)} shard sets"
        )

    if not groups:
        return []

    _check_batch(groups)
    arrays = [_collect(g, s) for g, s in zip(groups, shard_sets)]
    transport = transport or VirtualTransport()
    transport.record(
        "all_gather_coalesced",
        tuple(sorted({r for g in groups for r in g.ranks})),
        len(groups),
    )
    return [_all_gather(g, a, transport) for g, a in zip(groups, arrays)]


def batched_reduce_scatter(
    groups: Sequence,
    buffer_sets: Sequence[Mapping[int, Payload]],
    op: str = "sum",
    transport: Optional[VirtualTransport] = None,
) -> List[Dict[int, np.ndarray]]:
    "Launch several reduce-scatters at once, mirroring `batched_all_gather`."
    _check_op(op)
    groups = [_as_group(g) for g in groups]
    if len(groups) != len(buffer_sets):
        raise ValidationError(
            f"{len(groups)} groups were given with {len(buffer_sets)} buffer sets"
        )

    if not groups:
        return []

    _check_batch(groups)
    arrays = [_collect(g, b) for g, b in zip(groups, buffer_sets)]
    for group, group_arrays in zip(groups, arrays):
        _check_reducible(group_arrays, group)

    transport = transport or VirtualTransport()
    transport.record(
        "reduce_scatter_coalesced",
        tuple(sorted({r for g in groups for r in g.ranks})),
        len(groups),
    )
    return [_reduce_scatter(g, a, transport) for g, a in zip(groups, arrays)]


def partition_buffer(buffer: Payload, p: int) -> Tuple[List[np.ndarray], int]:
    """
    Split a buffer into p equal chunks.

    The last chunks are zero padded when the length is not a multiple of p.

    Returns:
    The chunks and the logical (unpadded) length of the buffer.
    """
    validate_count("p", p, 1)
    array = _as_array(buffer)
    length = len(array)
    chunk = -(-length // p)
    padded = np.zeros(chunk * p, dtype=array.dtype)
    padded[:length] = array
    return [padded[i * chunk : (i + 1) * chunk] for i in range(p)], length


def trim_buffer(buffer: Payload, logical_length: int) -> np.ndarray:
    "Drop the zero padding added by `partition_buffer`."
    validate_count("logical_length", logical_length)
    return _as_array(buffer)[:logical_length]
