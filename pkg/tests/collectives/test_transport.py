import numpy as np
import pytest

from scale_aware_sharding.collectives import VirtualTransport, all_gather, all_reduce
from scale_aware_sharding.utilities.exceptions import ShardingError
from tests.helpers import check_buffers_equal


def test_message_sent_twice():
    transport = VirtualTransport()
    transport.send(0, 1, 0, np.zeros(2))
    with pytest.raises(ShardingError):
        transport.send(0, 1, 0, np.zeros(2))


def test_receive_without_message():
    with pytest.raises(ShardingError):
        VirtualTransport().receive(1, 0, 0)


def test_messages_are_copied():
    transport = VirtualTransport()
    payload = np.array([1, 2, 3])
    transport.send(0, 1, 0, payload)
    payload[0] = 99
    assert list(transport.receive(1, 0, 0)) == [1, 2, 3]
    assert transport.pending_messages() == 0


def test_post_to_several_ranks(fxt_cluster):
    transport = VirtualTransport(fxt_cluster(2, 2))
    payload = np.arange(4, dtype=np.int32)
    transport.post(0, (1, 2, 3), 5, payload)
    payload[0] = 99
    messages = [transport.receive(r, 0, 5) for r in (1, 2, 3)]
    assert all(list(m) == [0, 1, 2, 3] for m in messages)
    assert not messages[0].flags.writeable
    assert transport.received_bytes == {1: 16, 2: 16, 3: 16}
    assert transport.inter_node_received_bytes == {2: 16, 3: 16}


def test_collect_keeps_source_order():
    transport = VirtualTransport()
    for source in (3, 1, 2):
        transport.send(source, 0, 7, np.array([source]))

    assert [int(m[0]) for m in transport.collect(0, (1, 2, 3), 7)] == [1, 2, 3]
    assert transport.pending_messages() == 0


def test_collect_missing_message():
    transport = VirtualTransport()
    transport.send(1, 0, 7, np.zeros(1))
    with pytest.raises(ShardingError):
        transport.collect(0, (1, 2), 7)


def test_byte_counters(fxt_cluster):
    with VirtualTransport(fxt_cluster(2, 2)) as transport:
        all_gather(range(4), {r: b"ab" for r in range(4)}, transport)
        assert transport.received_bytes == {r: 6 for r in range(4)}
        assert transport.inter_node_received_bytes == {r: 4 for r in range(4)}
        assert transport.node_inter_node_bytes(1) == 8


def test_node_bytes_need_a_cluster():
    with pytest.raises(ShardingError):
        VirtualTransport().node_inter_node_bytes(0)


@pytest.mark.parametrize("threads", (2, 8))
def test_thread_pool_gives_identical_results(fxt_random_shards, threads):
    buffers = fxt_random_shards(range(16), 40, seed=9, dtype=np.float64)
    expected = all_reduce(range(16), buffers)
    with VirtualTransport(max_workers=threads) as transport:
        actual = all_reduce(range(16), buffers, transport=transport)

    check_buffers_equal(expected, actual)
