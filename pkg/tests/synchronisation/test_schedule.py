import numpy as np
import pytest

from scale_aware_sharding.synchronisation import (
    EventLog,
    Schedule,
    SyncPhase,
    SyncState,
    alternative_schedule_step,
    initial_sync_states,
    oracle_global_sync,
    run_global_step,
    two_hop_boundary,
    two_hop_micro_step,
)
from scale_aware_sharding.topology import build_group_layout
from scale_aware_sharding.utilities.exceptions import (
    BoundaryViolationError,
    SizeMismatchError,
    ValidationError,
)
from tests.helpers import check_buffers_equal


def _int64(*values):
    return np.array(values, dtype=np.int64)


def _random_steps(n, s, length, seed=0, dtype=np.int64):
    rng = np.random.default_rng([seed, n, s])
    if dtype == np.int64:
        return [
            {r: rng.integers(-1000, 1000, size=length, dtype=np.int64) for r in range(n)}
            for _ in range(s)
        ]

    return [{r: rng.standard_normal(length) for r in range(n)} for _ in range(s)]


def _shards(states):
    return {rank: state.accumulated_shard for rank, state in states.items()}


# --- Test argument validation ---


@pytest.mark.dependency()
def test_micro_step_after_last():
    layout = build_group_layout(2, 2)
    states = {r: SyncState(r, _int64(0), 1, 1) for r in range(2)}
    with pytest.raises(BoundaryViolationError):
        two_hop_micro_step(layout, states, {0: _int64(1, 2), 1: _int64(3, 4)})


@pytest.mark.dependency()
def test_boundary_too_early():
    layout = build_group_layout(4, 2)
    states = initial_sync_states(layout, 4, 2)
    with pytest.raises(BoundaryViolationError):
        two_hop_boundary(layout, states)


@pytest.mark.dependency()
def test_gradient_lengths_differ():
    layout = build_group_layout(2, 2)
    states = initial_sync_states(layout, 2, 1)
    with pytest.raises(SizeMismatchError):
        alternative_schedule_step(layout, states, {0: _int64(1, 2), 1: _int64(3)})


@pytest.mark.dependency()
def test_missing_gradient():
    layout = build_group_layout(2, 2)
    states = initial_sync_states(layout, 2, 1)
    with pytest.raises(ValidationError):
        two_hop_micro_step(layout, states, {0: _int64(1, 2)})


@pytest.mark.dependency()
def test_global_step_without_micro_steps():
    with pytest.raises(ValidationError):
        run_global_step(build_group_layout(2, 2), [])


# --- Test the 2-hop schedule ---


@pytest.mark.dependency(
    depends=[
        "test_micro_step_after_last",
        "test_boundary_too_early",
        "test_gradient_lengths_differ",
        "test_missing_gradient",
        "test_global_step_without_micro_steps",
    ]
)
def test_two_hop_pair():
    layout = build_group_layout(2, 2)
    states = initial_sync_states(layout, 2, 1)
    states = two_hop_micro_step(layout, states, {0: _int64(1, 2), 1: _int64(3, 4)})
    check_buffers_equal({0: _int64(4), 1: _int64(6)}, _shards(states))
    assert states[0].micro_step == 1


def test_two_hop_zero_gradients():
    layout = build_group_layout(4, 2)
    states = initial_sync_states(layout, 6, 1)
    grads = {r: np.zeros(6, np.int64) for r in range(4)}
    states = two_hop_micro_step(layout, states, grads)
    check_buffers_equal({r: np.zeros(3, np.int64) for r in range(4)}, _shards(states))


def test_two_hop_micro_steps_sum_within_partition_groups():
    layout = build_group_layout(4, 2)
    steps = _random_steps(4, 3, 8, seed=1)
    states = initial_sync_states(layout, 8, 3)
    for grads in steps:
        states = two_hop_micro_step(layout, states, grads)

    expected = {}
    for group in layout.partition_groups:
        total = sum(grads[r] for grads in steps for r in group)
        for position, rank in enumerate(group):
            expected[rank] = total[position * 4 : (position + 1) * 4]

    check_buffers_equal(expected, _shards(states))


def test_boundary_sums_replication_groups():
    layout = build_group_layout(4, 2)
    states = {
        0: SyncState(0, _int64(1, 1), 1, 1),
        1: SyncState(1, _int64(2, 2), 1, 1),
        2: SyncState(2, _int64(10, 10), 1, 1),
        3: SyncState(3, _int64(20, 20), 1, 1),
    }
    states = two_hop_boundary(layout, states)
    expected = {0: _int64(11, 11), 1: _int64(22, 22)}
    expected.update({2: expected[0], 3: expected[1]})
    check_buffers_equal(expected, _shards(states))
    assert all(state.micro_step == 0 for state in states.values())


def test_boundary_of_one_partition_group():
    layout = build_group_layout(4, 4)
    states = {r: SyncState(r, _int64(r), 2, 2) for r in range(4)}
    log = EventLog()
    updated = two_hop_boundary(layout, states, event_log=log)
    check_buffers_equal(_shards(states), _shards(updated))
    assert len(log) == 0


def test_two_hop_matches_oracle():
    layout = build_group_layout(8, 2)
    steps = _random_steps(8, 4, 10, seed=2)
    states = run_global_step(layout, steps, Schedule.TWO_HOP)
    check_buffers_equal(oracle_global_sync(steps, layout), _shards(states))


def test_two_hop_events():
    layout = build_group_layout(8, 2)
    log = EventLog()
    run_global_step(layout, _random_steps(8, 4, 10), "two_hop", event_log=log, step=3)
    assert log.count(SyncPhase.MICRO_REDUCE_SCATTER) == 16
    assert log.count(SyncPhase.BOUNDARY_ALL_REDUCE) == 2
    assert log.count(SyncPhase.GLOBAL_ALL_REDUCE) == 0
    assert {event.step for event in log} == {3}
    assert log.events[-1].as_record() == {
        "step": 3,
        "phase": "boundary_ar",
        "group_id": "replication:1",
        "bytes": 40,
    }


# --- Test the alternative schedule ---


def test_alternative_pair():
    layout = build_group_layout(2, 2)
    states = initial_sync_states(layout, 2, 1)
    states = alternative_schedule_step(layout, states, {0: _int64(1, 2), 1: _int64(3, 4)})
    check_buffers_equal({0: _int64(4), 1: _int64(6)}, _shards(states))


def test_alternative_zero_gradients():
    layout = build_group_layout(4, 2)
    states = initial_sync_states(layout, 4, 1)
    grads = {r: np.zeros(4, np.int64) for r in range(4)}
    states = alternative_schedule_step(layout, states, grads)
    check_buffers_equal({r: np.zeros(2, np.int64) for r in range(4)}, _shards(states))


def test_alternative_matches_oracle():
    layout = build_group_layout(8, 4)
    steps = _random_steps(8, 2, 12, seed=3)
    log = EventLog()
    states = run_global_step(layout, steps, Schedule.ALTERNATIVE, event_log=log)
    check_buffers_equal(oracle_global_sync(steps, layout), _shards(states))
    assert log.count(SyncPhase.GLOBAL_ALL_REDUCE) == 2
    assert all(state.micro_step == 0 for state in states.values())


# --- Test the oracle ---


def test_oracle_single_rank():
    layout = build_group_layout(1, 1)
    result = oracle_global_sync([{0: _int64(5, 6, 7)}], layout)
    check_buffers_equal({0: _int64(5, 6, 7)}, result)


def test_oracle_opposite_gradients():
    layout = build_group_layout(2, 2)
    result = oracle_global_sync([{0: _int64(3, -4), 1: _int64(-3, 4)}], layout)
    check_buffers_equal({0: _int64(0), 1: _int64(0)}, result)


def test_oracle_matches_scalar_loop():
    layout = build_group_layout(8, 2)
    steps = _random_steps(8, 4, 6, seed=4)
    expected = {}
    for rank in range(8):
        owned = rank % 2
        values = []
        for index in range(owned * 3, owned * 3 + 3):
            total = 0
            for grads in steps:
                for source in range(8):
                    total += int(grads[source][index])

            values.append(total)

        expected[rank] = np.array(values, dtype=np.int64)

    check_buffers_equal(expected, oracle_global_sync(steps, layout))


# --- Test both schedules against the oracle ---

sweep = [
    (n, p, s)
    for n in (2, 4, 8, 16)
    for p in range(1, n + 1)
    if n % p == 0
    for s in (1, 2, 4)
]


@pytest.mark.parametrize("n, p, s", sweep)
@pytest.mark.parametrize("schedule", list(Schedule))
def test_integer_gradients_exact(n, p, s, schedule):
    layout = build_group_layout(n, p)
    steps = _random_steps(n, s, 2 * n + 3, seed=n * p + s)
    states = run_global_step(layout, steps, schedule)
    check_buffers_equal(oracle_global_sync(steps, layout), _shards(states))


@pytest.mark.parametrize("n, p, s", sweep)
@pytest.mark.parametrize("schedule", list(Schedule))
def test_float_gradients_close(n, p, s, schedule):
    layout = build_group_layout(n, p)
    steps = _random_steps(n, s, 2 * n + 3, seed=n * p + s, dtype=np.float64)
    states = run_global_step(layout, steps, schedule)
    check_buffers_equal(
        oracle_global_sync(steps, layout), _shards(states), exact=False, rtol=1e-5
    )
