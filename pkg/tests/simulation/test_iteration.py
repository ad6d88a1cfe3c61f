import pytest

from scale_aware_sharding.cost_model import zero3_iteration_volume
from scale_aware_sharding.simulation import (
    LayerSpec,
    Phase,
    SimulationOptions,
    Strategy,
    StrategyConfig,
    compare_strategies,
    preset_layers,
    simulate_iteration,
)
from scale_aware_sharding.utilities.exceptions import (
    InfeasibleError,
    OutOfRangeError,
    ShapeError,
    ValidationError,
)

# 62.5 TFLOP/s is the achieved rate of a default device, so these take 1 and
# 2 milliseconds.
FWD_FLOPS = 62.5e9
BWD_FLOPS = 125e9


def _layers(count=4, param_bytes=64 * 1000):
    return [
        LayerSpec(param_bytes, FWD_FLOPS, BWD_FLOPS, name=f"layer{i}")
        for i in range(count)
    ]


# --- Test argument validation ---


@pytest.mark.dependency()
def test_mics_without_partition_size():
    with pytest.raises(ValidationError):
        StrategyConfig(Strategy.MICS)


@pytest.mark.dependency()
def test_zero3_with_two_hop():
    with pytest.raises(ValidationError):
        StrategyConfig("zero3", two_hop=True)


@pytest.mark.dependency()
def test_no_micro_steps():
    with pytest.raises(OutOfRangeError):
        StrategyConfig.zero3(s=0)


@pytest.mark.dependency()
def test_zero3_partition_size_differs(fxt_cluster):
    with pytest.raises(ValidationError):
        simulate_iteration(fxt_cluster(1, 8), _layers(), StrategyConfig("zero3", p=4))


@pytest.mark.dependency()
def test_no_layers(fxt_cluster):
    with pytest.raises(ValidationError):
        simulate_iteration(fxt_cluster(1, 8), [], StrategyConfig.zero3())


@pytest.mark.dependency()
def test_partition_straddles_nodes(fxt_cluster):
    with pytest.raises(ShapeError):
        simulate_iteration(fxt_cluster(6, 8), _layers(), StrategyConfig.mics(12))


@pytest.mark.dependency()
def test_single_strategy_comparison(fxt_cluster):
    with pytest.raises(ValidationError):
        compare_strategies(fxt_cluster(1, 8), _layers(), [StrategyConfig.zero3()])


@pytest.mark.dependency()
def test_states_too_large_for_partition(fxt_cluster):
    cluster = fxt_cluster(4, 8, device_memory=1e4)
    with pytest.raises(InfeasibleError, match="at least 32"):
        simulate_iteration(cluster, _layers(1, 20000), StrategyConfig.mics(8))


@pytest.mark.dependency()
def test_states_too_large_for_cluster(fxt_cluster):
    cluster = fxt_cluster(1, 2, device_memory=1e3)
    with pytest.raises(InfeasibleError, match="do not fit"):
        simulate_iteration(cluster, _layers(1, 20000), StrategyConfig.zero3())


def test_default_names():
    assert StrategyConfig.zero3().name == "zero3"
    assert StrategyConfig.mics(8).name == "mics(p=8)"
    assert StrategyConfig.mics(8, name="custom").name == "custom"


def test_mics_factory_switches_on_options():
    cfg = StrategyConfig.mics(16)
    assert (cfg.hierarchical_gather, cfg.two_hop) == (True, True)
    cfg = StrategyConfig.mics(16, hierarchical_gather=False, two_hop=False)
    assert cfg == StrategyConfig(Strategy.MICS, 16)


# --- Test simulated iterations ---


@pytest.mark.dependency(
    depends=[
        "test_mics_without_partition_size",
        "test_zero3_with_two_hop",
        "test_no_micro_steps",
        "test_zero3_partition_size_differs",
        "test_no_layers",
        "test_partition_straddles_nodes",
        "test_single_strategy_comparison",
        "test_states_too_large_for_partition",
        "test_states_too_large_for_cluster",
    ]
)
def test_single_device_only_computes(fxt_cluster):
    trace = simulate_iteration(fxt_cluster(1, 1), _layers(), StrategyConfig.zero3(s=2))
    assert trace.total_seconds == pytest.approx(2 * 4 * 3e-3)
    assert trace.total_seconds == pytest.approx(trace.compute_seconds)
    assert trace.communication_seconds == 0
    assert trace.gather_bytes == 0
    assert trace.sync_bytes == 0
    assert trace.inter_node_bytes == 0
    assert trace.sequences_per_second == pytest.approx(2 / trace.total_seconds)


@pytest.mark.parametrize("num_nodes, devices_per_node", [(1, 4), (1, 8), (8, 8)])
def test_zero3_moves_three_gathers_per_micro_step(
    fxt_cluster, num_nodes, devices_per_node
):
    cluster = fxt_cluster(num_nodes, devices_per_node)
    layers = _layers()
    trace = simulate_iteration(cluster, layers, StrategyConfig.zero3(s=3))
    model_bytes = sum(layer.param_bytes for layer in layers)
    expected = 3 * zero3_iteration_volume(cluster.n, model_bytes)
    assert trace.gather_bytes + trace.sync_bytes == expected
    assert trace.gather_bytes == 2 * expected / 3


def test_partition_within_node_gathers_inside(fxt_cluster):
    trace = simulate_iteration(fxt_cluster(8, 8), _layers(), StrategyConfig.mics(8))
    assert trace.inter_node_gather_bytes == 0
    assert trace.inter_node_bytes > 0
    assert trace.batched_events == 0


def test_hierarchical_gathers_are_staged(fxt_cluster):
    cfg = StrategyConfig.mics(16, s=2)
    trace = simulate_iteration(fxt_cluster(8, 8), _layers(), cfg)
    assert trace.batched_events == 2 * 2 * 4
    names = [task.name for task in trace.tasks if task.phase is Phase.FWD_GATHER]
    assert names[:2] == ["step0.layer0.fwd_gather.inter", "step0.layer0.fwd_gather.intra"]


def test_whole_cluster_partition_matches_zero3(fxt_cluster):
    cluster = fxt_cluster(8, 8, alpha_intra=5e-6, alpha_inter=20e-6)
    zero3 = simulate_iteration(cluster, _layers(), StrategyConfig.zero3(s=2))
    cfg = StrategyConfig.mics(64, hierarchical_gather=False, s=2)
    mics = simulate_iteration(cluster, _layers(), cfg)
    assert mics.gather_seconds == zero3.gather_seconds
    assert mics.sync_seconds == zero3.sync_seconds
    assert mics.total_seconds == zero3.total_seconds


@pytest.mark.parametrize("p", (16, 32, 64))
def test_hierarchical_gather_not_slower_than_flat(fxt_cluster, p):
    cluster = fxt_cluster(8, 8)
    options = SimulationOptions(include_latency=False)
    flat, hierarchical = (
        simulate_iteration(
            cluster, _layers(), StrategyConfig.mics(p, staged), options=options
        )
        for staged in (False, True)
    )
    assert hierarchical.gather_seconds <= flat.gather_seconds
    assert hierarchical.inter_node_gather_bytes < flat.inter_node_gather_bytes


def test_boundary_sync_only_with_replication(fxt_cluster):
    cluster = fxt_cluster(2, 8)
    replicated = simulate_iteration(cluster, _layers(), StrategyConfig.mics(8))
    single = simulate_iteration(cluster, _layers(), StrategyConfig.mics(16))
    global_sync = simulate_iteration(
        cluster, _layers(), StrategyConfig.mics(8, two_hop=False)
    )
    assert replicated.boundary_sync_seconds > 0
    assert single.boundary_sync_seconds == 0
    assert global_sync.boundary_sync_seconds == 0
    assert global_sync.micro_sync_seconds > replicated.micro_sync_seconds


@pytest.mark.parametrize("prefetch_depth", (0, 1, 3))
def test_peak_memory(fxt_cluster, prefetch_depth):
    layers = _layers(3) + [LayerSpec(128 * 1000, FWD_FLOPS, BWD_FLOPS)]
    cfg = StrategyConfig.mics(8, prefetch_depth=prefetch_depth)
    trace = simulate_iteration(fxt_cluster(2, 8), layers, cfg)
    states = (3 * 64 * 1000 + 128 * 1000) / 2 * 16
    assert trace.peak_model_state_bytes_per_device == pytest.approx(
        states / 8 + (prefetch_depth + 1) * 128 * 1000
    )


def test_without_prefetch_gathers_wait_for_compute(fxt_cluster):
    cfg = StrategyConfig.zero3(prefetch_depth=0)
    trace = simulate_iteration(fxt_cluster(1, 8), _layers(), cfg)
    computes = [t for t in trace.tasks if t.phase is Phase.FWD_COMPUTE]
    gathers = [t for t in trace.tasks if t.phase is Phase.FWD_GATHER]
    for compute, gather in zip(computes, gathers[1:]):
        assert gather.start >= compute.finish


def test_latency_lengthens_iteration(fxt_cluster):
    cluster = fxt_cluster(8, 8, alpha_intra=5e-6, alpha_inter=20e-6)
    cfg = StrategyConfig.mics(16)
    with_latency = simulate_iteration(cluster, _layers(), cfg)
    without = simulate_iteration(
        cluster, _layers(), cfg, options=SimulationOptions(include_latency=False)
    )
    assert with_latency.communication_seconds > without.communication_seconds


def test_throughput_fields(fxt_cluster):
    options = SimulationOptions(micro_batch=2)
    cfg = StrategyConfig.mics(8, s=4)
    trace = simulate_iteration(fxt_cluster(2, 8), _layers(), cfg, options=options)
    assert trace.sequences_per_second == pytest.approx(16 * 4 * 2 / trace.total_seconds)
    assert trace.flops_per_device == pytest.approx(
        4 * 4 * (FWD_FLOPS + BWD_FLOPS) / trace.total_seconds
    )


def test_identical_arguments_identical_traces(fxt_cluster):
    cluster = fxt_cluster(4, 8, alpha_inter=10e-6)
    cfg = StrategyConfig.mics(16, s=3)
    first = simulate_iteration(cluster, _layers(6), cfg)
    second = simulate_iteration(cluster, _layers(6), cfg)
    assert first == second
    assert first.as_record() == second.as_record()


def test_record_fields(fxt_cluster):
    trace = simulate_iteration(fxt_cluster(1, 8), _layers(), StrategyConfig.zero3())
    record = trace.as_record()
    assert record["strategy"] == "zero3"
    assert record["p"] == 8
    assert "tasks" not in record


# --- Test strategy comparisons ---


def test_small_partition_beats_zero3_on_ten_billion_parameters(fxt_cluster):
    report = compare_strategies(
        fxt_cluster(8, 8),
        preset_layers("BERT 10B"),
        [StrategyConfig.zero3(), StrategyConfig.mics(8)],
    )
    assert report["mics(p=8).speedup"] > 1
    assert report["mics(p=8).gather_speedup"] >= 2
    assert report["mics(p=8).memory_ratio"] < 1
    assert report.baseline.name == "zero3"


def test_repeated_names_are_numbered(fxt_cluster):
    report = compare_strategies(
        fxt_cluster(1, 8), _layers(), [StrategyConfig.zero3(), StrategyConfig.zero3()]
    )
    assert list(report.traces) == ["zero3", "zero3#2"]
    assert report["zero3#2.speedup"] == 1.0
    assert report["zero3#2.traffic_reduction"] == 1.0
