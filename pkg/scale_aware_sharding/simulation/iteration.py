"""
Simulation of one training iteration under a sharding strategy.

An iteration is s micro-steps. In every micro-step each layer's parameters are
all-gathered before its forward compute and again before its backward
compute, and each layer's gradients are synchronised once its backward
compute finishes. With the 2-hop schedule the accumulated gradient shards are
all-reduced across replication groups once, after the last micro-step.

Communication runs on its own stream and may overlap compute. The gather for
a compute task may be issued once the compute prefetch_depth places earlier
has started.

Flat collectives of a group inside one node run at B_part and those of a
group spanning nodes at the all-rank bandwidth of the group's scale, for
either strategy. The hierarchical stages run at the NIC and intra-node link
bandwidths.

Byte counters are exact. Per rank counters hold the bytes one rank receives.
Node counters assume ring collectives: every ring of a group that spans nodes
enters a node through its NIC once, so a node receives (g-1)/g of the message
over inter-node links per crossing ring of g ranks and everything else over
intra-node links.

For Copyright information, please see LICENCE.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from scale_aware_sharding.cost_model import (
    BandwidthProfile,
    BandwidthRole,
    CostReport,
    LatencyAlgorithm,
    collective_latency,
    default_bandwidth_profile,
    group_bandwidth,
)
from scale_aware_sharding.topology import (
    DEFAULT_BYTES_PER_PARAM_STATES,
    DEFAULT_HEADROOM_FRACTION,
    ClusterSpec,
    build_group_layout,
    min_feasible_partition,
    model_state_bytes_per_device,
    validate_partition_shape,
)
from scale_aware_sharding.utilities.exceptions import InfeasibleError, ValidationError
from scale_aware_sharding.utilities.validation import (
    validate_count,
    validate_fraction,
)

from .engine import Phase, ScheduledTask, Stream, Timeline
from .layers import LayerSpec, total_params

logger = logging.getLogger(__name__)

DEFAULT_COMPUTE_EFFICIENCY = 0.5
"Share of peak device FLOP/s achieved by layer compute."


class Strategy(Enum):
    """Ways of sharding the model states."""

    MICS = "mics"
    """Partition within groups of p ranks and replicate across the groups."""

    ZERO3 = "zero3"
    """Partition across all ranks."""


@dataclass(frozen=True)
class StrategyConfig:
    "A sharding strategy and its communication options."
    strategy: Strategy
    p: Optional[int] = None
    "Partition group size, required for mics and implied (n) for zero3."

    hierarchical_gather: bool = False
    "Gather parameters with the three-stage hierarchical all-gather."

    two_hop: bool = False
    """
    Synchronise gradients with a partition group reduce-scatter per micro-step
    and one replication group all-reduce at the accumulation boundary, instead
    of a global all-reduce per micro-step.
    """

    s: int = 1
    "Micro-steps per iteration."

    prefetch_depth: int = 1
    "How many compute tasks ahead a gather may be issued; 0 disables overlap."

    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        validate_count("s", self.s, 1)
        validate_count("prefetch_depth", self.prefetch_depth)
        if self.strategy is Strategy.MICS:
            if self.p is None:
                raise ValidationError("mics requires a partition size p")

            validate_count("p", self.p, 1)
        else:
            if self.p is not None:
                validate_count("p", self.p, 1)

            if self.hierarchical_gather or self.two_hop:
                raise ValidationError(
                    "zero3 partitions across all ranks and supports neither "
                    "hierarchical_gather nor two_hop"
                )

        if not self.name:
            label = (
                "zero3" if self.strategy is Strategy.ZERO3 else f"mics(p={self.p})"
            )
            object.__setattr__(self, "name", label)

    @classmethod
    def zero3(cls, s: int = 1, prefetch_depth: int = 1, name: str = ""):
        return cls(Strategy.ZERO3, s=s, prefetch_depth=prefetch_depth, name=name)

    @classmethod
    def mics(
        cls,
        p: int,
        hierarchical_gather: bool = True,
        two_hop: bool = True,
        s: int = 1,
        prefetch_depth: int = 1,
        name: str = "",
    ):
        """
        A mics configuration with the hierarchical gather and 2-hop
        synchronisation switched on unless disabled. Constructing
        StrategyConfig directly leaves both off.
        """
        return cls(
            Strategy.MICS, p, hierarchical_gather, two_hop, s, prefetch_depth, name
        )

    def partition_size(self, n: int) -> int:
        "The partition group size on n ranks."
        if self.strategy is Strategy.MICS:
            return self.p

        if self.p is not None and self.p != n:
            raise ValidationError(
                f"zero3 partitions across all {n} ranks, got p={self.p}"
            )

        return n


@dataclass(frozen=True)
class SimulationOptions:
    "Settings shared by every strategy of a comparison."
    compute_efficiency: float = DEFAULT_COMPUTE_EFFICIENCY
    include_latency: bool = True
    latency_algorithm: LatencyAlgorithm = LatencyAlgorithm.TREE
    headroom_fraction: float = DEFAULT_HEADROOM_FRACTION
    bytes_per_param_states: int = DEFAULT_BYTES_PER_PARAM_STATES
    param_dtype_bytes: int = 2
    "Bytes per parameter of the gathered weights."

    micro_batch: int = 1
    "Sequences per micro-batch, used for throughput only."

    def __post_init__(self):
        validate_fraction("compute_efficiency", self.compute_efficiency)
        validate_fraction("headroom_fraction", self.headroom_fraction)
        validate_count("bytes_per_param_states", self.bytes_per_param_states, 1)
        validate_count("param_dtype_bytes", self.param_dtype_bytes, 1)
        validate_count("micro_batch", self.micro_batch, 1)
        object.__setattr__(
            self, "latency_algorithm", LatencyAlgorithm(self.latency_algorithm)
        )


@dataclass(frozen=True)
class IterationTrace:
    "Timing, traffic and memory of one simulated iteration."
    name: str
    strategy: Strategy
    n: int
    p: int
    s: int
    total_seconds: float
    fwd_gather_seconds: float
    fwd_compute_seconds: float
    bwd_gather_seconds: float
    bwd_compute_seconds: float
    micro_sync_seconds: float
    boundary_sync_seconds: float
    intra_node_bytes: float
    "Bytes one node receives over intra-node links."

    inter_node_bytes: float
    "Bytes one node receives through its NIC."

    inter_node_gather_bytes: float
    "The parameter gather share of inter_node_bytes."

    gather_bytes: float
    "Bytes one rank receives from parameter gathers."

    sync_bytes: float
    "Bytes one rank receives from gradient synchronisation."

    peak_model_state_bytes_per_device: float
    "Partitioned model states plus the gathered layers in flight."

    batched_events: int
    "Coalesced intra-node launches of the hierarchical gathers."

    sequences_per_second: float
    flops_per_device: float
    "Achieved FLOP/s of one device."

    tasks: Tuple[ScheduledTask, ...] = field(default=(), repr=False)

    @property
    def compute_seconds(self) -> float:
        return self.fwd_compute_seconds + self.bwd_compute_seconds

    @property
    def gather_seconds(self) -> float:
        return self.fwd_gather_seconds + self.bwd_gather_seconds

    @property
    def sync_seconds(self) -> float:
        return self.micro_sync_seconds + self.boundary_sync_seconds

    @property
    def communication_seconds(self) -> float:
        return self.gather_seconds + self.sync_seconds

    def as_record(self) -> dict:
        "Every field except the task list, ready for serialisation."
        return {
            "name": self.name,
            "strategy": self.strategy.value,
            "n": self.n,
            "p": self.p,
            "s": self.s,
            "total_seconds": self.total_seconds,
            "fwd_gather_seconds": self.fwd_gather_seconds,
            "fwd_compute_seconds": self.fwd_compute_seconds,
            "bwd_gather_seconds": self.bwd_gather_seconds,
            "bwd_compute_seconds": self.bwd_compute_seconds,
            "micro_sync_seconds": self.micro_sync_seconds,
            "boundary_sync_seconds": self.boundary_sync_seconds,
            "intra_node_bytes": self.intra_node_bytes,
            "inter_node_bytes": self.inter_node_bytes,
            "inter_node_gather_bytes": self.inter_node_gather_bytes,
            "gather_bytes": self.gather_bytes,
            "sync_bytes": self.sync_bytes,
            "peak_model_state_bytes_per_device": self.peak_model_state_bytes_per_device,
            "batched_events": self.batched_events,
            "sequences_per_second": self.sequences_per_second,
            "flops_per_device": self.flops_per_device,
        }


def _exact(value: Fraction):
    if value.denominator == 1:
        return int(value)

    return float(value)


def _crossing_rings(groups: Iterable[Sequence[int]], cluster: ClusterSpec) -> int:
    # Ranks are node-major and groups contiguous or strided, so node 0 is
    # representative of every node.
    node = set(cluster.node_ranks(0))
    return sum(1 for g in groups if node & set(g) and cluster.spans_nodes(g))


class _Traffic:
    "Exact byte counters of one rank and one node."

    def __init__(self, cluster: ClusterSpec):
        self.k = cluster.devices_per_node
        self.gather = Fraction(0)
        self.sync = Fraction(0)
        self.node_inter = Fraction(0)
        self.node_inter_gather = Fraction(0)
        self.node_total = Fraction(0)

    def add(self, rank_bytes: Fraction, node_inter: Fraction, gather: bool):
        if gather:
            self.gather += rank_bytes
            self.node_inter_gather += node_inter
        else:
            self.sync += rank_bytes

        self.node_inter += node_inter
        self.node_total += self.k * rank_bytes


def simulate_iteration(
    cluster: ClusterSpec,
    layers: List[LayerSpec],
    cfg: StrategyConfig,
    profile: Optional[BandwidthProfile] = None,
    options: Optional[SimulationOptions] = None,
) -> IterationTrace:
    """
    Simulate one training iteration.

    Args:
        cluster: The cluster being trained on.
        layers: The model's layers in forward order.
        cfg: The sharding strategy.
        profile: Effective bandwidths of the collectives; the default profile
          when not given.
        options: Compute, latency and memory settings.

    Returns:
    The iteration trace. Identical arguments always give identical traces.
    """
    if not layers:
        raise ValidationError("a model needs at least one layer")

    profile = profile or default_bandwidth_profile()
    options = options or SimulationOptions()
    n = cluster.n
    k = cluster.devices_per_node
    P = cfg.partition_size(n)
    if cfg.strategy is Strategy.MICS:
        validate_partition_shape(cluster, P)

    layout = build_group_layout(n, P)

    params = total_params(layers, options.param_dtype_bytes)
    states = params * options.bytes_per_param_states
    per_device = model_state_bytes_per_device(states, P)
    if per_device > cluster.device_memory * options.headroom_fraction:
        try:
            smallest = min_feasible_partition(
                states, cluster, headroom_fraction=options.headroom_fraction
            )
        except InfeasibleError:
            raise InfeasibleError(
                f"{cfg.name}: model states of {states:.6g} bytes do not fit on "
                f"{n} devices"
            ) from None

        raise InfeasibleError(
            f"{cfg.name}: {per_device:.6g} bytes of model states per device exceed "
            f"the usable memory, partition size must be at least {smallest}"
        )

    peak = per_device + (cfg.prefetch_depth + 1) * max(x.param_bytes for x in layers)

    gather_spans = cluster.spans_nodes(layout.partition_groups[0])
    hierarchical = cfg.hierarchical_gather and P > k
    partition_rings = _crossing_rings(layout.partition_groups, cluster)
    replication_rings = _crossing_rings(layout.replication_groups, cluster)
    r = n // P

    def latency(size, spans):
        if not options.include_latency:
            return 0.0

        alpha = cluster.alpha_inter if spans else cluster.alpha_intra
        return collective_latency(size, alpha, options.latency_algorithm)

    traffic = _Traffic(cluster)
    timeline = Timeline()
    computes: List[int] = []
    syncs: List[int] = []
    batched_events = 0

    def prefetch_dependencies():
        c = len(computes)
        if cfg.prefetch_depth == 0:
            return {"after": computes[-1:]}

        if c >= cfg.prefetch_depth:
            return {"after_start": [computes[c - cfg.prefetch_depth]]}

        return {}

    def gather(label, phase, layer):
        nonlocal batched_events
        if P == 1:
            return None

        M = Fraction(layer.param_bytes)
        if hierarchical:
            node_inter = Fraction(P - k, P) * M
        else:
            node_inter = partition_rings * Fraction(P - 1, P) * M

        traffic.add(Fraction(P - 1, P) * M, node_inter, gather=True)
        if hierarchical:
            q = P // k
            stage_one = timeline.add(
                f"{label}.inter",
                Stream.COMMUNICATION,
                phase,
                (P - k) * layer.param_bytes / (P * cluster.inter_node_bandwidth_per_node)
                + latency(q, True),
                **prefetch_dependencies(),
            )
            batched_events += 1
            return timeline.add(
                f"{label}.intra",
                Stream.COMMUNICATION,
                phase,
                (k - 1) * layer.param_bytes / (k * cluster.intra_node_bandwidth)
                + latency(k, False),
                after=[stage_one],
            )

        bandwidth = group_bandwidth(profile, layer.param_bytes, P, gather_spans)
        return timeline.add(
            label,
            Stream.COMMUNICATION,
            phase,
            (P - 1) * layer.param_bytes / (P * bandwidth) + latency(P, gather_spans),
            **prefetch_dependencies(),
        )

    def compute(label, phase, flops, gathered):
        task = timeline.add(
            label,
            Stream.COMPUTE,
            phase,
            flops / (cluster.device_peak_flops * options.compute_efficiency),
            after=[gathered] + computes[-1:],
        )
        computes.append(task)
        return task

    def micro_sync(label, layer, computed):
        M = Fraction(layer.param_bytes)
        if cfg.two_hop or cfg.strategy is Strategy.ZERO3:
            if P == 1:
                return

            traffic.add(
                Fraction(P - 1, P) * M,
                partition_rings * Fraction(P - 1, P) * M,
                gather=False,
            )
            bandwidth = group_bandwidth(profile, layer.param_bytes, P, gather_spans)
            duration = (P - 1) * layer.param_bytes / (P * bandwidth) + latency(
                P, gather_spans
            )
        else:
            if n == 1:
                return

            traffic.add(
                2 * Fraction(n - 1, n) * M,
                (1 if n > k else 0) * 2 * Fraction(n - 1, n) * M,
                gather=False,
            )
            bandwidth = group_bandwidth(profile, layer.param_bytes, n, n > k)
            duration = 2 * (n - 1) * layer.param_bytes / (n * bandwidth) + 2 * latency(
                n, n > k
            )

        syncs.append(
            timeline.add(
                label, Stream.COMMUNICATION, Phase.MICRO_SYNC, duration, after=[computed]
            )
        )

    for step in range(cfg.s):
        for i, layer in enumerate(layers):
            label = f"step{step}.{layer.name or i}"
            gathered = gather(f"{label}.fwd_gather", Phase.FWD_GATHER, layer)
            compute(f"{label}.fwd", Phase.FWD_COMPUTE, layer.fwd_flops, gathered)

        for i in reversed(range(len(layers))):
            layer = layers[i]
            label = f"step{step}.{layer.name or i}"
            gathered = gather(f"{label}.bwd_gather", Phase.BWD_GATHER, layer)
            computed = compute(
                f"{label}.bwd", Phase.BWD_COMPUTE, layer.bwd_flops, gathered
            )
            micro_sync(f"{label}.sync", layer, computed)

    if cfg.two_hop and r > 1:
        G = sum(x.param_bytes for x in layers)
        rank_bytes = 2 * Fraction(r - 1, r) * Fraction(G, P)
        traffic.add(rank_bytes, replication_rings * rank_bytes, gather=False)
        bandwidth = profile.resolve(BandwidthRole.REPLICATION, G / P, r)
        replication_spans = cluster.spans_nodes(layout.replication_groups[0])
        timeline.add(
            "boundary_sync",
            Stream.COMMUNICATION,
            Phase.BOUNDARY_SYNC,
            2 * G * (n - P) / (n * bandwidth) + 2 * latency(r, replication_spans),
            after=syncs + computes[-1:],
        )

    tasks = timeline.run()
    total = max((t.finish for t in tasks), default=0.0)
    phase_seconds = {phase: 0.0 for phase in Phase}
    for task in tasks:
        phase_seconds[task.phase] += task.duration

    flops = cfg.s * sum(x.fwd_flops + x.bwd_flops for x in layers)
    sequences = n * cfg.s * options.micro_batch
    logger.debug(
        "%s: %d tasks, %.6g s, %.6g bytes gathered per rank",
        cfg.name,
        len(tasks),
        total,
        float(traffic.gather),
    )
    return IterationTrace(
        name=cfg.name,
        strategy=cfg.strategy,
        n=n,
        p=P,
        s=cfg.s,
        total_seconds=total,
        fwd_gather_seconds=phase_seconds[Phase.FWD_GATHER],
        fwd_compute_seconds=phase_seconds[Phase.FWD_COMPUTE],
        bwd_gather_seconds=phase_seconds[Phase.BWD_GATHER],
        bwd_compute_seconds=phase_seconds[Phase.BWD_COMPUTE],
        micro_sync_seconds=phase_seconds[Phase.MICRO_SYNC],
        boundary_sync_seconds=phase_seconds[Phase.BOUNDARY_SYNC],
        intra_node_bytes=_exact(traffic.node_total - traffic.node_inter),
        inter_node_bytes=_exact(traffic.node_inter),
        inter_node_gather_bytes=_exact(traffic.node_inter_gather),
        gather_bytes=_exact(traffic.gather),
        sync_bytes=_exact(traffic.sync),
        peak_model_state_bytes_per_device=peak,
        batched_events=batched_events,
        sequences_per_second=sequences / total if total else math.inf,
        flops_per_device=flops / total if total else 0.0,
        tasks=tuple(tasks),
    )


def _ratio(baseline: float, candidate: float) -> float:
    if candidate == 0:
        return 1.0 if baseline == 0 else math.inf

    return baseline / candidate


@dataclass
class ComparisonReport(CostReport):
    "Cost entries of a strategy comparison together with the traces."
    traces: Dict[str, IterationTrace] = field(default_factory=dict)

    @property
    def baseline(self) -> IterationTrace:
        return next(iter(self.traces.values()))


_RATIOS = (
    ("speedup", "total_seconds"),
    ("gather_speedup", "gather_seconds"),
    ("sync_speedup", "sync_seconds"),
    ("traffic_reduction", "inter_node_gather_bytes"),
    ("memory_ratio", "peak_model_state_bytes_per_device"),
)


def compare_strategies(
    cluster: ClusterSpec,
    layers: List[LayerSpec],
    configs: Sequence[StrategyConfig],
    profile: Optional[BandwidthProfile] = None,
    options: Optional[SimulationOptions] = None,
    title: str = "",
) -> ComparisonReport:
    """
    Simulate several strategies and relate each to the first one.

    Ratios are baseline over candidate, so a value above 1 favours the
    candidate: `speedup` (iteration time), `gather_speedup`, `sync_speedup`,
    `traffic_reduction` (inter-node gather bytes) and `memory_ratio`.
    Repeated names get a "#2", "#3", ... suffix.
    """
    if len(configs) < 2:
        raise ValidationError("a comparison needs at least two strategies")

    report = ComparisonReport(title=title)
    for cfg in configs:
        name = cfg.name
        copy = 1
        while name in report.traces:
            copy += 1
            name = f"{cfg.name}#{copy}"

        report.traces[name] = simulate_iteration(cluster, layers, cfg, profile, options)

    baseline = report.baseline
    for name, trace in report.traces.items():
        report.add(f"{name}.total_seconds", trace.total_seconds, "seconds", "simulation")
        report.add(
            f"{name}.gather_seconds", trace.gather_seconds, "seconds", "simulation"
        )
        report.add(f"{name}.sync_seconds", trace.sync_seconds, "seconds", "simulation")
        report.add(
            f"{name}.inter_node_bytes", trace.inter_node_bytes, "bytes", "simulation"
        )
        report.add(
            f"{name}.peak_model_state_bytes_per_device",
            trace.peak_model_state_bytes_per_device,
            "bytes",
            "memory",
        )
        report.add(
            f"{name}.sequences_per_second",
            trace.sequences_per_second,
            "sequences/s",
            "simulation",
        )
        if trace is baseline:
            continue

        for ratio, attribute in _RATIOS:
            report.add(
                f"{name}.{ratio}",
                _ratio(getattr(baseline, attribute), getattr(trace, attribute)),
                "ratio",
                "comparison",
            )

    return report
