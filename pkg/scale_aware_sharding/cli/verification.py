"""
Oracle sweeps over the collectives and synchronisation schedules.

Three families of checks are run:

- hierarchical_all_gather against all_gather for every p <= max_p that is a
  multiple of k, every k in (1, 2, 4, 8) up to max_k, every seed and chunk
  size; outputs must be bit-identical.
- the 2-hop and alternative schedules against oracle_global_sync for n in
  (2, 4, 8, 16) up to max_p, every divisor p of n and s in (1, 2, 4); integer
  gradients must match exactly and float gradients within 1e-5 relative.
- batched collectives against the same collectives issued one at a time.

For Copyright information, please see LICENCE.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from scale_aware_sharding.collectives import (
    ChunkLayout,
    VirtualTransport,
    all_gather,
    batched_all_gather,
    batched_reduce_scatter,
    hierarchical_all_gather,
    reduce_scatter,
)
from scale_aware_sharding.synchronisation import (
    Schedule,
    oracle_global_sync,
    run_global_step,
)
from scale_aware_sharding.topology import ClusterSpec, build_group_layout

logger = logging.getLogger(__name__)

DEVICES_PER_NODE = (1, 2, 4, 8)
SYNC_RANKS = (2, 4, 8, 16)
MICRO_STEPS = (1, 2, 4)
DEFAULT_CHUNK_SIZES = (1, 7, 1024)
"Payload chunk sizes in bytes."

FLOAT_TOLERANCE = 1e-5


@dataclass(frozen=True)
class CheckResult:
    "The outcome of one oracle comparison."
    check: str
    group: str
    "The matrix row the result is counted in, e.g. k=4 or n=8."

    case: str
    "The parameters of the comparison, e.g. p=8 k=4 seed=2 chunk=7B."

    passed: bool
    detail: str = ""


@dataclass
class VerificationMatrix:
    "Results of a sweep, in the order they were run."
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def first_failure(self) -> Optional[CheckResult]:
        return next((r for r in self.results if not r.passed), None)

    def to_text(self) -> str:
        "One line per (check, group): passed and total counts."
        rows = {}
        for result in self.results:
            counts = rows.setdefault((result.check, result.group), [0, 0])
            counts[0] += result.passed
            counts[1] += 1

        lines = []
        for (check, group), (passed, total) in rows.items():
            status = "PASS" if passed == total else "FAIL"
            lines.append(f"{check:<24} {group:<5} {passed:>6}/{total:<6} {status}")

        return "\n".join(lines) + "\n" if lines else ""


def _layout_diff(actual, shards, p) -> str:
    layout = ChunkLayout.identify(actual, shards)
    return f"expected chunk layout {tuple(range(p))}, got {layout.chunks}"


def check_hierarchical_gather(
    p: int,
    k: int,
    seed: int,
    chunk_bytes: int,
    transport: VirtualTransport,
    rearrange: bool = True,
) -> CheckResult:
    "Compare the three-stage gather with the vanilla one on one partition group."
    cluster = ClusterSpec(
        num_nodes=p // k,
        devices_per_node=k,
        intra_node_bandwidth=1.0,
        inter_node_bandwidth_per_node=1.0,
    )
    layout = build_group_layout(p, p)
    rng = np.random.default_rng([seed, p, k, chunk_bytes])
    shards = {
        r: rng.integers(0, 256, size=chunk_bytes, dtype=np.uint8) for r in range(p)
    }
    expected = all_gather(range(p), shards, transport)
    actual = hierarchical_all_gather(layout, cluster, shards, transport, rearrange)
    case = f"p={p} k={k} seed={seed} chunk={chunk_bytes}B"
    for rank in range(p):
        if actual[rank].tobytes() != expected[rank].tobytes():
            detail = f"rank {rank}: " + _layout_diff(
                actual[rank], [shards[r] for r in range(p)], p
            )
            return CheckResult("hierarchical_all_gather", f"k={k}", case, False, detail)

    return CheckResult("hierarchical_all_gather", f"k={k}", case, True)


def _gradients(rng, n, s, length, dtype):
    if dtype == np.int64:
        return [
            {r: rng.integers(-1000, 1000, size=length, dtype=np.int64) for r in range(n)}
            for _ in range(s)
        ]

    return [{r: rng.standard_normal(length) for r in range(n)} for _ in range(s)]


def check_schedules(
    n: int, p: int, s: int, seed: int, dtype, transport: VirtualTransport
) -> List[CheckResult]:
    "Compare both synchronisation schedules with the oracle."
    layout = build_group_layout(n, p)
    dtype = np.dtype(dtype)
    rng = np.random.default_rng([seed, n, p, s])
    grads = _gradients(rng, n, s, 2 * n + 3, dtype)
    expected = oracle_global_sync(grads, layout)
    case = f"n={n} p={p} s={s} seed={seed} dtype={dtype}"
    results = []
    for schedule in Schedule:
        states = run_global_step(layout, grads, schedule, transport=transport)
        check = f"{schedule.value}_sync"
        failure = None
        for rank in range(n):
            actual = states[rank].accumulated_shard
            if dtype == np.int64:
                equal = np.array_equal(actual, expected[rank])
            else:
                equal = np.allclose(actual, expected[rank], rtol=FLOAT_TOLERANCE, atol=0)

            if not equal:
                failure = f"rank {rank}: expected {expected[rank]}, got {actual}"
                break

        results.append(
            CheckResult(check, f"n={n}", case, failure is None, failure or "")
        )

    return results


def check_batched(
    n: int, p: int, seed: int, transport: VirtualTransport
) -> CheckResult:
    "Compare batched collectives over the partition groups with single launches."
    layout = build_group_layout(n, p)
    rng = np.random.default_rng([seed, n, p])
    groups = layout.partition_groups
    shards = [
        {r: rng.integers(-1000, 1000, size=3, dtype=np.int64) for r in g} for g in groups
    ]
    buffers = [
        {r: rng.integers(-1000, 1000, size=3 * p, dtype=np.int64) for r in g}
        for g in groups
    ]
    case = f"n={n} p={p} seed={seed}"
    gathered = batched_all_gather(groups, shards, transport)
    reduced = batched_reduce_scatter(groups, buffers, transport=transport)
    for i, group in enumerate(groups):
        single_gather = all_gather(group, shards[i], transport)
        single_reduce = reduce_scatter(group, buffers[i], transport=transport)
        for rank in group:
            if not np.array_equal(gathered[i][rank], single_gather[rank]):
                detail = f"all_gather of group {i} differs on rank {rank}"
                return CheckResult("batched_collectives", f"n={n}", case, False, detail)

            if not np.array_equal(reduced[i][rank], single_reduce[rank]):
                detail = f"reduce_scatter of group {i} differs on rank {rank}"
                return CheckResult("batched_collectives", f"n={n}", case, False, detail)

    return CheckResult("batched_collectives", f"n={n}", case, True)


def run_sweep(
    max_p: int = 64,
    max_k: int = 8,
    seeds: int = 5,
    chunk_sizes: Sequence[int] = DEFAULT_CHUNK_SIZES,
    threads: int = 1,
    corrupt_stage2: bool = False,
) -> VerificationMatrix:
    """
    Run every oracle comparison.

    Args:
        max_p: Largest partition group (and rank count of the schedule checks).
        max_k: Largest number of devices per node.
        seeds: Number of random seeds, starting at 0.
        chunk_sizes: Payload chunk sizes in bytes for the gather checks.
        threads: Worker threads executing each collective round.
        corrupt_stage2: Skip the rearrangement stage of the hierarchical
          gather, which must make the sweep fail.

    Returns:
    The results. The order, and so the printed matrix, does not depend on the
    number of threads.
    """
    matrix = VerificationMatrix()
    if seeds == 0:
        logger.warning("no seeds requested, nothing was verified")
        return matrix

    with VirtualTransport(max_workers=threads) as transport:
        for k in (k for k in DEVICES_PER_NODE if k <= max_k):
            for p in range(k, max_p + 1, k):
                for seed in range(seeds):
                    for chunk in chunk_sizes:
                        matrix.results.append(
                            check_hierarchical_gather(
                                p, k, seed, chunk, transport, not corrupt_stage2
                            )
                        )

        for n in (n for n in SYNC_RANKS if n <= max_p):
            for p in (p for p in range(1, n + 1) if n % p == 0):
                for seed in range(seeds):
                    matrix.results.append(check_batched(n, p, seed, transport))
                    for s in MICRO_STEPS:
                        for dtype in (np.int64, np.float64):
                            matrix.results.extend(
                                check_schedules(n, p, s, seed, dtype, transport)
                            )

    logger.info(
        "%d of %d checks passed",
        sum(r.passed for r in matrix.results),
        len(matrix.results),
    )
    return matrix
