"""
Effective bandwidth profiles.

A profile holds the scalar effective bandwidths B_all, B_part and B_repl and
optionally a table of measured effective bandwidths keyed by message size and
group scale. Table lookups pick the smallest tabulated scale at least as large
as the requested one, interpolate log-linearly in message size and clamp at
the edges of the table.

For Copyright information, please see LICENCE.
"""

import bisect
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from scale_aware_sharding.utilities.exceptions import (
    EmptyProfileError,
    ValidationError,
)
from scale_aware_sharding.utilities.validation import validate_count, validate_positive

logger = logging.getLogger(__name__)


class BandwidthRole(Enum):
    """The group a collective runs in."""

    ALL = "all"
    PARTITION = "partition"
    REPLICATION = "replication"


@dataclass(frozen=True)
class BandwidthEntry:
    "One measured effective bandwidth."
    message_bytes: float
    group_scale: int
    bandwidth: float

    def __post_init__(self):
        validate_positive("message_bytes", self.message_bytes)
        validate_count("group_scale", self.group_scale, 1)
        validate_positive("bandwidth", self.bandwidth)


@dataclass(frozen=True)
class BandwidthProfile:
    "Effective bandwidths in bytes per second."
    B_all: Optional[float] = None
    "Among all ranks."

    B_part: Optional[float] = None
    "Within a partition group."

    B_repl: Optional[float] = None
    "Within a replication group."

    table: Tuple[BandwidthEntry, ...] = ()
    "Measured bandwidths by message size and group scale."

    def __post_init__(self):
        for name in ("B_all", "B_part", "B_repl"):
            if getattr(self, name) is not None:
                validate_positive(name, getattr(self, name))

        object.__setattr__(self, "table", tuple(self.table))
        seen = set()
        for entry in self.table:
            key = (entry.message_bytes, entry.group_scale)
            if key in seen:
                raise ValidationError(f"duplicate bandwidth table entry for {key}")

            seen.add(key)

        for scale in {e.group_scale for e in self.table}:
            values = [b for _, b in self._curve(scale)]
            if values != sorted(values):
                raise ValidationError(
                    f"bandwidths at scale {scale} must not decrease with message size"
                )

    def _curve(self, scale):
        return sorted(
            (e.message_bytes, e.bandwidth) for e in self.table if e.group_scale == scale
        )

    def scalar(self, role) -> Optional[float]:
        role = BandwidthRole(role)
        return {
            BandwidthRole.ALL: self.B_all,
            BandwidthRole.PARTITION: self.B_part,
            BandwidthRole.REPLICATION: self.B_repl,
        }[role]

    def resolve(self, role, message_bytes: float, group_scale: int) -> float:
        """
        The bandwidth for a collective of the given role.

        The role's scalar wins when set; otherwise the table is consulted.
        """
        value = self.scalar(role)
        if value is not None:
            return value

        return effective_bandwidth(message_bytes, group_scale, self)


def effective_bandwidth(
    message_bytes: float, group_scale: int, profile: BandwidthProfile
) -> float:
    """
    Look up the effective bandwidth of a collective in a profile's table.

    Args:
        message_bytes: The message size in bytes.
        group_scale: The number of ranks in the collective.
        profile: The profile holding the table.

    Returns:
    The interpolated bandwidth, non-decreasing in message size at a fixed
    scale.
    """
    validate_positive("message_bytes", message_bytes)
    validate_count("group_scale", group_scale, 1)
    if not profile.table:
        raise EmptyProfileError("the bandwidth profile has no table entries")

    scales = sorted({e.group_scale for e in profile.table})
    index = bisect.bisect_left(scales, group_scale)
    if index == len(scales):
        logger.warning(
            "group scale %d exceeds the profile, using scale %d", group_scale, scales[-1]
        )
        index -= 1

    curve = profile._curve(scales[index])
    sizes = [m for m, _ in curve]
    if message_bytes <= sizes[0]:
        return curve[0][1]

    if message_bytes >= sizes[-1]:
        return curve[-1][1]

    upper = bisect.bisect_right(sizes, message_bytes)
    (m0, b0), (m1, b1) = curve[upper - 1], curve[upper]
    weight = (math.log(message_bytes) - math.log(m0)) / (math.log(m1) - math.log(m0))
    return b0 + weight * (b1 - b0)


def group_bandwidth(
    profile: BandwidthProfile,
    message_bytes: float,
    group_scale: int,
    spans_nodes: bool,
) -> float:
    """
    The bandwidth of a partition group collective.

    B_part holds inside one node. A group that spans nodes shares the
    inter-node links like a collective among all ranks, so it resolves as an
    all-rank collective of its own scale. A partition group covering the whole
    cluster therefore gets exactly the all-rank bandwidth.

    Args:
        profile: The bandwidth profile.
        message_bytes: The message size in bytes.
        group_scale: The number of ranks in the group.
        spans_nodes: Whether the group's ranks live on more than one node.
    """
    role = BandwidthRole.ALL if spans_nodes else BandwidthRole.PARTITION
    return profile.resolve(role, message_bytes, group_scale)


def default_bandwidth_profile() -> BandwidthProfile:
    """
    Bandwidths measured on 64 GPUs over 8 nodes.

    128 GB/s within a node and 11 GB/s across all 64 ranks. No replication
    group measurement exists so B_repl takes the all-rank value.
    """
    return BandwidthProfile(
        B_all=11e9,
        B_part=128e9,
        B_repl=11e9,
        table=(
            BandwidthEntry(message_bytes=1, group_scale=8, bandwidth=128e9),
            BandwidthEntry(message_bytes=1e9, group_scale=64, bandwidth=11e9),
        ),
    )
