"""
Gradient synchronisation across micro-steps.

For Copyright information, please see LICENCE.
"""

from .events import EventLog, SyncEvent, SyncPhase  # noqa: F401
from .oracle import oracle_global_sync  # noqa: F401
from .schedule import (  # noqa: F401
    Schedule,
    SyncState,
    alternative_schedule_step,
    initial_sync_states,
    run_global_step,
    two_hop_boundary,
    two_hop_micro_step,
)
