"""
Library for scale-aware sharded data parallel training: group topology,
collectives over virtual ranks, gradient synchronisation schedules, analytical
cost models and an iteration simulator.

For Copyright information, please see LICENCE.
"""

from . import (  # noqa: F401
    collectives,
    cost_model,
    simulation,
    synchronisation,
    topology,
    utilities,
)
