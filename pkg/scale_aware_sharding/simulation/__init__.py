"""
Discrete-event simulation of training iterations.

For Copyright information, please see LICENCE.
"""

from .engine import Phase, ScheduledTask, Stream, Timeline  # noqa: F401
from .iteration import (  # noqa: F401
    DEFAULT_COMPUTE_EFFICIENCY,
    ComparisonReport,
    IterationTrace,
    SimulationOptions,
    Strategy,
    StrategyConfig,
    compare_strategies,
    simulate_iteration,
)
from .layers import (  # noqa: F401
    TRANSFORMER_PRESETS,
    LayerSpec,
    TransformerShape,
    derive_layers_from_transformer,
    preset_layers,
    total_params,
)
