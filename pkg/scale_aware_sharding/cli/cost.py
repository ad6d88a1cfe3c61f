"""
Named cost model evaluations for the cost command.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Tuple

from scale_aware_sharding import cost_model
from scale_aware_sharding.cost_model import BandwidthRole, CostReport
from scale_aware_sharding.simulation import (
    TRANSFORMER_PRESETS,
    Strategy,
    total_params,
)
from scale_aware_sharding.topology import model_state_bytes, model_state_bytes_per_device
from scale_aware_sharding.utilities.exceptions import ConfigError
from scale_aware_sharding.utilities.units import Dimension, parse_quantity

from .config import ScenarioConfig


@dataclass(frozen=True)
class Formula:
    "A cost model operation callable from the command line."
    parameters: Dict[str, Dimension]
    evaluate: Callable[..., CostReport]
    defaults: Tuple[Tuple[str, object], ...] = ()


def _single(name, unit, function):
    def evaluate(**kwargs):
        return CostReport(name).add(name, function(**kwargs), unit, name)

    return evaluate


def _with_reduction(name, function):
    def evaluate(**kwargs):
        ratio = function(**kwargs)
        report = CostReport(name).add(name, ratio, "ratio", name)
        reduction = cost_model.cost_reduction(ratio)
        return report.add("reduction", reduction, "fraction", "reduction")

    return evaluate


def _tflops(T, preset=None, l=None, L=None, h=None, V=None):  # noqa: E741
    if preset is not None:
        if preset not in TRANSFORMER_PRESETS:
            raise ConfigError(
                "unknown preset, expected one of " + ", ".join(TRANSFORMER_PRESETS),
                field="preset",
            )

        shape = TRANSFORMER_PRESETS[preset]
        l, L = shape.sequence_length, shape.layers  # noqa: E741
        h, V = shape.hidden, shape.vocab

    missing = [k for k, v in {"l": l, "L": L, "h": h, "V": V}.items() if v is None]
    if missing:
        raise ConfigError("missing parameters " + ", ".join(missing) + " (or preset)")

    value = cost_model.tflops_estimate(T, l, L, h, V)
    return CostReport("tflops").add("tflops", value, "FLOP/s", "tflops")


def _traffic(p, k, M, hierarchical):
    value = cost_model.inter_node_traffic(p, k, M, hierarchical)
    return CostReport("traffic").add("traffic", value, "bytes", "traffic")


def _latency(p, alpha, algorithm):
    value = cost_model.collective_latency(p, alpha, algorithm)
    return CostReport("latency").add("latency", value, "seconds", "latency")


def _effective_bandwidth(message_bytes, group_scale):
    value = cost_model.effective_bandwidth(
        message_bytes, group_scale, cost_model.default_bandwidth_profile()
    )
    return CostReport("B_eff").add("B_eff", value, "bytes/s", "B_eff")


def _memory(params, p, bytes_per_param_states):
    states = model_state_bytes(params, bytes_per_param_states)
    report = CostReport("memory").add("model_state_bytes", states, "bytes", "memory")
    per_device = model_state_bytes_per_device(states, p)
    return report.add("model_state_bytes_per_device", per_device, "bytes", "memory")


_COUNT = Dimension.COUNT
_BYTES = Dimension.BYTES
_BANDWIDTH = Dimension.BANDWIDTH

FORMULAS: Dict[str, Formula] = {
    "allgather_flat": Formula(
        {"n": _COUNT, "M": _BYTES, "B_all": _BANDWIDTH},
        _single("C_all", "seconds", cost_model.allgather_cost_flat),
    ),
    "allgather_mics": Formula(
        {"p": _COUNT, "M": _BYTES, "B_part": _BANDWIDTH},
        _single("C_MiCS", "seconds", cost_model.allgather_cost_mics),
    ),
    "allgather_ratio": Formula(
        {"n": _COUNT, "p": _COUNT, "B_all": _BANDWIDTH, "B_part": _BANDWIDTH},
        _with_reduction("allgather_ratio", cost_model.allgather_cost_ratio),
    ),
    "inter_node_traffic": Formula(
        {"p": _COUNT, "k": _COUNT, "M": _BYTES, "hierarchical": None},
        _traffic,
        (("hierarchical", True),),
    ),
    "traffic_reduction": Formula(
        {"p": _COUNT, "k": _COUNT},
        _with_reduction("traffic_ratio", cost_model.traffic_reduction_ratio),
    ),
    "two_hop": Formula(
        {
            "s": _COUNT,
            "M": _BYTES,
            "n": _COUNT,
            "p": _COUNT,
            "B_part": _BANDWIDTH,
            "B_repl": _BANDWIDTH,
        },
        _single("C_2hop", "seconds", cost_model.two_hop_cost),
    ),
    "alt_sync": Formula(
        {"s": _COUNT, "M": _BYTES, "n": _COUNT, "B_all": _BANDWIDTH},
        _single("C_alt", "seconds", cost_model.alt_sync_cost),
    ),
    "two_hop_ratio_bound": Formula(
        {"s": _COUNT, "B_all": _BANDWIDTH, "B_part": _BANDWIDTH, "B_repl": _BANDWIDTH},
        _with_reduction("bound_2hop", cost_model.two_hop_ratio_bound),
    ),
    "zero3_volume": Formula(
        {"n": _COUNT, "M": _BYTES},
        _single("zero3_volume", "bytes", cost_model.zero3_iteration_volume),
    ),
    "latency": Formula(
        {"p": _COUNT, "alpha": Dimension.TIME, "algorithm": None},
        _latency,
        (("algorithm", "tree"),),
    ),
    "tflops": Formula(
        {
            "T": _COUNT,
            "preset": None,
            "l": _COUNT,
            "L": _COUNT,
            "h": _COUNT,
            "V": _COUNT,
        },
        _tflops,
    ),
    "effective_bandwidth": Formula(
        {"message_bytes": _BYTES, "group_scale": _COUNT},
        _effective_bandwidth,
    ),
    "memory": Formula(
        {"params": _COUNT, "p": _COUNT, "bytes_per_param_states": _COUNT},
        _memory,
        (("p", 1), ("bytes_per_param_states", 16)),
    ),
    "scaling_efficiency": Formula(
        {
            "base_throughput": _COUNT,
            "base_devices": _COUNT,
            "throughput": _COUNT,
            "devices": _COUNT,
        },
        _single("scaling", "fraction", cost_model.scaling_efficiency),
    ),
}
"""
Formulas by command line name. A parameter without a dimension is passed
through as text, except that true and false become booleans.
"""


def _parse_value(key, text, dimension):
    if dimension is None:
        return {"true": True, "false": False}.get(text.lower(), text)

    try:
        value = parse_quantity(text, dimension)
    except ValueError as exc:
        raise ConfigError(str(exc), field=key) from None

    if isinstance(value, float) and value.is_integer() and dimension is _COUNT:
        return int(value)

    return value


def evaluate_formula(name: str, arguments: Mapping[str, str]) -> CostReport:
    """
    Evaluate a named formula from key=value text arguments.

    Raises:
    ConfigError for an unknown formula, unknown or missing parameters and
    unparsable values.
    """
    if name not in FORMULAS:
        raise ConfigError(
            "unknown formula, expected one of " + ", ".join(sorted(FORMULAS)),
            field="formula",
        )

    formula = FORMULAS[name]
    values = dict(formula.defaults)
    for key, text in arguments.items():
        if key not in formula.parameters:
            raise ConfigError(
                f"unknown parameter of {name}, expected one of "
                + ", ".join(formula.parameters),
                field=key,
            )

        values[key] = _parse_value(key, text, formula.parameters[key])

    if name != "tflops":
        missing = [k for k in formula.parameters if k not in values]
        if missing:
            raise ConfigError(f"{name} needs " + ", ".join(missing), field="formula")

    return formula.evaluate(**values)


def scenario_cost_report(config: ScenarioConfig) -> CostReport:
    """
    Closed-form costs of every strategy in a scenario.

    M is the size of the gathered parameters of the whole model.
    """
    cluster, profile = config.cluster, config.profile
    n, k = cluster.n, cluster.devices_per_node
    M = sum(layer.param_bytes for layer in config.layers)
    params = total_params(config.layers, config.options.param_dtype_bytes)
    states = model_state_bytes(params, config.options.bytes_per_param_states)
    report = CostReport(config.name)
    B_all = cost_model.group_bandwidth(profile, M, n, n > k)
    for cfg in config.strategies:
        p = cfg.partition_size(n)
        entries = CostReport()
        if cfg.strategy is Strategy.ZERO3:
            gather = cost_model.allgather_cost_flat(n, M, B_all)
            entries.add("gather", gather, "seconds", "C_all")
            volume = cost_model.zero3_iteration_volume(n, M)
            entries.add("zero3_volume", volume, "bytes", "zero3_volume")
        else:
            B_part = cost_model.group_bandwidth(profile, M, p, p > k)
            gather = cost_model.allgather_cost_mics(p, M, B_part)
            entries.add("gather", gather, "seconds", "C_MiCS")

        if p > k:
            traffic = cost_model.inter_node_traffic(p, k, M, cfg.hierarchical_gather)
        else:
            traffic = 0.0

        entries.add("traffic", traffic, "bytes", "traffic")
        if cfg.two_hop:
            B_part = cost_model.group_bandwidth(profile, M, p, p > k)
            B_repl = profile.resolve(BandwidthRole.REPLICATION, M / p, max(n // p, 1))
            sync = cost_model.two_hop_cost(cfg.s, M, n, p, B_part, B_repl)
            entries.add("sync", sync, "seconds", "C_2hop")
        elif cfg.strategy is Strategy.MICS:
            sync = cost_model.alt_sync_cost(cfg.s, M, n, B_all)
            entries.add("sync", sync, "seconds", "C_alt")
        else:
            sync = cfg.s * cost_model.allgather_cost_flat(n, M, B_all)
            entries.add("sync", sync, "seconds", "C_all")

        entries.add("memory", model_state_bytes_per_device(states, p), "bytes", "memory")
        report.extend(entries, cfg.name)

    return report
