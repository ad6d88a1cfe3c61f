"""
Scenario files.

A scenario is a TOML file describing a cluster, a model, the effective
bandwidths, training settings, the strategies to compare and where to write
the report:

    [cluster]
    num_nodes = 8
    devices_per_node = 8
    intra_node_bandwidth = "128 GB/s"
    inter_node_bandwidth_per_node = "100 Gbps"

    [model]
    preset = "BERT 10B"

    [[strategies]]
    strategy = "zero3"

    [[strategies]]
    strategy = "mics"
    partition_size = 8

Everything is validated while loading and errors name the offending field
and the line it was found on.

For Copyright information, please see LICENCE.
"""

import os
import pathlib
import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import toml

from scale_aware_sharding.cost_model import (
    BandwidthEntry,
    BandwidthProfile,
    default_bandwidth_profile,
)
from scale_aware_sharding.simulation import (
    TRANSFORMER_PRESETS,
    LayerSpec,
    SimulationOptions,
    Strategy,
    StrategyConfig,
    derive_layers_from_transformer,
    preset_layers,
    total_params,
)
from scale_aware_sharding.topology import ClusterSpec, validate_partition_shape
from scale_aware_sharding.utilities.exceptions import ConfigError, ValidationError
from scale_aware_sharding.utilities.units import Dimension, parse_quantity

REPORT_DIR_ENV = "SCALE_AWARE_SHARDING_REPORT_DIR"
"Environment variable naming the directory reports are written to."

OUTPUT_FORMATS = ("table", "csv", "jsonl")

_EXTENSIONS = {"table": "txt", "csv": "csv", "jsonl": "jsonl"}

_HEADER = re.compile(r"^\s*\[(\[?)\s*([^\]\s]+)\s*\]\]?\s*(?:#.*)?$")

_REQUIRED = object()

_SECTIONS = {"name", "cluster", "model", "bandwidth", "training", "strategies", "output"}


class _Source:
    "The text of a scenario file, used to find the lines of fields."

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def locate(self, header: Optional[str], key: Optional[str], index: int = 0):
        current = None
        seen: Dict[str, int] = {}
        header_line = None
        key_pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=") if key else None
        for number, line in enumerate(self.lines, 1):
            match = _HEADER.match(line)
            if match:
                current = match.group(2)
                seen[current] = seen.get(current, -1) + 1
                if current == header and seen[current] == index:
                    header_line = number

                continue

            if (
                key_pattern is not None
                and current == header
                and seen.get(current, 0) == index
                and key_pattern.match(line)
            ):
                return number

        return header_line


class _Section:
    "One table of a scenario file."

    def __init__(self, source, path, data, header, index=0, aliases=None):
        self.source = source
        self.path = path
        self.data = data
        self.header = header
        self.index = index
        self.aliases = aliases or {}

    def error(self, message: str, key: Optional[str] = None) -> ConfigError:
        return ConfigError(
            message,
            field=f"{self.path}.{key}".lstrip(".") if key else self.path,
            line=self.source.locate(self.header, key, self.index),
        )

    def check_keys(self, allowed):
        for key in self.data:
            if key not in allowed:
                raise self.error(
                    "unknown field, expected one of " + ", ".join(sorted(allowed)), key
                )

    def quantity(self, key, dimension, default=_REQUIRED):
        if key not in self.data:
            if default is _REQUIRED:
                raise self.error("missing required field", key)

            return default

        try:
            return parse_quantity(self.data[key], dimension)
        except (TypeError, ValueError) as exc:
            raise self.error(str(exc), key) from None

    def count(self, key, default=_REQUIRED):
        value = self.quantity(key, Dimension.COUNT, default)
        if isinstance(value, float) and value.is_integer():
            return int(value)

        return value

    def flag(self, key, default):
        value = self.data.get(key, default)
        if not isinstance(value, bool):
            raise self.error("must be true or false", key)

        return value

    def text(self, key, default=_REQUIRED, choices=None):
        if key not in self.data:
            if default is _REQUIRED:
                raise self.error("missing required field", key)

            return default

        value = self.data[key]
        if not isinstance(value, str):
            raise self.error("must be a string", key)

        if choices is not None and value not in choices:
            raise self.error(
                f"{value!r} is not one of " + ", ".join(repr(c) for c in choices), key
            )

        return value

    def build(self, factory: Callable, **kwargs):
        "Call factory, reporting validation errors against this section."
        try:
            return factory(**kwargs)
        except (ValidationError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise

            attribute = str(exc).split(" ", 1)[0]
            key = self.aliases.get(attribute, attribute)
            raise self.error(str(exc), key if key in self.data else None) from None


@dataclass
class ScenarioConfig:
    "A fully resolved scenario."
    name: str
    cluster: ClusterSpec
    layers: List[LayerSpec]
    model: str
    "The preset name, or a description of a custom model."

    profile: BandwidthProfile
    options: SimulationOptions
    strategies: List[StrategyConfig]
    output_format: str = "table"
    output_path: Optional[str] = None
    path: Optional[pathlib.Path] = field(default=None, compare=False)

    def report_path(
        self, override: Optional[str] = None, output_format: Optional[str] = None
    ) -> Optional[pathlib.Path]:
        """
        Where the report goes; None means standard output.

        Relative paths and the default file name are placed in the directory
        named by SCALE_AWARE_SHARDING_REPORT_DIR when it is set.
        """
        path = override or self.output_path
        report_dir = os.environ.get(REPORT_DIR_ENV)
        if path is None:
            if not report_dir:
                return None

            extension = _EXTENSIONS[output_format or self.output_format]
            path = f"{self.name}.{extension}"

        path = pathlib.Path(path)
        if report_dir and not path.is_absolute():
            path = pathlib.Path(report_dir, path)

        return path

    def resolved(self) -> dict:
        "The scenario in base units, for display."
        profile = {
            "all": self.profile.B_all,
            "partition": self.profile.B_part,
            "replication": self.profile.B_repl,
            "table": [asdict(e) for e in self.profile.table],
        }
        options = asdict(self.options)
        options["latency_algorithm"] = self.options.latency_algorithm.value
        return {
            "name": self.name,
            "cluster": asdict(self.cluster),
            "model": {
                "description": self.model,
                "layers": len(self.layers),
                "parameters": total_params(self.layers, self.options.param_dtype_bytes),
            },
            "bandwidth": {k: v for k, v in profile.items() if v is not None},
            "training": options,
            "strategies": [
                {
                    "name": s.name,
                    "strategy": s.strategy.value,
                    "partition_size": s.partition_size(self.cluster.n),
                    "hierarchical_gather": s.hierarchical_gather,
                    "two_hop": s.two_hop,
                    "micro_steps": s.s,
                    "prefetch_depth": s.prefetch_depth,
                }
                for s in self.strategies
            ],
            "output": {"format": self.output_format, "path": self.output_path},
        }


_CLUSTER_KEYS = {
    "num_nodes": Dimension.COUNT,
    "devices_per_node": Dimension.COUNT,
    "intra_node_bandwidth": Dimension.BANDWIDTH,
    "inter_node_bandwidth_per_node": Dimension.BANDWIDTH,
    "alpha_intra": Dimension.TIME,
    "alpha_inter": Dimension.TIME,
    "device_memory": Dimension.BYTES,
    "device_peak_flops": Dimension.FLOPS,
}

_MODEL_KEYS = {
    "preset",
    "hidden",
    "intermediate",
    "layers",
    "vocab",
    "sequence_length",
    "dtype_bytes",
}

_TRAINING_KEYS = {
    "micro_steps",
    "micro_batch",
    "compute_efficiency",
    "include_latency",
    "latency_algorithm",
    "headroom_fraction",
    "bytes_per_param_states",
    "activation_checkpointing",
}

_STRATEGY_KEYS = {
    "name",
    "strategy",
    "partition_size",
    "hierarchical_gather",
    "two_hop",
    "micro_steps",
    "prefetch_depth",
}


def _table(source, data, key, required=True) -> Optional[_Section]:
    value = data.get(key)
    if value is None:
        if required:
            raise ConfigError("missing required section", field=key)

        return None

    if not isinstance(value, dict):
        raise ConfigError("must be a table", field=key, line=source.locate(None, key))

    return _Section(source, key, value, key)


def _array(source, parent: _Section, key, header):
    value = parent.data.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
        raise parent.error("must be an array of tables", key)

    return [
        _Section(source, f"{header}[{i}]", entry, header, i)
        for i, entry in enumerate(value)
    ]


def _load_cluster(section: _Section) -> ClusterSpec:
    section.check_keys(_CLUSTER_KEYS)
    values = {}
    for key, dimension in _CLUSTER_KEYS.items():
        if dimension is Dimension.COUNT:
            value = section.count(key)
        else:
            value = section.quantity(key, dimension, None)

        if value is not None:
            values[key] = value

    return section.build(ClusterSpec, **values)


def _load_model(source, section: _Section, training: Optional[_Section]):
    section.check_keys(_MODEL_KEYS)
    dtype_bytes = section.count("dtype_bytes", 2)
    micro_batch = training.count("micro_batch", 1) if training else 1
    checkpointing = training.flag("activation_checkpointing", True) if training else True
    layers_value = section.data.get("layers")
    if isinstance(layers_value, list):
        if "preset" in section.data or "hidden" in section.data:
            raise section.error("give either a layer list or model dimensions", "layers")

        layers = []
        for entry in _array(source, section, "layers", "model.layers"):
            entry.check_keys({"name", "param_bytes", "fwd_flops", "bwd_flops"})
            layers.append(
                entry.build(
                    LayerSpec,
                    param_bytes=entry.quantity("param_bytes", Dimension.BYTES),
                    fwd_flops=entry.quantity("fwd_flops", Dimension.COUNT, 0),
                    bwd_flops=entry.quantity("bwd_flops", Dimension.COUNT, 0),
                    name=entry.text("name", f"layer_{len(layers)}"),
                )
            )

        if not layers:
            raise section.error("a model needs at least one layer", "layers")

        return layers, f"{len(layers)} custom layers", dtype_bytes

    if "preset" in section.data:
        name = section.text("preset", choices=tuple(TRANSFORMER_PRESETS))
        layers = section.build(
            preset_layers,
            name=name,
            dtype_bytes=dtype_bytes,
            micro_batch=micro_batch,
            activation_checkpointing=checkpointing,
        )
        return layers, name, dtype_bytes

    dims = {
        "h": section.count("hidden"),
        "inter": section.count("intermediate"),
        "L": section.count("layers"),
        "V": section.count("vocab"),
        "l": section.count("sequence_length", 512),
    }
    section.aliases.update(
        {
            "h": "hidden",
            "inter": "intermediate",
            "L": "layers",
            "V": "vocab",
            "l": "sequence_length",
        }
    )
    layers = section.build(
        derive_layers_from_transformer,
        dtype_bytes=dtype_bytes,
        micro_batch=micro_batch,
        activation_checkpointing=checkpointing,
        **dims,
    )
    description = (
        f"transformer h={dims['h']} inter={dims['inter']} L={dims['L']} "
        f"V={dims['V']} l={dims['l']}"
    )
    return layers, description, dtype_bytes


def _load_profile(source, section: Optional[_Section]) -> BandwidthProfile:
    if section is None:
        return default_bandwidth_profile()

    section.check_keys({"all", "partition", "replication", "table"})
    entries = []
    for entry in _array(source, section, "table", "bandwidth.table"):
        entry.check_keys({"message_bytes", "group_scale", "bandwidth"})
        entries.append(
            entry.build(
                BandwidthEntry,
                message_bytes=entry.quantity("message_bytes", Dimension.BYTES),
                group_scale=entry.count("group_scale"),
                bandwidth=entry.quantity("bandwidth", Dimension.BANDWIDTH),
            )
        )

    scalars = {
        "B_all": section.quantity("all", Dimension.BANDWIDTH, None),
        "B_part": section.quantity("partition", Dimension.BANDWIDTH, None),
        "B_repl": section.quantity("replication", Dimension.BANDWIDTH, None),
    }
    if not entries and None in scalars.values():
        keys = ("all", "partition", "replication")
        missing = [k for k, v in zip(keys, scalars.values()) if v is None]
        raise section.error(
            "without a table every bandwidth must be given, missing "
            + ", ".join(missing)
        )

    section.aliases.update(
        {"B_all": "all", "B_part": "partition", "B_repl": "replication"}
    )
    return section.build(BandwidthProfile, table=tuple(entries), **scalars)


def _load_options(section: Optional[_Section], dtype_bytes) -> SimulationOptions:
    if section is None:
        return SimulationOptions(param_dtype_bytes=dtype_bytes)

    section.check_keys(_TRAINING_KEYS)
    values = {
        "compute_efficiency": section.quantity(
            "compute_efficiency", Dimension.COUNT, None
        ),
        "include_latency": section.flag("include_latency", True),
        "latency_algorithm": section.text(
            "latency_algorithm", "tree", choices=("tree", "ring")
        ),
        "headroom_fraction": section.quantity("headroom_fraction", Dimension.COUNT, None),
        "bytes_per_param_states": section.count("bytes_per_param_states", None),
        "micro_batch": section.count("micro_batch", None),
    }
    values = {k: v for k, v in values.items() if v is not None}
    return section.build(SimulationOptions, param_dtype_bytes=dtype_bytes, **values)


def _load_strategy(section: _Section, cluster, micro_steps) -> StrategyConfig:
    section.check_keys(_STRATEGY_KEYS)
    section.aliases.update({"p": "partition_size", "s": "micro_steps"})
    strategy = section.text("strategy", choices=tuple(s.value for s in Strategy))
    cfg = section.build(
        StrategyConfig,
        strategy=Strategy(strategy),
        p=section.count("partition_size", None),
        hierarchical_gather=section.flag("hierarchical_gather", False),
        two_hop=section.flag("two_hop", False),
        s=section.count("micro_steps", micro_steps),
        prefetch_depth=section.count("prefetch_depth", 1),
        name=section.text("name", ""),
    )
    try:
        p = cfg.partition_size(cluster.n)
        if cfg.strategy is Strategy.MICS:
            validate_partition_shape(cluster, p)
    except ValidationError as exc:
        raise section.error(str(exc), "partition_size") from None

    return cfg


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    """
    Parse and validate the text of a scenario file.

    Args:
        text: The TOML text.
        name: The scenario name used when the file does not set one.

    Returns:
    The resolved scenario. Every ValidationError raised while resolving is a
    ConfigError naming the field and its line.
    """
    source = _Source(text)
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(
            getattr(exc, "msg", str(exc)), line=getattr(exc, "lineno", None)
        ) from None

    for key in data:
        if key not in _SECTIONS:
            raise ConfigError("unknown section", field=key, line=source.locate(None, key))

    cluster = _load_cluster(_table(source, data, "cluster"))
    training = _table(source, data, "training", required=False)
    layers, model, dtype_bytes = _load_model(
        source, _table(source, data, "model"), training
    )
    profile = _load_profile(source, _table(source, data, "bandwidth", required=False))
    options = _load_options(training, dtype_bytes)
    micro_steps = training.count("micro_steps", 1) if training else 1

    if not isinstance(data.get("strategies"), list) or not data["strategies"]:
        raise ConfigError("at least one [[strategies]] entry is required", "strategies")

    root = _Section(source, "", data, None)
    strategies = [
        _load_strategy(section, cluster, micro_steps)
        for section in _array(source, root, "strategies", "strategies")
    ]

    output = _table(source, data, "output", required=False)
    output_format, output_path = "table", None
    if output is not None:
        output.check_keys({"format", "path"})
        output_format = output.text("format", "table", choices=OUTPUT_FORMATS)
        output_path = output.text("path", None)

    scenario_name = data.get("name", name)
    if not isinstance(scenario_name, str):
        raise ConfigError(
            "must be a string", field="name", line=source.locate(None, "name")
        )

    return ScenarioConfig(
        name=scenario_name,
        cluster=cluster,
        layers=layers,
        model=model,
        profile=profile,
        options=options,
        strategies=strategies,
        output_format=output_format,
        output_path=output_path,
    )


def load_scenario(path) -> ScenarioConfig:
    "Read and validate a scenario file."
    path = pathlib.Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(
            f"cannot read scenario: {exc.strerror}", field=str(path)
        ) from None

    config = parse_scenario(text, path.stem)
    config.path = path
    return config
