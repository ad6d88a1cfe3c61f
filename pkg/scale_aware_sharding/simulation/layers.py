"""
Layer descriptions of transformer models.

For Copyright information, please see LICENCE.
"""

from dataclasses import dataclass
from typing import Dict, List

from scale_aware_sharding.utilities.exceptions import ValidationError
from scale_aware_sharding.utilities.validation import (
    validate_count,
    validate_non_negative,
    validate_positive,
)


@dataclass(frozen=True)
class LayerSpec:
    "Parameters and work of one layer for one micro-batch."
    param_bytes: int
    fwd_flops: float
    bwd_flops: float
    name: str = ""

    def __post_init__(self):
        validate_positive("param_bytes", self.param_bytes)
        validate_non_negative("fwd_flops", self.fwd_flops)
        validate_non_negative("bwd_flops", self.bwd_flops)


@dataclass(frozen=True)
class TransformerShape:
    "Dimensions of a transformer language model."
    hidden: int
    intermediate: int
    layers: int
    attention_heads: int
    vocab: int
    sequence_length: int = 512


TRANSFORMER_PRESETS: Dict[str, TransformerShape] = {
    "BERT 10B": TransformerShape(2560, 10240, 127, 40, 32008),
    "BERT 15B": TransformerShape(2560, 10240, 190, 40, 32008),
    "BERT 20B": TransformerShape(5120, 20480, 64, 40, 32008),
    "BERT 50B": TransformerShape(8192, 32768, 62, 40, 32008),
    "RoBERTa 20B": TransformerShape(5120, 20480, 62, 40, 50265),
    "GPT2 20B": TransformerShape(5120, 20480, 62, 40, 50265),
}
"Model structures used for evaluation, all with a sequence length of 512."


def transformer_layer_params(h: int, inter: int) -> int:
    "Attention and MLP weights plus biases and the two layer norms."
    return 4 * h * h + 2 * h * inter + 9 * h + inter


def derive_layers_from_transformer(
    h: int,
    inter: int,
    L: int,
    V: int,
    l: int,  # noqa: E741
    dtype_bytes: int = 2,
    micro_batch: int = 1,
    activation_checkpointing: bool = True,
) -> List[LayerSpec]:
    """
    Describe a transformer as an embedding layer followed by L blocks.

    Args:
        h: Hidden size.
        inter: Intermediate (MLP) size.
        L: Number of transformer blocks; 0 gives an embedding-only model.
        V: Vocabulary size.
        l: Sequence length.
        dtype_bytes: Bytes per parameter of the gathered weights.
        micro_batch: Sequences per micro-batch.
        activation_checkpointing: Count the recomputed forward pass in the
          backward FLOPs of the transformer blocks.

    Returns:
    The layers in forward order. The embedding weights are tied to the output
    projection, so the embedding layer carries the logit FLOPs. With inter =
    4h the summed FLOPs equal the closed-form `tflops_estimate` per sequence.
    """
    validate_count("h", h, 1)
    validate_count("inter", inter, 1)
    validate_count("L", L, 0)
    validate_count("V", V, 1)
    validate_count("l", l, 1)
    validate_count("dtype_bytes", dtype_bytes, 1)
    validate_count("micro_batch", micro_batch, 1)

    logit_flops = 2 * micro_batch * l * h * V
    layers = [
        LayerSpec(
            param_bytes=dtype_bytes * V * h,
            fwd_flops=logit_flops,
            bwd_flops=2 * logit_flops,
            name="embedding",
        )
    ]

    matmul_params = 4 * h * h + 2 * h * inter
    fwd_flops = micro_batch * (2 * l * matmul_params + 4 * l * l * h)
    bwd_flops = (3 if activation_checkpointing else 2) * fwd_flops
    block_bytes = dtype_bytes * transformer_layer_params(h, inter)
    layers.extend(
        LayerSpec(block_bytes, fwd_flops, bwd_flops, name=f"block_{i}")
        for i in range(L)
    )
    return layers


def preset_layers(
    name: str,
    dtype_bytes: int = 2,
    micro_batch: int = 1,
    activation_checkpointing: bool = True,
) -> List[LayerSpec]:
    "Layers of one of the `TRANSFORMER_PRESETS`."
    try:
        shape = TRANSFORMER_PRESETS[name]
    except KeyError:
        raise ValidationError(
            f"unknown model preset {name!r}, expected one of "
            + ", ".join(TRANSFORMER_PRESETS)
        ) from None

    return derive_layers_from_transformer(
        shape.hidden,
        shape.intermediate,
        shape.layers,
        shape.vocab,
        shape.sequence_length,
        dtype_bytes,
        micro_batch,
        activation_checkpointing,
    )


def total_params(layers: List[LayerSpec], dtype_bytes: int = 2) -> float:
    return sum(layer.param_bytes for layer in layers) / dtype_bytes
