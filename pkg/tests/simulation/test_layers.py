import pytest

from scale_aware_sharding.cost_model import tflops_estimate
from scale_aware_sharding.simulation import (
    TRANSFORMER_PRESETS,
    LayerSpec,
    derive_layers_from_transformer,
    preset_layers,
    total_params,
)
from scale_aware_sharding.utilities.exceptions import OutOfRangeError, ValidationError


@pytest.mark.dependency()
def test_unknown_preset():
    with pytest.raises(ValidationError):
        preset_layers("BERT 1T")


@pytest.mark.dependency()
def test_layer_without_parameters():
    with pytest.raises(OutOfRangeError):
        LayerSpec(0, 1.0, 1.0)


@pytest.mark.dependency()
def test_negative_block_count():
    with pytest.raises(OutOfRangeError):
        derive_layers_from_transformer(64, 256, -1, 100, 16)


@pytest.mark.dependency(
    depends=[
        "test_unknown_preset",
        "test_layer_without_parameters",
        "test_negative_block_count",
    ]
)
@pytest.mark.parametrize(
    "preset, params",
    [("BERT 10B", 10e9), ("BERT 15B", 15e9), ("BERT 20B", 20e9), ("BERT 50B", 50e9)],
)
def test_preset_parameter_counts(preset, params):
    assert total_params(preset_layers(preset)) == pytest.approx(params, rel=0.03)


def test_every_preset_builds():
    for name, shape in TRANSFORMER_PRESETS.items():
        layers = preset_layers(name)
        assert len(layers) == shape.layers + 1
        assert layers[0].name == "embedding"


def test_embedding_only_model():
    layers = derive_layers_from_transformer(64, 256, 0, 1000, 16)
    assert [layer.name for layer in layers] == ["embedding"]
    assert layers[0].param_bytes == 2 * 1000 * 64


def test_flops_match_closed_form():
    h, L, V, l = 256, 6, 5000, 128  # noqa: E741
    layers = derive_layers_from_transformer(h, 4 * h, L, V, l)
    flops = sum(layer.fwd_flops + layer.bwd_flops for layer in layers)
    assert flops == pytest.approx(tflops_estimate(1, l, L, h, V))


def test_preset_flops_match_closed_form():
    shape = TRANSFORMER_PRESETS["BERT 10B"]
    flops = sum(x.fwd_flops + x.bwd_flops for x in preset_layers("BERT 10B"))
    expected = tflops_estimate(
        1, shape.sequence_length, shape.layers, shape.hidden, shape.vocab
    )
    assert flops == pytest.approx(expected)


def test_checkpointing_recomputes_forward():
    with_recompute = derive_layers_from_transformer(64, 256, 1, 100, 16)[1]
    without = derive_layers_from_transformer(
        64, 256, 1, 100, 16, activation_checkpointing=False
    )[1]
    assert with_recompute.bwd_flops == 3 * with_recompute.fwd_flops
    assert without.bwd_flops == 2 * without.fwd_flops


def test_micro_batch_scales_flops_not_bytes():
    single = derive_layers_from_transformer(64, 256, 2, 100, 16)
    double = derive_layers_from_transformer(64, 256, 2, 100, 16, micro_batch=2)
    for a, b in zip(single, double):
        assert b.param_bytes == a.param_bytes
        assert b.fwd_flops == 2 * a.fwd_flops


def test_dtype_bytes():
    layers = derive_layers_from_transformer(64, 256, 2, 100, 16, dtype_bytes=4)
    assert total_params(layers, 4) == total_params(
        derive_layers_from_transformer(64, 256, 2, 100, 16)
    )
