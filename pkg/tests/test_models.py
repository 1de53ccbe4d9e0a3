import numpy as np
import pytest
import torch
from torch import nn

from lesionbench.errors import ModelConfigError, ShapeContractError, UnknownArchitectureError
from lesionbench.losses import DiceVariant, LossConfig, LossKind, compute_loss
from lesionbench.models import (
    REFERENCE_PRESETS,
    LayerGraph,
    ModelConfig,
    Node,
    NodeKind,
    architectures,
    build_model,
    count_parameters,
    format_parameter_count,
    forward,
    model_label,
    reference_parameter_count,
)
from lesionbench.models.graph import RESAMPLING_KINDS
from lesionbench.models.network import _context_crop, _context_pad
from lesionbench.models.registry import ArchitectureRegistry

TINY_INPUTS = {
    "deconvnet": (1, 32, 32),
    "u_net": (1, 32, 32),
    "pspnet": (1, 32, 32),
    "v_net": (1, 16, 16, 16),
    "deepmedic": (1, 12, 12, 12),
}


def _tiny(arch, **overrides):
    fields = {"arch": arch, "base_width": 2, "depth": 3}
    fields.update(overrides)
    return ModelConfig(**fields)


def test_registry_holds_five_architectures():
    assert sorted(architectures.names()) == ["deconvnet", "deepmedic", "pspnet", "u_net", "v_net"]
    assert architectures.resolve("unet") == "u_net"
    assert architectures.get("v_net").dims == 3
    with pytest.raises(UnknownArchitectureError):
        architectures.resolve("fcn")


def test_fresh_registry_resolves_names_and_aliases_case_insensitively():
    registry = ArchitectureRegistry()
    registry.register("toy", dims=2, builder=lambda config: None, aliases=("toy_net",))
    assert registry.resolve(" TOY ") == "toy"
    assert registry.resolve("Toy_Net") == "toy"
    assert registry.get("toy").divisor(None) == 1
    assert registry.names() == ["toy"]
    with pytest.raises(UnknownArchitectureError, match="available: toy"):
        registry.resolve("v_net")


@pytest.mark.parametrize("arch", sorted(TINY_INPUTS))
def test_forward_preserves_shape_and_normalizes(arch):
    model = build_model(_tiny(arch), seed=0)
    x = np.random.default_rng(0).normal(size=TINY_INPUTS[arch]).astype(np.float32)
    probs = forward(model, x)
    assert probs.shape == (2, *x.shape[1:])
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-5)


@pytest.mark.parametrize("arch", sorted(TINY_INPUTS))
def test_eval_forward_is_deterministic(arch):
    model = build_model(_tiny(arch, norm="dropout", dropout_rate=0.5), seed=1)
    x = torch.randn(2, *TINY_INPUTS[arch])
    assert torch.equal(forward(model, x), forward(model, x))


@pytest.mark.parametrize("arch", sorted(TINY_INPUTS))
def test_graph_shapes_flow_to_the_input_resolution(arch):
    model = build_model(_tiny(arch))
    spatial = TINY_INPUTS[arch][1:]
    shapes = model.graph.infer_shapes(spatial)
    assert shapes[model.graph.output_node.name] == spatial


def test_deconvnet_has_no_pooling_or_upsampling():
    graph = build_model(_tiny("deconvnet")).graph
    assert all(graph.count(kind) == 0 for kind in RESAMPLING_KINDS)
    assert graph.count(NodeKind.CONV_TRANSPOSE) == 2
    assert not graph.skip_connections()


def test_u_net_skip_connections_per_stage():
    graph = build_model(_tiny("u_net", depth=4)).graph
    assert len(graph.skip_connections()) == 3
    assert all(graph.count(kind) == 0 for kind in RESAMPLING_KINDS)


def test_v_net_dropout_replaces_batchnorm():
    config = _tiny("v_net", norm="dropout", dropout_rate=0.1)
    graph = build_model(config).graph
    assert graph.dims == 3
    assert graph.count(NodeKind.DROPOUT) > 0
    assert graph.count(NodeKind.BATCHNORM) == 0
    assert model_label(config) == "v_net_dropout0.1"
    plain = build_model(_tiny("v_net")).graph
    assert plain.count(NodeKind.DROPOUT) == 0
    assert plain.count(NodeKind.BATCHNORM) > 0


def test_pspnet_pyramid_pooling_without_auxiliary_head():
    graph = build_model(_tiny("pspnet", pyramid_bins=(1, 2, 4))).graph
    assert graph.count(NodeKind.ADAPTIVE_POOL) == 3
    assert sum(1 for node in graph.nodes if node.kind == NodeKind.SOFTMAX) == 1
    assert model_label(_tiny("pspnet")) == "pspnet_2d"


def test_deepmedic_has_two_pathways_fused_before_classifier():
    graph = build_model(_tiny("deepmedic")).graph
    scopes = graph.scopes()
    assert "high_res" in scopes and "low_res" in scopes
    assert scopes.index("fusion") > scopes.index("low_res")
    assert graph.count(NodeKind.AVG_POOL) == 1
    fusion = next(node for node in graph.nodes if node.kind == NodeKind.CONCAT)
    assert {graph[name].scope for name in fusion.inputs} == {"high_res", "low_res"}


def test_deepmedic_accepts_any_crop_size():
    model = build_model(_tiny("deepmedic", low_res_factor=3), seed=0)
    probs = forward(model, torch.randn(1, 1, 7, 10, 11))
    assert probs.shape == (1, 2, 7, 10, 11)


def test_deepmedic_context_is_zero_padding_around_the_crop():
    x = torch.ones(1, 1, 4, 5, 6)
    padded = _context_pad(x, 3)
    assert padded.shape == (1, 1, 12, 15, 18)
    assert padded.sum().item() == x.numel()
    assert torch.equal(padded[..., 4:8, 5:10, 6:12], x)
    cropped = _context_crop(torch.nn.functional.avg_pool3d(padded, 3), x, 3)
    assert cropped.shape == x.shape


def test_indivisible_input_is_rejected():
    model = build_model(_tiny("v_net"))
    with pytest.raises(ShapeContractError):
        forward(model, np.zeros((1, 18, 16, 16), dtype=np.float32))
    with pytest.raises(ShapeContractError):
        forward(model, np.zeros((2, 16, 16, 16), dtype=np.float32))


def test_model_config_validation():
    with pytest.raises(ModelConfigError):
        ModelConfig(depth=1)
    with pytest.raises(ModelConfigError):
        ModelConfig(dropout_rate=1.0)
    with pytest.raises(ModelConfigError):
        ModelConfig(norm="dropout")
    with pytest.raises(ModelConfigError):
        ModelConfig(norm="groupnorm")


def test_layer_graph_rejects_forward_references_and_duplicates():
    graph = LayerGraph(2)
    graph.add(Node("in", NodeKind.INPUT, (), 1))
    with pytest.raises(ModelConfigError):
        graph.add(Node("relu", NodeKind.RELU, ("later",), 1))
    with pytest.raises(ModelConfigError):
        graph.add(Node("in", NodeKind.INPUT, (), 1))


def test_count_parameters_single_conv():
    assert count_parameters(nn.Conv3d(1, 2, 3)) == 56


def test_doubling_width_roughly_quadruples_parameters():
    small = count_parameters(build_model(ModelConfig(arch="v_net", base_width=8, depth=3)))
    large = count_parameters(build_model(ModelConfig(arch="v_net", base_width=16, depth=3)))
    assert 3.5 < large / small < 4.1


def test_parameter_count_is_deterministic_and_formatted():
    config = _tiny("u_net")
    assert count_parameters(build_model(config)) == count_parameters(build_model(config))
    assert format_parameter_count(8_232_274) == "8.23M"
    assert format_parameter_count(1_301_478) == "1.3M"


@pytest.mark.parametrize("label", sorted(REFERENCE_PRESETS))
def test_reference_scale_presets_build_with_reference_labels(label):
    config = ModelConfig.reference_scale(label)
    assert architectures.get(config.arch)
    if label in ("v_net", "v_net_dropout0.1", "deconvnet_big", "deepmedic", "u_net", "pspnet_2d"):
        assert model_label(config) == label
        assert reference_parameter_count(config) is not None


def test_seeded_build_is_reproducible():
    a = build_model(_tiny("v_net"), seed=5)
    b = build_model(_tiny("v_net"), seed=5)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


@pytest.mark.parametrize("arch", ["v_net", "u_net"])
def test_untrained_model_is_near_uniform(arch):
    model = build_model(_tiny(arch), seed=0)
    probs = forward(model, torch.randn(2, *TINY_INPUTS[arch]))
    assert 0.1 <= probs[:, 1].mean().item() <= 0.9


GRADIENT_LOSSES = [
    (LossKind.WEIGHTED_CE, DiceVariant.D2),
    (LossKind.SOFT_DICE, DiceVariant.D1),
    (LossKind.SOFT_DICE, DiceVariant.D2),
    (LossKind.CE_MINUS_LOG_DICE, DiceVariant.D1),
    (LossKind.CE_MINUS_LOG_DICE, DiceVariant.D2),
]


@pytest.mark.parametrize("kind, variant", GRADIENT_LOSSES)
@pytest.mark.parametrize("arch, spatial", [("v_net", (8, 8, 8)), ("u_net", (16, 16))])
def test_parameter_gradients_match_finite_differences(arch, spatial, kind, variant):
    config = ModelConfig(arch=arch, base_width=2, depth=2)
    model = build_model(config, seed=0).double().eval()
    assert count_parameters(model) <= 5000
    generator = torch.Generator().manual_seed(0)
    x = torch.randn(1, 1, *spatial, generator=generator, dtype=torch.float64)
    labels = (torch.rand(1, *spatial, generator=generator) > 0.8).long()
    loss_config = LossConfig(kind=kind, dice_variant=variant, class_ratios=(0.8, 0.2))

    def loss_value():
        return compute_loss(model(x), labels, loss_config)

    model.zero_grad()
    loss_value().backward()
    params = [p for p in model.parameters()]
    rng = np.random.default_rng(0)
    eps = 1e-6
    for _ in range(20):
        param = params[rng.integers(len(params))]
        index = tuple(int(rng.integers(s)) for s in param.shape)
        analytic = param.grad[index].item()
        with torch.no_grad():
            original = param[index].item()
            param[index] = original + eps
            plus = loss_value().item()
            param[index] = original - eps
            minus = loss_value().item()
            param[index] = original
        numeric = (plus - minus) / (2 * eps)
        assert abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric)) + 1e-7
