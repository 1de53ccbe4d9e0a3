"""
Encoder-decoder architectures: deconvnet, u_net and v_net.

Resolution changes only through stride-2 convolutions (down) and stride-2
transpose convolutions (up); there are no pooling or interpolation layers.
u_net and v_net concatenate the same-resolution encoder features into the
decoder; v_net is the 3D variant with residual stages.
"""

from lesionbench.models.blocks import GraphBuilder
from lesionbench.models.config import ModelConfig
from lesionbench.models.graph import LayerGraph
from lesionbench.models.registry import register_architecture


def stride_divisor(config: ModelConfig) -> int:
    return 2 ** (config.depth - 1)


def _stage(b: GraphBuilder, x: str, width: int, scope: str, residual: bool) -> str:
    y = b.conv_norm_relu(x, width, scope)
    if not residual:
        return y
    y = b.norm(b.conv(y, width, scope), scope)
    return b.relu(b.add(x, y, scope), scope)


def build_encoder_decoder(config: ModelConfig, dims: int, skips: bool, residual: bool) -> LayerGraph:
    b = GraphBuilder(config, dims)
    widths = config.stage_widths

    x = b.conv_norm_relu(b.input(), widths[0], "enc0")
    x = _stage(b, x, widths[0], "enc0", residual)
    encoder = [x]
    for i in range(1, config.depth):
        x = b.conv_norm_relu(x, widths[i], f"enc{i}", stride=2)
        x = _stage(b, x, widths[i], f"enc{i}", residual)
        encoder.append(x)

    for i in reversed(range(config.depth - 1)):
        scope = f"dec{i}"
        x = b.relu(b.norm(b.conv_transpose(x, widths[i], scope), scope), scope)
        if skips:
            x = b.concat((encoder[i], x), scope, skip=True)
        x = b.conv_norm_relu(x, widths[i], scope)
        x = _stage(b, x, widths[i], scope, residual)
    return b.classifier(x)


@register_architecture("deconvnet", dims=2, divisor=stride_divisor,
                       description="2D encoder-decoder, strided convolutions instead of pooling")
def build_deconvnet(config: ModelConfig) -> LayerGraph:
    return build_encoder_decoder(config, dims=2, skips=False, residual=False)


@register_architecture("u_net", dims=2, divisor=stride_divisor, aliases=("unet",),
                       description="2D encoder-decoder with concatenating skip connections")
def build_u_net(config: ModelConfig) -> LayerGraph:
    return build_encoder_decoder(config, dims=2, skips=True, residual=False)


@register_architecture("v_net", dims=3, divisor=stride_divisor, aliases=("vnet",),
                       description="3D u_net topology with residual stages")
def build_v_net(config: ModelConfig) -> LayerGraph:
    return build_encoder_decoder(config, dims=3, skips=True, residual=True)
