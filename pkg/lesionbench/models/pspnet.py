"""
pspnet: randomly initialized residual backbone followed by a pyramid
pooling module. Each bin size pools the final feature map, projects it with
a 1x1 convolution and resizes it back; the branches are concatenated with
the backbone features, fused, and resized to the input resolution. There is
no auxiliary loss head.
"""

from lesionbench.models.blocks import GraphBuilder
from lesionbench.models.config import ModelConfig
from lesionbench.models.encoder_decoder import stride_divisor
from lesionbench.models.graph import LayerGraph
from lesionbench.models.registry import register_architecture


def _residual_block(b: GraphBuilder, x: str, width: int, scope: str, stride: int) -> str:
    y = b.conv_norm_relu(x, width, scope, stride=stride)
    y = b.norm(b.conv(y, width, scope), scope)
    shortcut = x
    if stride != 1 or b.channels(x) != width:
        shortcut = b.norm(b.conv(x, width, scope, kernel=1, stride=stride), scope)
    return b.relu(b.add(shortcut, y, scope), scope)


@register_architecture("pspnet", dims=2, divisor=stride_divisor, aliases=("pspnet_2d",),
                       description="2D residual backbone with a pyramid pooling module")
def build_pspnet(config: ModelConfig) -> LayerGraph:
    b = GraphBuilder(config, dims=2)
    widths = config.stage_widths

    source = b.input()
    x = b.conv_norm_relu(source, widths[0], "backbone0")
    x = _residual_block(b, x, widths[0], "backbone0", stride=1)
    for i in range(1, config.depth):
        x = _residual_block(b, x, widths[i], f"backbone{i}", stride=2)

    features = x
    branch_width = max(1, widths[-1] // len(config.pyramid_bins))
    branches = [features]
    for bins in config.pyramid_bins:
        scope = f"ppm{bins}"
        pooled = b.adaptive_pool(features, bins, scope)
        # no normalization here: 1x1 bins hold a single value per channel
        projected = b.relu(b.conv(pooled, branch_width, scope, kernel=1), scope)
        branches.append(b.resize(projected, features, scope))

    x = b.concat(branches, "ppm")
    x = b.conv_norm_relu(x, widths[0], "fuse")
    x = b.resize(x, source, "fuse")
    return b.classifier(x)
