"""
deepmedic: two parallel 3D convolutional pathways.

The high-resolution pathway sees the crop itself. The low-resolution pathway
sees the same crop zero-padded to low_res_factor times its extent and
average-pooled by low_res_factor, so it has the crop's voxel count. The padding
carries no image content: the pathway contributes a coarser, wider receptive
field over the crop, never voxels from outside it. Feed larger crops (or the
whole volume, as three_dim does) for the context to cover more anatomy.

Low-resolution features are cropped back to the region of the
high-resolution crop and upsampled onto its grid, then both pathways are
concatenated and fused by 1x1x1 convolutions before the classifier.
"""

from lesionbench.models.blocks import GraphBuilder
from lesionbench.models.config import ModelConfig
from lesionbench.models.graph import LayerGraph
from lesionbench.models.registry import register_architecture


def pathway_widths(config: ModelConfig):
    # widths grow by one base_width every two layers (30, 30, 60, 60, ... at base 30)
    return [config.base_width * (1 + i // 2) for i in range(config.depth)]


def _pathway(b: GraphBuilder, x: str, scope: str) -> str:
    for i, width in enumerate(pathway_widths(b.config)):
        y = b.conv_norm_relu(x, width, scope)
        if i % 2 == 1 and b.channels(x) == width:
            y = b.add(x, y, scope)
        x = y
    return x


@register_architecture("deepmedic", dims=3, description="3D dual-pathway network with a low-resolution context pathway")
def build_deepmedic(config: ModelConfig) -> LayerGraph:
    b = GraphBuilder(config, dims=3)
    factor = config.low_res_factor

    source = b.input()
    high = _pathway(b, source, "high_res")

    context = b.avg_pool(b.context_pad(source, factor, "low_res"), factor, "low_res")
    low = _pathway(b, context, "low_res")
    low = b.context_crop(low, source, factor, "low_res")

    fused_width = 2 * pathway_widths(config)[-1]
    x = b.concat((high, low), "fusion")
    x = b.conv_norm_relu(x, fused_width, "fusion", kernel=1)
    x = b.conv_norm_relu(x, fused_width, "fusion", kernel=1)
    return b.classifier(x)
