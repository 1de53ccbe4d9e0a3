"""
Segmentation architectures as declarative layer graphs.

Importing this package registers deconvnet, u_net, pspnet, v_net and
deepmedic with the architecture registry.
"""

from lesionbench.models import deepmedic, encoder_decoder, pspnet  # noqa: F401  (registration)
from lesionbench.models.config import (
    REFERENCE_PARAMETER_COUNTS,
    REFERENCE_PRESETS,
    ModelConfig,
    NormKind,
    format_parameter_count,
    model_label,
    reference_parameter_count,
)
from lesionbench.models.graph import LayerGraph, Node, NodeKind
from lesionbench.models.network import SegmentationNetwork, build_model, count_parameters, forward
from lesionbench.models.registry import architectures, register_architecture

__all__ = [
    "REFERENCE_PARAMETER_COUNTS",
    "REFERENCE_PRESETS",
    "LayerGraph",
    "ModelConfig",
    "Node",
    "NodeKind",
    "NormKind",
    "SegmentationNetwork",
    "architectures",
    "build_model",
    "count_parameters",
    "format_parameter_count",
    "forward",
    "model_label",
    "reference_parameter_count",
    "register_architecture",
]
