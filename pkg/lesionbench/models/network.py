"""
SegmentationNetwork: a torch module that executes a LayerGraph.

Parametric nodes (convolutions, batch norm, dropout) own a submodule stored
under the node name; every other node is evaluated functionally. The output
is the softmax over the class channel.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Dict, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from lesionbench.errors import ShapeContractError
from lesionbench.models.config import ModelConfig
from lesionbench.models.graph import LayerGraph, Node, NodeKind
from lesionbench.models.registry import architectures
from lesionbench.utils.logger import logger

CLASSIFIER_INIT_GAIN = 0.1

_CONV = {2: nn.Conv2d, 3: nn.Conv3d}
_CONV_TRANSPOSE = {2: nn.ConvTranspose2d, 3: nn.ConvTranspose3d}
_BATCHNORM = {2: nn.BatchNorm2d, 3: nn.BatchNorm3d}


def _make_module(node: Node, graph: LayerGraph) -> Optional[nn.Module]:
    dims = graph.dims
    in_channels = graph[node.inputs[0]].channels if node.inputs else 0
    p = node.params
    if node.kind == NodeKind.CONV:
        return _CONV[dims](in_channels, node.channels, p["kernel"], stride=p["stride"], padding=p["padding"])
    if node.kind == NodeKind.CONV_TRANSPOSE:
        return _CONV_TRANSPOSE[dims](in_channels, node.channels, p["kernel"], stride=p["stride"])
    if node.kind == NodeKind.BATCHNORM:
        return _BATCHNORM[dims](node.channels)
    if node.kind == NodeKind.DROPOUT:
        return nn.Dropout(p["rate"])
    return None


def _context_pad(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Zero-fill around x to factor times its extent; the odd voxel goes on the high side."""
    pads = []
    for size in reversed(x.shape[2:]):
        total = size * factor - size
        pads.extend([total // 2, total - total // 2])
    return F.pad(x, pads)


def _context_crop(low: torch.Tensor, like: torch.Tensor, factor: int) -> torch.Tensor:
    """Cut the region of the padded-and-pooled context matching `like`, on like's grid."""
    out = low
    for axis, size in enumerate(like.shape[2:], start=2):
        lo = (size * factor - size) // 2
        first = lo // factor
        last = -(-(lo + size) // factor)
        out = out.narrow(axis, first, last - first)
        out = out.repeat_interleave(factor, dim=axis)
        out = out.narrow(axis, lo - first * factor, size)
    return out


def _resize(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    mode = "bilinear" if x.dim() == 4 else "trilinear"
    return F.interpolate(x, size=like.shape[2:], mode=mode, align_corners=False)


def _adaptive_pool(x: torch.Tensor, bins: int) -> torch.Tensor:
    if x.dim() == 4:
        return F.adaptive_avg_pool2d(x, bins)
    return F.adaptive_avg_pool3d(x, bins)


def _avg_pool(x: torch.Tensor, factor: int) -> torch.Tensor:
    if x.dim() == 4:
        return F.avg_pool2d(x, factor)
    return F.avg_pool3d(x, factor)


class SegmentationNetwork(nn.Module):
    """Executable network for a ModelConfig and its LayerGraph."""

    def __init__(self, config: ModelConfig, graph: LayerGraph, divisor: int = 1):
        super().__init__()
        self.config = config
        self.graph = graph
        self.divisor = divisor
        self.layers = nn.ModuleDict()
        for node in graph.nodes:
            module = _make_module(node, graph)
            if module is not None:
                self.layers[node.name] = module
        self.reset_parameters()

    @property
    def dims(self) -> int:
        return self.graph.dims

    def reset_parameters(self) -> None:
        """He fan-in initialization for convolutions, zero biases.

        The classifier weights are scaled down so that the untrained network
        starts close to uniform class probabilities.
        """
        for node in self.graph.nodes:
            if node.kind not in (NodeKind.CONV, NodeKind.CONV_TRANSPOSE):
                continue
            module = self.layers[node.name]
            if node.params.get("classifier"):
                fan_in = module.weight[0].numel()
                nn.init.normal_(module.weight, std=CLASSIFIER_INIT_GAIN / math.sqrt(fan_in))
            else:
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
            nn.init.zeros_(module.bias)

    def check_input(self, x: torch.Tensor) -> None:
        expected = self.dims + 2
        if x.dim() != expected:
            raise ShapeContractError(
                f"{self.config.arch} expects (N, C, {'D, ' if self.dims == 3 else ''}H, W) input, "
                f"got shape {tuple(x.shape)}"
            )
        if x.shape[1] != self.config.in_channels:
            raise ShapeContractError(f"{self.config.arch} expects {self.config.in_channels} input channels, "
                                     f"got {x.shape[1]}")
        spatial = tuple(x.shape[2:])
        if any(s % self.divisor for s in spatial):
            raise ShapeContractError(
                f"{self.config.arch} with depth {self.config.depth} needs spatial sizes divisible by "
                f"{self.divisor}, got {spatial}"
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        values: Dict[str, torch.Tensor] = {}
        for node in self.graph.nodes:
            values[node.name] = self._run(node, [values[name] for name in node.inputs], x)
        return values[self.graph.output_node.name]

    def _run(self, node: Node, ins, source: torch.Tensor) -> torch.Tensor:
        kind = node.kind
        if kind == NodeKind.INPUT:
            return source
        if node.name in self.layers:
            return self.layers[node.name](ins[0])
        if kind == NodeKind.RELU:
            return F.relu(ins[0])
        if kind == NodeKind.ADD:
            return ins[0] + ins[1]
        if kind == NodeKind.CONCAT:
            return torch.cat(ins, dim=1)
        if kind == NodeKind.ADAPTIVE_POOL:
            return _adaptive_pool(ins[0], node.params["bins"])
        if kind == NodeKind.AVG_POOL:
            return _avg_pool(ins[0], node.params["factor"])
        if kind == NodeKind.RESIZE:
            return _resize(ins[0], ins[1])
        if kind == NodeKind.CONTEXT_PAD:
            return _context_pad(ins[0], node.params["factor"])
        if kind == NodeKind.CONTEXT_CROP:
            return _context_crop(ins[0], ins[1], node.params["factor"])
        if kind == NodeKind.SOFTMAX:
            return torch.softmax(ins[0], dim=1)
        raise ShapeContractError(f"Node '{node.name}' of kind {kind.value} has no executor")


def build_model(config: ModelConfig, seed: Optional[int] = None) -> SegmentationNetwork:
    """Build the layer graph of config.arch and initialize its parameters.

    Args:
        config: Model configuration
        seed: Optional seed making the initialization reproducible without
            touching the global torch generator

    Raises:
        UnknownArchitectureError: config.arch is not registered
    """
    info = architectures.get(config.arch)
    config = replace(config, arch=info.name)
    graph = info.builder(config)
    if seed is None:
        model = SegmentationNetwork(config, graph, info.divisor(config))
    else:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = SegmentationNetwork(config, graph, info.divisor(config))
    logger.debug(f"Built {info.name}: {len(graph)} nodes, {count_parameters(model)} parameters")
    return model


def count_parameters(model: nn.Module) -> int:
    """Number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def forward(model: SegmentationNetwork, inputs: Union[np.ndarray, torch.Tensor]) -> Union[np.ndarray, torch.Tensor]:
    """Evaluation-mode class probabilities for a batched or unbatched input.

    Accepts (C, *spatial) or (N, C, *spatial) as a numpy array or tensor and
    returns probabilities with the same batching and array type. Dropout is
    disabled and batch norm uses its running statistics.
    """
    as_numpy = isinstance(inputs, np.ndarray)
    x = torch.from_numpy(np.ascontiguousarray(inputs)) if as_numpy else inputs
    unbatched = x.dim() == model.dims + 1
    if unbatched:
        x = x.unsqueeze(0)
    parameter = next(model.parameters())
    x = x.to(device=parameter.device, dtype=parameter.dtype)

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            probs = model(x)
    finally:
        model.train(was_training)

    if unbatched:
        probs = probs.squeeze(0)
    return probs.cpu().numpy() if as_numpy else probs
