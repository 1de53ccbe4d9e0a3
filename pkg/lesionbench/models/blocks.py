"""
GraphBuilder: appends named nodes to a LayerGraph and keeps track of
channel counts, so architecture builders read like layer lists.
"""

from __future__ import annotations

from typing import Sequence

from lesionbench.models.config import ModelConfig, NormKind
from lesionbench.models.graph import LayerGraph, Node, NodeKind


class GraphBuilder:
    """Incremental LayerGraph construction for one ModelConfig."""

    def __init__(self, config: ModelConfig, dims: int):
        self.config = config
        self.graph = LayerGraph(dims=dims)
        self._counter = 0

    def _name(self, scope: str, kind: NodeKind) -> str:
        self._counter += 1
        prefix = f"{scope}_" if scope else ""
        return f"{prefix}{kind.value}{self._counter}"

    def _add(self, kind: NodeKind, inputs: Sequence[str], channels: int, scope: str, **params) -> str:
        node = Node(self._name(scope, kind), kind, tuple(inputs), channels, params, scope)
        return self.graph.add(node).name

    def channels(self, name: str) -> int:
        return self.graph[name].channels

    def input(self) -> str:
        return self._add(NodeKind.INPUT, (), self.config.in_channels, "input")

    def conv(self, x: str, out_channels: int, scope: str, kernel: int = 3, stride: int = 1,
             classifier: bool = False) -> str:
        return self._add(NodeKind.CONV, (x,), out_channels, scope, kernel=kernel, stride=stride,
                         padding=kernel // 2, classifier=classifier)

    def conv_transpose(self, x: str, out_channels: int, scope: str) -> str:
        return self._add(NodeKind.CONV_TRANSPOSE, (x,), out_channels, scope, kernel=2, stride=2)

    def norm(self, x: str, scope: str) -> str:
        norm = self.config.norm
        if norm == NormKind.BATCHNORM:
            return self._add(NodeKind.BATCHNORM, (x,), self.channels(x), scope)
        if norm == NormKind.DROPOUT:
            return self._add(NodeKind.DROPOUT, (x,), self.channels(x), scope, rate=self.config.dropout_rate)
        return x

    def relu(self, x: str, scope: str) -> str:
        return self._add(NodeKind.RELU, (x,), self.channels(x), scope)

    def conv_norm_relu(self, x: str, out_channels: int, scope: str, kernel: int = 3, stride: int = 1) -> str:
        return self.relu(self.norm(self.conv(x, out_channels, scope, kernel, stride), scope), scope)

    def add(self, a: str, b: str, scope: str) -> str:
        return self._add(NodeKind.ADD, (a, b), self.channels(a), scope)

    def concat(self, inputs: Sequence[str], scope: str, skip: bool = False) -> str:
        return self._add(NodeKind.CONCAT, inputs, sum(self.channels(i) for i in inputs), scope, skip=skip)

    def adaptive_pool(self, x: str, bins: int, scope: str) -> str:
        return self._add(NodeKind.ADAPTIVE_POOL, (x,), self.channels(x), scope, bins=bins)

    def avg_pool(self, x: str, factor: int, scope: str) -> str:
        return self._add(NodeKind.AVG_POOL, (x,), self.channels(x), scope, factor=factor)

    def resize(self, x: str, like: str, scope: str) -> str:
        return self._add(NodeKind.RESIZE, (x, like), self.channels(x), scope)

    def context_pad(self, x: str, factor: int, scope: str) -> str:
        return self._add(NodeKind.CONTEXT_PAD, (x,), self.channels(x), scope, factor=factor)

    def context_crop(self, x: str, like: str, factor: int, scope: str) -> str:
        return self._add(NodeKind.CONTEXT_CROP, (x, like), self.channels(x), scope, factor=factor)

    def classifier(self, x: str) -> LayerGraph:
        """1x1 convolution to num_classes followed by the channel softmax; returns the finished graph."""
        logits = self.conv(x, self.config.num_classes, "head", kernel=1, classifier=True)
        self._add(NodeKind.SOFTMAX, (logits,), self.config.num_classes, "head")
        self.graph.validate()
        return self.graph
