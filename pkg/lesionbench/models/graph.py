"""
Declarative layer graphs.

A LayerGraph is an ordered list of nodes; each node names its operation,
its parameters and the earlier nodes it consumes, so the graph is acyclic by
construction. Channel counts are fixed when a node is added and spatial
shapes are derived from the input shape by infer_shapes(), without running
anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Sequence, Tuple

from lesionbench.errors import ModelConfigError, ShapeContractError


class NodeKind(str, Enum):
    INPUT = "input"
    CONV = "conv"
    CONV_TRANSPOSE = "conv_transpose"
    BATCHNORM = "batchnorm"
    DROPOUT = "dropout"
    RELU = "relu"
    ADD = "add"
    CONCAT = "concat"
    ADAPTIVE_POOL = "adaptive_pool"
    AVG_POOL = "avg_pool"
    RESIZE = "resize"
    CONTEXT_PAD = "context_pad"
    CONTEXT_CROP = "context_crop"
    SOFTMAX = "softmax"


POOLING_KINDS = frozenset({NodeKind.ADAPTIVE_POOL, NodeKind.AVG_POOL})
RESAMPLING_KINDS = frozenset({NodeKind.ADAPTIVE_POOL, NodeKind.AVG_POOL, NodeKind.RESIZE})

Spatial = Tuple[int, ...]


@dataclass(frozen=True)
class Node:
    """One operation of a layer graph.

    Attributes:
        name: Unique node name, also the parameter prefix in checkpoints
        kind: Operation kind
        inputs: Names of the nodes consumed, in order
        channels: Output channel count
        params: Operation parameters (kernel, stride, rate, bins, factor, ...)
        scope: Structural role, e.g. "encoder", "decoder", "high_res", "low_res", "ppm", "head"
    """
    name: str
    kind: NodeKind
    inputs: Tuple[str, ...]
    channels: int
    params: Dict[str, Any] = field(default_factory=dict)
    scope: str = ""


@dataclass
class LayerGraph:
    """Ordered, acyclic node list with a single softmax output node."""
    dims: int
    nodes: List[Node] = field(default_factory=list)

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ModelConfigError(f"Layer graphs are 2D or 3D, got {self.dims}D")
        self._index: Dict[str, Node] = {}
        for node in list(self.nodes):
            self._register(node)

    def _register(self, node: Node) -> None:
        if node.name in self._index:
            raise ModelConfigError(f"Duplicate node name '{node.name}'")
        missing = [name for name in node.inputs if name not in self._index]
        if missing:
            raise ModelConfigError(f"Node '{node.name}' consumes unknown or later nodes: {', '.join(missing)}")
        self._index[node.name] = node

    def add(self, node: Node) -> Node:
        self._register(node)
        self.nodes.append(node)
        return node

    def __getitem__(self, name: str) -> Node:
        return self._index[name]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def input_node(self) -> Node:
        return self.nodes[0]

    @property
    def output_node(self) -> Node:
        return self.nodes[-1]

    def count(self, kind: NodeKind) -> int:
        return sum(1 for node in self.nodes if node.kind == kind)

    def scopes(self) -> List[str]:
        seen: List[str] = []
        for node in self.nodes:
            if node.scope and node.scope not in seen:
                seen.append(node.scope)
        return seen

    def skip_connections(self) -> List[Node]:
        """Concat nodes forwarding encoder features into the decoder."""
        return [node for node in self.nodes if node.kind == NodeKind.CONCAT and node.params.get("skip")]

    def validate(self) -> None:
        if not self.nodes or self.input_node.kind != NodeKind.INPUT:
            raise ModelConfigError("A layer graph starts with its input node")
        if self.output_node.kind != NodeKind.SOFTMAX:
            raise ModelConfigError("A layer graph ends with a softmax output node")
        if sum(1 for node in self.nodes if node.kind == NodeKind.INPUT) != 1:
            raise ModelConfigError("A layer graph has exactly one input node")

    def infer_shapes(self, input_spatial: Sequence[int]) -> Dict[str, Spatial]:
        """Spatial output shape of every node for a given input spatial shape.

        Raises:
            ShapeContractError: the input does not flow through the graph consistently
        """
        input_spatial = tuple(int(s) for s in input_spatial)
        if len(input_spatial) != self.dims:
            raise ShapeContractError(f"Expected a {self.dims}D spatial shape, got {input_spatial}")
        shapes: Dict[str, Spatial] = {}
        for node in self.nodes:
            ins = [shapes[name] for name in node.inputs]
            shapes[node.name] = _node_shape(node, ins, input_spatial)
            if min(shapes[node.name]) < 1:
                raise ShapeContractError(
                    f"Input {input_spatial} collapses to {shapes[node.name]} at node '{node.name}'"
                )
        return shapes


def _node_shape(node: Node, ins: List[Spatial], input_spatial: Spatial) -> Spatial:
    kind, p = node.kind, node.params
    if kind == NodeKind.INPUT:
        return input_spatial
    if kind == NodeKind.CONV:
        k, s, pad = p["kernel"], p["stride"], p["padding"]
        return tuple((n + 2 * pad - k) // s + 1 for n in ins[0])
    if kind == NodeKind.CONV_TRANSPOSE:
        k, s = p["kernel"], p["stride"]
        return tuple((n - 1) * s + k for n in ins[0])
    if kind in (NodeKind.ADD, NodeKind.CONCAT):
        if len(set(ins)) != 1:
            raise ShapeContractError(
                f"Node '{node.name}' joins mismatched spatial shapes {ins}; "
                "the input size is not divisible by the network's total stride"
            )
        return ins[0]
    if kind == NodeKind.ADAPTIVE_POOL:
        return (p["bins"],) * len(ins[0])
    if kind == NodeKind.AVG_POOL:
        return tuple(n // p["factor"] for n in ins[0])
    if kind == NodeKind.CONTEXT_PAD:
        return tuple(n * p["factor"] for n in ins[0])
    if kind in (NodeKind.RESIZE, NodeKind.CONTEXT_CROP):
        return ins[1]
    return ins[0]
