from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

from lesionbench.errors import UnknownArchitectureError
from lesionbench.utils.logger import logger


@dataclass(frozen=True)
class ArchitectureInfo:
    """Registry entry for an architecture.

    Attributes:
        name: Canonical architecture name
        dims: Spatial dimensionality of inputs (2 or 3)
        builder: Callable(ModelConfig) -> LayerGraph
        divisor: Callable(ModelConfig) -> int; every input spatial size must be a multiple of it
    """
    name: str
    dims: int
    builder: Callable
    divisor: Callable
    description: str = ""


def _no_divisor(config) -> int:
    return 1


class ArchitectureRegistry:
    """Maps architecture names and aliases to their layer-graph builders.

    Lookups are case-insensitive. The builder modules fill the shared
    `architectures` instance through register_architecture when
    lesionbench.models is imported.
    """

    def __init__(self):
        self.architectures: Dict[str, ArchitectureInfo] = {}
        self.aliases: Dict[str, str] = {}

    def register(self, name: str, dims: int, builder: Callable, divisor: Callable = _no_divisor,
                 aliases: Sequence[str] = (), description: str = "") -> None:
        self.architectures[name] = ArchitectureInfo(name, dims, builder, divisor, description)
        for alias in aliases:
            self.aliases[alias] = name
        logger.debug(f"Registered architecture {name} ({dims}D)")

    def resolve(self, name: str) -> str:
        key = str(name).strip().lower()
        key = self.aliases.get(key, key)
        if key not in self.architectures:
            available = ", ".join(sorted(self.architectures))
            raise UnknownArchitectureError(f"Unknown architecture '{name}' (available: {available})")
        return key

    def get(self, name: str) -> ArchitectureInfo:
        return self.architectures[self.resolve(name)]

    def names(self) -> List[str]:
        return list(self.architectures)


architectures = ArchitectureRegistry()


def register_architecture(name: str, dims: int, divisor: Callable = _no_divisor,
                          aliases: Sequence[str] = (), description: str = ""):
    """Decorator registering a layer-graph builder under an architecture name."""
    def decorator(func):
        architectures.register(name, dims, func, divisor, aliases, description)
        return func
    return decorator
