"""
Model configuration, scale presets and result-table labels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

from lesionbench.errors import ModelConfigError


class NormKind(str, Enum):
    BATCHNORM = "batchnorm"
    DROPOUT = "dropout"
    NONE = "none"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and scale of a segmentation network.

    Attributes:
        arch: Registered architecture name (deconvnet, u_net, pspnet, v_net, deepmedic)
        num_classes: Output classes, background included
        in_channels: Input sequences per voxel
        base_width: Channels at the first stage
        depth: Number of resolution stages (layers per pathway for deepmedic)
        dropout_rate: Rate of the dropout layers used when norm is "dropout"
        norm: Normalization after each convolution
        pyramid_bins: Pooling bin sizes of the pyramid pooling module (pspnet)
        low_res_factor: Downsampling factor of the context pathway (deepmedic)
        name: Optional label overriding the derived one in reports
    """
    arch: str = "v_net"
    num_classes: int = 2
    in_channels: int = 1
    base_width: int = 8
    depth: int = 4
    dropout_rate: float = 0.0
    norm: NormKind = NormKind.BATCHNORM
    pyramid_bins: Tuple[int, ...] = (1, 2, 3, 6)
    low_res_factor: int = 3
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "arch", str(self.arch).strip().lower())
        try:
            object.__setattr__(self, "norm", NormKind(self.norm))
        except ValueError:
            raise ModelConfigError(f"Unknown norm '{self.norm}' (allowed: batchnorm, dropout, none)") from None
        object.__setattr__(self, "pyramid_bins", tuple(int(b) for b in self.pyramid_bins))

        if self.depth < 2:
            raise ModelConfigError(f"depth must be >= 2, got {self.depth}")
        if self.base_width < 1:
            raise ModelConfigError(f"base_width must be >= 1, got {self.base_width}")
        if self.num_classes < 2:
            raise ModelConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ModelConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.norm == NormKind.DROPOUT and self.dropout_rate == 0.0:
            raise ModelConfigError("norm 'dropout' needs a dropout_rate > 0")
        if not self.pyramid_bins or min(self.pyramid_bins) < 1:
            raise ModelConfigError(f"pyramid_bins must be positive, got {self.pyramid_bins}")
        if self.low_res_factor < 1:
            raise ModelConfigError(f"low_res_factor must be >= 1, got {self.low_res_factor}")

    @property
    def stage_widths(self) -> Tuple[int, ...]:
        return tuple(self.base_width * 2 ** i for i in range(self.depth))

    def with_io(self, in_channels: int, num_classes: int) -> "ModelConfig":
        return replace(self, in_channels=in_channels, num_classes=num_classes)

    @classmethod
    def reference_scale(cls, label: str, **overrides) -> "ModelConfig":
        """Preset sized towards the published parameter count of a result-table row.

        Args:
            label: A key of REFERENCE_PRESETS, e.g. "v_net" or "v_net_dropout0.1"
            **overrides: Fields replacing the preset (in_channels, num_classes, ...)
        """
        key = str(label).strip().lower()
        if key not in REFERENCE_PRESETS:
            available = ", ".join(REFERENCE_PRESETS)
            raise ModelConfigError(f"No reference-scale preset '{label}' (available: {available})")
        fields = dict(REFERENCE_PRESETS[key])
        fields.update(overrides)
        return cls(**fields)


REFERENCE_PRESETS: Dict[str, Dict] = {
    "deconvnet": {"arch": "deconvnet", "base_width": 32, "depth": 5},
    "deconvnet_big": {"arch": "deconvnet", "base_width": 64, "depth": 5, "name": "deconvnet_big"},
    "u_net": {"arch": "u_net", "base_width": 64, "depth": 5},
    "pspnet": {"arch": "pspnet", "base_width": 64, "depth": 5},
    "pspnet_2d": {"arch": "pspnet", "base_width": 64, "depth": 5},
    "v_net": {"arch": "v_net", "base_width": 16, "depth": 5},
    "v_net_dropout0.1": {"arch": "v_net", "base_width": 16, "depth": 5, "norm": "dropout", "dropout_rate": 0.1},
    "deepmedic": {"arch": "deepmedic", "base_width": 30, "depth": 8},
}

# Parameter counts published next to the result tables, keyed by model label.
REFERENCE_PARAMETER_COUNTS: Dict[str, int] = {
    "deconvnet_big": 12_544_324,
    "u_net": 34_524_034,
    "pspnet_2d": 28_280_773,
    "v_net": 8_232_274,
    "v_net_dropout0.1": 8_232_274,
    "deepmedic": 1_301_478,
}

_ARCH_LABELS = {"pspnet": "pspnet_2d"}


def model_label(config: ModelConfig) -> str:
    """Result-table name of a configuration: v_net, v_net_dropout0.1, pspnet_2d, ..."""
    if config.name:
        return config.name
    label = _ARCH_LABELS.get(config.arch, config.arch)
    if config.norm == NormKind.DROPOUT:
        label += f"_dropout{config.dropout_rate:g}"
    return label


def reference_parameter_count(config: ModelConfig) -> Optional[int]:
    return REFERENCE_PARAMETER_COUNTS.get(model_label(config))


def format_parameter_count(count: Union[int, float]) -> str:
    """Compact count as printed in the inference-time table, e.g. 8.23M."""
    return f"{count / 1e6:.3g}M"
