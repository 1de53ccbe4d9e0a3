"""
Experiment configuration files.

An experiment is a YAML document validated by the pydantic models below.
Each block converts to the corresponding domain object (ModelConfig,
PatchSpec, LossConfig, AugmentConfig). Relative paths are resolved against
the directory of the YAML file.

Example:

    name: v_net_three_dim
    manifest: data/manifest.csv
    model: {arch: v_net, base_width: 4, depth: 3}
    sampler: {key: three_dim}
    loss: {kind: ce_minus_log_dice}
    epochs: 15
"""

from pathlib import Path
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lesionbench.augment import AugmentConfig
from lesionbench.data_model import PathLike
from lesionbench.errors import ExperimentConfigError, LesionBenchError
from lesionbench.losses import DiceVariant, LossConfig, LossKind, RatioScope
from lesionbench.models import REFERENCE_PRESETS, ModelConfig, architectures
from lesionbench.sampling import PatchSpec, samplers


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelBlock(_Block):
    arch: str = "v_net"
    preset: Optional[str] = None  # reference-scale preset label, e.g. "v_net_dropout0.1"
    base_width: int = 8
    depth: int = 4
    dropout_rate: float = 0.0
    norm: Literal["batchnorm", "dropout", "none"] = "batchnorm"
    pyramid_bins: List[int] = [1, 2, 3, 6]
    low_res_factor: int = 3
    name: Optional[str] = None

    @field_validator("arch")
    @classmethod
    def _known_arch(cls, value: str) -> str:
        try:
            return architectures.resolve(value)
        except LesionBenchError as e:
            raise ValueError(str(e)) from None

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value.strip().lower() not in REFERENCE_PRESETS:
            raise ValueError(f"unknown preset '{value}' (available: {', '.join(REFERENCE_PRESETS)})")
        return value

    @property
    def effective_arch(self) -> str:
        if self.preset:
            return REFERENCE_PRESETS[self.preset.strip().lower()]["arch"]
        return self.arch

    def to_model_config(self, in_channels: int, num_classes: int) -> ModelConfig:
        if self.preset:
            overrides = {k: getattr(self, k) for k in self.model_fields_set if k not in ("preset", "arch")}
            overrides.update(in_channels=in_channels, num_classes=num_classes)
            return ModelConfig.reference_scale(self.preset, **overrides)
        return ModelConfig(
            arch=self.arch,
            num_classes=num_classes,
            in_channels=in_channels,
            base_width=self.base_width,
            depth=self.depth,
            dropout_rate=self.dropout_rate,
            norm=self.norm,
            pyramid_bins=tuple(self.pyramid_bins),
            low_res_factor=self.low_res_factor,
            name=self.name,
        )


class SamplerBlock(_Block):
    key: str = "three_dim"
    patch_size: Tuple[int, int, int] = (64, 64, 64)
    patches_per_case: int = Field(4, ge=1)
    restrict_to_mask: bool = False

    @field_validator("key")
    @classmethod
    def _known_sampler(cls, value: str) -> str:
        try:
            samplers.resolve(value)
        except LesionBenchError as e:
            raise ValueError(str(e)) from None
        return value

    @property
    def canonical_key(self) -> str:
        return samplers.resolve(self.key)

    def to_patch_spec(self) -> PatchSpec:
        return PatchSpec(size=self.patch_size, restrict_to_mask=self.restrict_to_mask)


class LossBlock(_Block):
    kind: str = "ce_minus_log_dice"
    dice_variant: Literal["D1", "D2"] = "D2"
    smooth_eps: float = Field(1e-5, gt=0)
    ratio_scope: Literal["dataset", "volume"] = "dataset"

    @field_validator("kind")
    @classmethod
    def _known_loss(cls, value: str) -> str:
        try:
            LossKind.parse(value)
        except LesionBenchError as e:
            raise ValueError(str(e)) from None
        return value

    def to_loss_config(self) -> LossConfig:
        return LossConfig(
            kind=LossKind.parse(self.kind),
            dice_variant=DiceVariant(self.dice_variant),
            smooth_eps=self.smooth_eps,
            ratio_scope=RatioScope(self.ratio_scope),
        )


class AugmentBlock(_Block):
    enabled: bool = True
    max_shift_frac: float = Field(0.1, ge=0)
    max_rotate_deg: float = Field(10.0, ge=0)
    max_shear: float = Field(0.1, ge=0)
    zoom_range: Tuple[float, float] = (0.9, 1.1)
    brightness_frac: float = Field(0.1, ge=0)
    elastic_alpha: float = Field(720.0, ge=0)
    elastic_sigma: float = Field(24.0, ge=0)

    @field_validator("zoom_range")
    @classmethod
    def _ordered_zoom(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = value
        if not (0 < lo <= hi):
            raise ValueError(f"zoom_range must satisfy 0 < lo <= hi, got {list(value)}")
        return value

    def to_augment_config(self) -> AugmentConfig:
        return AugmentConfig(**self.model_dump())


class OptimizerBlock(_Block):
    name: Literal["adam", "sgd"] = "adam"
    learning_rate: float = Field(1e-4, gt=0)
    weight_decay: float = Field(0.0, ge=0)


class ExperimentConfig(_Block):
    """A complete training/evaluation experiment."""
    name: str = "experiment"
    manifest: Path
    model: ModelBlock = Field(default_factory=ModelBlock)
    sampler: SamplerBlock = Field(default_factory=SamplerBlock)
    loss: LossBlock = Field(default_factory=LossBlock)
    augment: AugmentBlock = Field(default_factory=AugmentBlock)
    optimizer: OptimizerBlock = Field(default_factory=OptimizerBlock)
    batch_size: int = Field(2, ge=1)
    epochs: int = Field(10, ge=1)
    seed: int = 0
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    num_classes: Optional[int] = Field(None, ge=2)
    output_dir: Path = Path("runs")

    @model_validator(mode="after")
    def _sampler_matches_model(self):
        model_dims = architectures.get(self.model.effective_arch).dims
        sampler_dims = samplers.info(self.sampler.key).dims
        if model_dims != sampler_dims:
            raise ValueError(
                f"sampler '{self.sampler.key}' feeds {sampler_dims}D inputs but {self.model.effective_arch} "
                f"is a {model_dims}D architecture"
            )
        return self

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.name

    def resolve_paths(self, base: Path) -> "ExperimentConfig":
        """Copy with manifest and output_dir made absolute relative to base."""
        updates = {}
        if not self.manifest.is_absolute():
            updates["manifest"] = (base / self.manifest).resolve()
        if not self.output_dir.is_absolute():
            updates["output_dir"] = (base / self.output_dir).resolve()
        return self.model_copy(update=updates)


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  {location}: {item['msg']}")
    return "\n".join(lines)


def parse_experiment(data: dict, base: Optional[Path] = None) -> ExperimentConfig:
    """Validate a mapping as an ExperimentConfig.

    Raises:
        ExperimentConfigError: listing every offending field
    """
    try:
        experiment = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ExperimentConfigError(f"Invalid experiment configuration:\n{_format_validation_error(e)}") from None
    return experiment.resolve_paths(base) if base is not None else experiment


def load_experiment(path: PathLike) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ExperimentConfigError(f"Experiment file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ExperimentConfigError(f"{path}: not valid YAML ({e})") from None
    if not isinstance(data, dict):
        raise ExperimentConfigError(f"{path}: expected a mapping at the top level")
    return parse_experiment(data, base=path.parent)
