"""
Versioned model checkpoints.

A checkpoint is a torch.save dict holding the format version, the
experiment configuration (JSON-compatible), the resolved model
configuration, the parameter values and the epoch metrics at which it was
written. Loading refuses files whose major format version differs.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import torch
from packaging.version import InvalidVersion, Version

from lesionbench.data_model import PathLike
from lesionbench.errors import CheckpointError
from lesionbench.models import ModelConfig, SegmentationNetwork, build_model, count_parameters, model_label
from lesionbench.runner.experiment import ExperimentConfig
from lesionbench.utils.logger import logger

CHECKPOINT_FORMAT_VERSION = "1.0"


def _model_config_to_dict(config: ModelConfig) -> Dict[str, Any]:
    return {
        "arch": config.arch,
        "num_classes": config.num_classes,
        "in_channels": config.in_channels,
        "base_width": config.base_width,
        "depth": config.depth,
        "dropout_rate": config.dropout_rate,
        "norm": config.norm.value,
        "pyramid_bins": list(config.pyramid_bins),
        "low_res_factor": config.low_res_factor,
        "name": config.name,
    }


@dataclass
class LoadedModel:
    """A network restored from a checkpoint together with how it was trained."""
    model: SegmentationNetwork
    experiment: ExperimentConfig
    path: Optional[Path] = None
    epoch: int = 0
    metrics: Dict[str, Any] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return model_label(self.model.config)

    @property
    def num_parameters(self) -> int:
        return count_parameters(self.model)

    @property
    def checkpoint_id(self) -> str:
        return self.path.name if self.path is not None else "<memory>"


def save_checkpoint(path: PathLike, model: SegmentationNetwork, experiment: ExperimentConfig,
                    epoch: int, metrics: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "experiment": experiment.model_dump(mode="json"),
        "model_config": _model_config_to_dict(model.config),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "epoch": int(epoch),
        "metrics": dict(metrics or {}),
    }
    torch.save(payload, path)
    logger.debug(f"Saved checkpoint {path} (epoch {epoch})")
    return path


def _check_version(path: Path, value: Any) -> None:
    try:
        saved = Version(str(value))
    except InvalidVersion:
        raise CheckpointError(f"{path}: unreadable checkpoint format version '{value}'") from None
    current = Version(CHECKPOINT_FORMAT_VERSION)
    if saved.major != current.major:
        raise CheckpointError(f"{path}: checkpoint format {saved} is incompatible with {current}")
    if saved > current:
        logger.warning(f"{path}: checkpoint format {saved} is newer than {current}; loading anyway")


def load_checkpoint(path: PathLike, device: str = "cpu") -> LoadedModel:
    """Restore a model and its experiment from a checkpoint file.

    Raises:
        CheckpointError: missing or unreadable file, incompatible format version
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=device, weights_only=True)
    except Exception as e:
        raise CheckpointError(f"{path}: cannot read checkpoint ({e})") from e
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path}: not a lesionbench checkpoint")
    _check_version(path, payload["format_version"])

    try:
        experiment = ExperimentConfig.model_validate(payload["experiment"])
        config = ModelConfig(**payload["model_config"])
        model = build_model(config)
        model.load_state_dict(payload["state_dict"])
    except CheckpointError:
        raise
    except Exception as e:
        raise CheckpointError(f"{path}: checkpoint contents are inconsistent ({e})") from e

    model.to(device)
    model.eval()
    return LoadedModel(model, experiment, path, payload.get("epoch", 0), payload.get("metrics", {}))
