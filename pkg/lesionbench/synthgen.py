"""
Deterministic synthetic cases for desk-scale experiments.

Each case is a single-sequence volume: an ellipsoidal "brain" carrying a
smooth intensity field and Gaussian noise, with one or more ellipsoidal
lesions of elevated intensity. Lesion volumes follow a log-uniform law
split at a target median, so by default their distribution matches the
published range of 20 to 72646 mm3 with a median of 1236 mm3.

A case is fully determined by (config.seed, case_index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import yaml

from lesionbench.data_model import (
    CaseRecord,
    DatasetManifest,
    Diagnosis,
    ImageVolume,
    LabelVolume,
    PathLike,
    Split,
    write_case,
    write_manifest,
)
from lesionbench.errors import SynthError
from lesionbench.metrics import REPORT_DIAGNOSES
from lesionbench.utils.logger import logger
from lesionbench.utils.seeding import derive_seed

BRAIN_SEMI_AXIS_FRACTION = 0.4
CENTER_ATTEMPTS = 50


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic dataset parameters.

    Attributes:
        volume_shape: Voxel shape (D, H, W)
        spacing: Voxel size in mm (sz, sy, sx)
        lesion_count_range: Inclusive (min, max) number of lesions per case
        lesion_volume_range_mm3: Inclusive lesion volume range
        lesion_volume_median_mm3: Target median lesion volume; None draws
            plain log-uniform volumes over the range
        lesion_aspect_jitter: Log-scale spread of the ellipsoid semi-axes;
            0 gives spheres
        lesion_intensity_contrast: Intensity added inside lesions
        noise_sigma: Standard deviation of the additive Gaussian noise
        seed: Dataset seed
    """
    volume_shape: Tuple[int, int, int] = (96, 96, 96)
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    lesion_count_range: Tuple[int, int] = (1, 3)
    lesion_volume_range_mm3: Tuple[float, float] = (20.0, 72646.0)
    lesion_volume_median_mm3: Optional[float] = 1236.0
    lesion_aspect_jitter: float = 0.3
    lesion_intensity_contrast: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        shape = tuple(int(s) for s in self.volume_shape)
        spacing = tuple(float(s) for s in self.spacing)
        if len(shape) != 3 or min(shape) < 1:
            raise SynthError(f"volume_shape must be three positive sizes, got {self.volume_shape}")
        if len(spacing) != 3 or min(spacing) <= 0:
            raise SynthError(f"spacing must be three positive values, got {self.spacing}")
        lo_count, hi_count = (int(c) for c in self.lesion_count_range)
        if not 1 <= lo_count <= hi_count:
            raise SynthError(f"lesion_count_range must satisfy 1 <= min <= max, got {self.lesion_count_range}")
        lo_vol, hi_vol = (float(v) for v in self.lesion_volume_range_mm3)
        if not 0 < lo_vol <= hi_vol:
            raise SynthError(f"lesion_volume_range_mm3 must satisfy 0 < min <= max, "
                             f"got {self.lesion_volume_range_mm3}")
        median = self.lesion_volume_median_mm3
        if median is not None and not lo_vol <= median <= hi_vol:
            raise SynthError(f"lesion_volume_median_mm3 {median} lies outside the volume range")
        if self.lesion_aspect_jitter < 0 or self.noise_sigma < 0:
            raise SynthError("lesion_aspect_jitter and noise_sigma must be >= 0")
        if self.lesion_intensity_contrast <= 0:
            raise SynthError("lesion_intensity_contrast must be > 0")
        object.__setattr__(self, "volume_shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "lesion_count_range", (lo_count, hi_count))
        object.__setattr__(self, "lesion_volume_range_mm3", (lo_vol, hi_vol))

    @classmethod
    def from_yaml(cls, path: PathLike) -> "SynthConfig":
        """Load a config from a YAML mapping of field names to values."""
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise SynthError(f"{path}: expected a mapping of SynthConfig fields")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SynthError(f"{path}: unknown SynthConfig fields: {', '.join(unknown)}")
        return cls(**data)


def sample_lesion_volume(config: SynthConfig, rng: np.random.Generator) -> float:
    """Draw one lesion volume in mm3.

    With a target median m, the volume is log-uniform on [lo, m] or [m, hi]
    with probability 1/2 each, which puts the median exactly at m.
    """
    lo, hi = config.lesion_volume_range_mm3
    median = config.lesion_volume_median_mm3
    if median is not None:
        if rng.random() < 0.5:
            hi = median
        else:
            lo = median
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _semi_axes_mm(volume_mm3: float, jitter: float, rng: np.random.Generator) -> np.ndarray:
    radius = (3.0 * volume_mm3 / (4.0 * math.pi)) ** (1.0 / 3.0)
    if jitter == 0:
        return np.full(3, radius)
    logs = rng.uniform(-jitter, jitter, size=3)
    logs -= logs.mean()
    return radius * np.exp(logs)


def _brain(shape: Tuple[int, int, int], rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Ellipsoid brain mask and a smooth multiplicative intensity field."""
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in shape), indexing="ij", sparse=True)
    centers = [(n - 1) / 2.0 for n in shape]
    semi = [BRAIN_SEMI_AXIS_FRACTION * n for n in shape]
    dist = sum(((g - c) / s) ** 2 for g, c, s in zip(grids, centers, semi))
    mask = dist <= 1.0

    phases = rng.uniform(0, 2 * np.pi, size=3)
    field = 1.0 + 0.1 * sum(np.sin(2 * np.pi * g / n + p) for g, n, p in zip(grids, shape, phases)) / 3.0
    return mask, np.broadcast_to(field, shape)


def _place_lesion(label: np.ndarray, brain: np.ndarray, semi_vox: np.ndarray, rng: np.random.Generator,
                  case_index: int) -> None:
    shape = np.asarray(label.shape)
    reach = np.ceil(semi_vox).astype(np.int64)
    if np.any(2 * reach + 1 > shape):
        raise SynthError(f"Case {case_index}: lesion with semi-axes {np.round(semi_vox, 1)} voxels "
                         f"cannot fit in volume {tuple(shape)}")
    lo, hi = reach, shape - 1 - reach

    center = None
    for _ in range(CENTER_ATTEMPTS):
        candidate = rng.integers(lo, hi + 1)
        if brain[tuple(candidate)]:
            center = candidate
            break
    if center is None:
        # sparse masks: draw among the brain voxels where the lesion still fits
        fits = np.argwhere(brain[tuple(slice(l, h + 1) for l, h in zip(lo, hi))])
        if len(fits):
            center = fits[rng.integers(len(fits))] + lo
        else:
            logger.warning(f"Case {case_index}: no brain voxel leaves room for a lesion with semi-axes "
                           f"{np.round(semi_vox, 1)} voxels; placing it outside the brain mask")
            center = rng.integers(lo, hi + 1)

    window = tuple(slice(c - r, c + r + 1) for c, r in zip(center, reach))
    offsets = np.meshgrid(*(np.arange(-r, r + 1, dtype=np.float64) for r in reach), indexing="ij", sparse=True)
    inside = sum((o / a) ** 2 for o, a in zip(offsets, semi_vox)) <= 1.0
    label[window] |= inside


def case_diagnosis(case_index: int) -> Diagnosis:
    """Round-robin over the report's lesion types."""
    return REPORT_DIAGNOSES[case_index % len(REPORT_DIAGNOSES)]


def generate_case(config: SynthConfig, case_index: int, split: Split = Split.TRAIN) -> CaseRecord:
    """Generate synthetic case number case_index.

    Returns:
        A CaseRecord with one image sequence, a binary label holding at least
        one foreground voxel, and the brain ellipsoid as its mask

    Raises:
        SynthError: a drawn lesion cannot fit in the volume
    """
    rng = np.random.default_rng(derive_seed(config.seed, "synth", case_index))
    shape = config.volume_shape
    spacing = np.asarray(config.spacing)

    brain, field = _brain(shape, rng)
    lesions = np.zeros(shape, dtype=bool)
    count = int(rng.integers(config.lesion_count_range[0], config.lesion_count_range[1] + 1))
    for _ in range(count):
        volume = sample_lesion_volume(config, rng)
        semi_vox = _semi_axes_mm(volume, config.lesion_aspect_jitter, rng) / spacing
        _place_lesion(lesions, brain, semi_vox, rng, case_index)

    image = np.where(brain, field, 0.0)
    image = image + config.lesion_intensity_contrast * lesions
    if config.noise_sigma > 0:
        image = image + rng.normal(0.0, config.noise_sigma, size=shape)

    return CaseRecord(
        case_id=f"synth_{case_index:04d}",
        image=ImageVolume(image.astype(np.float32), spacing=config.spacing),
        label=LabelVolume(lesions.astype(np.uint8), num_classes=2),
        brain_mask=brain,
        diagnosis=case_diagnosis(case_index),
        split=split,
    )


def generate_dataset(config: SynthConfig, num_cases: int, out_dir: PathLike, num_test: int = 0) -> DatasetManifest:
    """Generate num_cases cases as NIfTI files plus manifest.csv under out_dir.

    The last num_test cases form the test split.
    """
    if num_cases < 1 or not 0 <= num_test <= num_cases:
        raise SynthError(f"Need num_cases >= 1 and 0 <= num_test <= num_cases, got {num_cases}, {num_test}")
    out_dir = Path(out_dir)
    rows: List = []
    for index in range(num_cases):
        split = Split.TEST if index >= num_cases - num_test else Split.TRAIN
        case = generate_case(config, index, split)
        rows.append(write_case(case, out_dir))
        logger.debug(f"Generated {case.case_id}: {int(case.label.data.sum())} lesion voxels")
    manifest = DatasetManifest(rows)
    write_manifest(manifest, out_dir / "manifest.csv")
    logger.info(f"Wrote {num_cases} synthetic cases ({num_test} test) to {out_dir}")
    return manifest
