"""
Training-time 2D augmentation for slice-based models.

One call draws one set of parameters (translation, rotation, shear, zoom,
brightness and an elastic displacement field) from a seeded generator and
applies the same geometric transform to the image (linear interpolation) and
the label (nearest neighbour). Brightness touches the image only. Pixels
mapped from outside the slice are filled with 0 in both.

3D pipelines never call into this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from lesionbench.errors import AugmentError, ShapeMismatchError


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation magnitudes.

    Attributes:
        max_shift_frac: translation range as a fraction of the slice extent
        max_rotate_deg: rotation range in degrees
        max_shear: shear coefficient range
        zoom_range: (lo, hi) isotropic zoom factors
        brightness_frac: additive brightness range in z-score units
        elastic_alpha: displacement scale in pixels
        elastic_sigma: Gaussian smoothing width of the displacement field
        enabled: False turns augmentation into the identity
    """
    max_shift_frac: float = 0.1
    max_rotate_deg: float = 10.0
    max_shear: float = 0.1
    zoom_range: Tuple[float, float] = (0.9, 1.1)
    brightness_frac: float = 0.1
    elastic_alpha: float = 720.0
    elastic_sigma: float = 24.0
    enabled: bool = True

    def __post_init__(self):
        lo, hi = (float(z) for z in self.zoom_range)
        if not (0 < lo <= hi):
            raise AugmentError(f"zoom_range must satisfy 0 < lo <= hi, got {self.zoom_range}")
        object.__setattr__(self, "zoom_range", (lo, hi))
        magnitudes = {
            "max_shift_frac": self.max_shift_frac,
            "max_rotate_deg": self.max_rotate_deg,
            "max_shear": self.max_shear,
            "brightness_frac": self.brightness_frac,
            "elastic_alpha": self.elastic_alpha,
            "elastic_sigma": self.elastic_sigma,
        }
        negative = [k for k, v in magnitudes.items() if v < 0]
        if negative:
            raise AugmentError(f"Augmentation magnitudes must be >= 0: {', '.join(negative)}")

    @property
    def is_identity(self) -> bool:
        return (not self.enabled) or (
            self.max_shift_frac == 0
            and self.max_rotate_deg == 0
            and self.max_shear == 0
            and self.zoom_range == (1.0, 1.0)
            and self.brightness_frac == 0
            and self.elastic_alpha == 0
        )


@dataclass(frozen=True)
class AugmentParams:
    """One concrete draw of augmentation parameters."""
    shift: Tuple[float, float] = (0.0, 0.0)
    rotate_deg: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    brightness: float = 0.0
    elastic_seed: Optional[int] = None


def draw_params(config: AugmentConfig, rng: np.random.Generator, shape: Tuple[int, int]) -> AugmentParams:
    """Draw one parameter set for a slice of the given (H, W) shape."""
    h, w = shape
    f = config.max_shift_frac
    shift = (float(rng.uniform(-f, f) * h), float(rng.uniform(-f, f) * w))
    rotate = float(rng.uniform(-config.max_rotate_deg, config.max_rotate_deg))
    shear = float(rng.uniform(-config.max_shear, config.max_shear))
    zoom = float(rng.uniform(*config.zoom_range))
    brightness = float(rng.uniform(-config.brightness_frac, config.brightness_frac))
    elastic_seed = int(rng.integers(0, 2**31 - 1)) if config.elastic_alpha > 0 else None
    return AugmentParams(shift, rotate, shear, zoom, brightness, elastic_seed)


def _forward_matrix(params: AugmentParams) -> np.ndarray:
    """Forward map on (row, col) offsets from the slice center: zoom, then shear, then rotation."""
    theta = np.deg2rad(params.rotate_deg)
    rotation = np.array([[np.cos(theta), -np.sin(theta)],
                         [np.sin(theta), np.cos(theta)]])
    shear = np.array([[1.0, params.shear],
                      [0.0, 1.0]])
    zoom = np.eye(2) * params.zoom
    return rotation @ shear @ zoom


def _source_coordinates(shape: Tuple[int, int], params: AugmentParams, config: AugmentConfig) -> np.ndarray:
    h, w = shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    out = np.stack([rows.ravel(), cols.ravel()])

    inverse = np.linalg.inv(_forward_matrix(params))
    src = inverse @ (out - center[:, None] - np.asarray(params.shift)[:, None]) + center[:, None]

    if params.elastic_seed is not None:
        field_rng = np.random.default_rng(params.elastic_seed)
        dy = gaussian_filter(field_rng.uniform(-1, 1, size=shape), config.elastic_sigma) * config.elastic_alpha
        dx = gaussian_filter(field_rng.uniform(-1, 1, size=shape), config.elastic_sigma) * config.elastic_alpha
        src = src + np.stack([dy.ravel(), dx.ravel()])
    return src


def apply_params(image_slice: np.ndarray, label_slice: np.ndarray, params: AugmentParams,
                 config: AugmentConfig = AugmentConfig()) -> Tuple[np.ndarray, np.ndarray]:
    """Apply one parameter draw to an image slice (C, H, W) and its label slice (H, W)."""
    image_slice = np.asarray(image_slice, dtype=np.float32)
    label_slice = np.asarray(label_slice)
    if image_slice.ndim == 2:
        image_slice = image_slice[np.newaxis]
    if image_slice.shape[1:] != label_slice.shape:
        raise ShapeMismatchError(f"Image slice {image_slice.shape} and label slice {label_slice.shape} are not aligned")

    shape = label_slice.shape
    src = _source_coordinates(shape, params, config)

    image_out = np.stack([
        map_coordinates(channel.astype(np.float64), src, order=1, mode="constant", cval=0.0).reshape(shape)
        for channel in image_slice
    ]).astype(np.float32)
    image_out += np.float32(params.brightness)

    label_out = map_coordinates(label_slice.astype(np.float64), src, order=0, mode="constant", cval=0.0)
    label_out = np.rint(label_out).reshape(shape).astype(label_slice.dtype)
    return image_out, label_out


def augment_slice(image_slice: np.ndarray, label_slice: np.ndarray, config: AugmentConfig,
                  seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Augment one slice with a single parameter draw determined by seed.

    Args:
        image_slice: Array (C, H, W)
        label_slice: Integer array (H, W)
        config: Augmentation magnitudes
        seed: Seed of the draw; equal inputs and seed give bit-identical outputs

    Returns:
        (image_slice, label_slice) with unchanged shapes
    """
    if config.is_identity:
        return np.array(image_slice, dtype=np.float32, copy=True), np.array(label_slice, copy=True)
    rng = np.random.default_rng(seed)
    params = draw_params(config, rng, tuple(np.asarray(label_slice).shape))
    return apply_params(image_slice, label_slice, params, config)
