"""
Brain-centered cropping to a fixed physical extent and z-score normalization.

Cropping is voxel-exact: nothing is resampled, so anisotropic volumes keep
their spacing and end up with a per-axis shape of round(extent / spacing).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from lesionbench.data_model import (
    CaseRecord,
    DatasetManifest,
    ImageVolume,
    LabelVolume,
    PathLike,
    load_case,
    write_case,
    write_manifest,
)
from lesionbench.errors import PreprocessError, ShapeMismatchError
from lesionbench.utils.logger import logger

DEGENERATE_STD = 1e-8

Region = Union[np.ndarray, str]


@dataclass(frozen=True)
class CropSpec:
    """Physical crop extent in mm, (ez, ey, ex)."""
    extent_mm: Tuple[float, float, float] = (200.0, 200.0, 200.0)
    pad_value: float = 0.0

    def __post_init__(self):
        extent = tuple(float(e) for e in self.extent_mm)
        if len(extent) != 3 or min(extent) <= 0:
            raise PreprocessError(f"Crop extent components must be > 0, got {self.extent_mm}")
        object.__setattr__(self, "extent_mm", extent)

    def output_shape(self, spacing) -> Tuple[int, int, int]:
        """Voxel shape of the crop: round-half-up of extent / spacing per axis."""
        return tuple(max(1, int(np.floor(e / s + 0.5))) for e, s in zip(self.extent_mm, spacing))  # type: ignore[return-value]


def _window_starts(mask: np.ndarray, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    coords = np.argwhere(mask)
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    starts = []
    for l, h, n in zip(lo, hi, shape):
        # twice the bounding-box center, kept integral; ties put the extra voxel above the center
        doubled = int(l) + int(h) - (n - 1)
        starts.append(-((-doubled) // 2))
    return tuple(starts)


def _crop_array(array: np.ndarray, starts, shape, fill) -> np.ndarray:
    """Copy the window [starts, starts + shape) of the last three axes, filling outside."""
    spatial = array.shape[-3:]
    out = np.full(array.shape[:-3] + tuple(shape), fill, dtype=array.dtype)
    src, dst = [], []
    for start, n, size in zip(starts, shape, spatial):
        lo, hi = max(start, 0), min(start + n, size)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - start, hi - start))
    out[(Ellipsis, *dst)] = array[(Ellipsis, *src)]
    return out


def crop_to_brain(image: ImageVolume, label: LabelVolume, brain_mask: np.ndarray,
                  spec: CropSpec = CropSpec()) -> Tuple[ImageVolume, LabelVolume]:
    """Center a fixed-extent window on the brain mask's bounding box and crop.

    Args:
        image: Source image
        label: Labels aligned with the image
        brain_mask: Binary brain mask aligned with the image
        spec: Crop extent and image pad value

    Returns:
        (cropped image, cropped label); out-of-volume voxels hold spec.pad_value
        in the image and 0 in the label; spacing is preserved and the origin
        moved to the window corner

    Raises:
        PreprocessError: empty brain mask
        ShapeMismatchError: mask not aligned with the image
    """
    cropped_image, cropped_label, _ = _crop_case_arrays(image, label, brain_mask, spec)
    return cropped_image, cropped_label


def _crop_case_arrays(image: ImageVolume, label: LabelVolume, brain_mask: np.ndarray, spec: CropSpec):
    mask = np.asarray(brain_mask).astype(bool)
    if mask.shape != image.spatial_shape:
        raise ShapeMismatchError(f"Brain mask shape {mask.shape} differs from image shape {image.spatial_shape}")
    if not mask.any():
        raise PreprocessError("Brain mask is empty; cannot center the crop")

    shape = spec.output_shape(image.spacing)
    starts = _window_starts(mask, shape)
    origin = tuple(o + s * sp for o, s, sp in zip(image.origin, starts, image.spacing))

    out_image = ImageVolume(
        _crop_array(image.data, starts, shape, spec.pad_value),
        spacing=image.spacing,
        origin=origin,
    )
    out_label = LabelVolume(_crop_array(label.data, starts, shape, 0), num_classes=label.num_classes)
    out_mask = _crop_array(mask, starts, shape, False)
    logger.debug(f"Cropped {image.spatial_shape} -> {shape} starting at {starts}")
    return out_image, out_label, out_mask


def zscore_normalize(image: ImageVolume, region: Region = "all") -> ImageVolume:
    """Z-score every sequence channel independently over a region.

    Args:
        image: Image to normalize
        region: Binary array aligned with the image, or "all" for every voxel

    Returns:
        Normalized image; channels whose std over the region is below 1e-8
        become all zeros

    Raises:
        PreprocessError: empty region
    """
    if isinstance(region, str):
        if region != "all":
            raise PreprocessError(f"Unknown region '{region}' (use 'all' or a binary mask)")
        mask = None
    else:
        mask = np.asarray(region).astype(bool)
        if mask.shape != image.spatial_shape:
            raise ShapeMismatchError(f"Region shape {mask.shape} differs from image shape {image.spatial_shape}")
        if not mask.any():
            raise PreprocessError("Normalization region is empty")

    out = np.empty(image.data.shape, dtype=np.float32)
    for c, channel in enumerate(image.data):
        values = channel[mask] if mask is not None else channel
        values = values.astype(np.float64)
        mean = values.mean()
        std = values.std()
        if std < DEGENERATE_STD:
            logger.debug(f"Channel {c} is constant over the region; setting it to zero")
            out[c] = 0.0
        else:
            out[c] = ((channel.astype(np.float64) - mean) / std).astype(np.float32)
    return ImageVolume(out, spacing=image.spacing, origin=image.origin)


def preprocess_case(case: CaseRecord, spec: CropSpec = CropSpec()) -> CaseRecord:
    """Crop around the brain mask, then z-score over the whole crop."""
    if case.brain_mask is None:
        logger.warning(f"Case {case.case_id} has no brain mask; z-scoring without cropping")
        return replace(case, image=zscore_normalize(case.image, "all"))
    image, label, mask = _crop_case_arrays(case.image, case.label, case.brain_mask, spec)
    return replace(case, image=zscore_normalize(image, "all"), label=label, brain_mask=mask)


def preprocess_manifest(manifest: DatasetManifest, out_dir: PathLike, spec: CropSpec = CropSpec(),
                        num_classes: Optional[int] = None) -> DatasetManifest:
    """Preprocess every case of a manifest and write NIfTI outputs plus a new manifest."""
    out_dir = Path(out_dir)
    rows = []
    for row in manifest:
        case = preprocess_case(load_case(row, num_classes), spec)
        rows.append(write_case(case, out_dir))
        logger.info(f"Preprocessed {row.case_id}: shape {case.spatial_shape}")
    result = DatasetManifest(rows)
    write_manifest(result, out_dir / "manifest.csv")
    return result
