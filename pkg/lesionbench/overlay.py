"""Axial slice overlays of predictions against the ground truth."""

from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from lesionbench.data_model import ImageVolume, LabelVolume, PathLike
from lesionbench.errors import ShapeMismatchError

TRUTH_COLOR = (0, 200, 0)
PREDICTION_COLOR = (220, 0, 0)
OVERLAY_ALPHA = 0.5

Volume = Union[ImageVolume, LabelVolume, np.ndarray]


def _array(volume: Volume) -> np.ndarray:
    if isinstance(volume, ImageVolume):
        return volume.data[0]
    if isinstance(volume, LabelVolume):
        return volume.data
    array = np.asarray(volume)
    return array[0] if array.ndim == 4 else array


def _to_grey(slice_: np.ndarray) -> np.ndarray:
    lo, hi = np.percentile(slice_, [1, 99])
    if hi <= lo:
        return np.zeros(slice_.shape, dtype=np.uint8)
    scaled = np.clip((slice_ - lo) / (hi - lo), 0, 1)
    return (scaled * 255).astype(np.uint8)


def export_overlay(image: Volume, truth: Volume, prediction: Volume, path: PathLike,
                   slice_index: Optional[int] = None) -> Path:
    """Write an RGB PNG of one axial slice: image in grey, truth in green, prediction in red.

    Args:
        image: Image volume; the first sequence is shown
        truth: Ground-truth labels; any class > 0 is drawn
        prediction: Predicted labels
        path: Output PNG path
        slice_index: Axial slice; defaults to the slice with the most truth voxels

    Returns:
        The written path
    """
    image_arr, truth_arr, pred_arr = _array(image), _array(truth) > 0, _array(prediction) > 0
    if not image_arr.shape == truth_arr.shape == pred_arr.shape:
        raise ShapeMismatchError(f"Overlay inputs are not aligned: {image_arr.shape}, "
                                 f"{truth_arr.shape}, {pred_arr.shape}")
    if slice_index is None:
        slice_index = int(np.argmax(truth_arr.sum(axis=(1, 2))))
    if not 0 <= slice_index < image_arr.shape[0]:
        raise ShapeMismatchError(f"Slice {slice_index} outside depth {image_arr.shape[0]}")

    grey = _to_grey(image_arr[slice_index].astype(np.float64))
    rgb = np.repeat(grey[..., np.newaxis], 3, axis=-1).astype(np.float64)
    for mask, color in ((truth_arr[slice_index], TRUTH_COLOR), (pred_arr[slice_index], PREDICTION_COLOR)):
        rgb[mask] = (1 - OVERLAY_ALPHA) * rgb[mask] + OVERLAY_ALPHA * np.asarray(color, dtype=np.float64)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb.round().astype(np.uint8), mode="RGB").save(path)
    return path
