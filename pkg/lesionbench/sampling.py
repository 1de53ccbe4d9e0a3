"""
Batch samplers: turn a CaseRecord into model inputs, and put patch
predictions back together.

Four strategies are registered, keyed as in the experiment config:

- two_dim: every axial slice, in order
- three_dim: the whole volume
- uniform_patch: patches whose centers are uniform over valid positions
- center_patch: patches guaranteed to contain at least one foreground voxel

All samplers are pure functions of (case, spec, n, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from lesionbench.data_model import CaseRecord
from lesionbench.errors import SamplingError
from lesionbench.utils.logger import logger

Shape3 = Tuple[int, int, int]


@dataclass(frozen=True)
class SamplerInfo:
    """Registry entry for a batch sampler.

    Attributes:
        key: Config key (matches the "batch sampler" column of result tables)
        dims: Spatial dimensionality of the model inputs it produces
        patched: Whether inference goes through tile_for_inference + reassemble
    """
    key: str
    dims: int
    patched: bool
    description: str = ""


class SamplerRegistry:
    """Registry of available batch samplers and their aliases."""

    def __init__(self):
        self._samplers: Dict[str, SamplerInfo] = {}
        self._aliases: Dict[str, str] = {}
        self._functions: Dict[str, Callable] = {}

    def register(self, key: str, dims: int, patched: bool = False, aliases: Sequence[str] = (),
                 description: str = "") -> Callable:
        """Decorator registering a sampler function under a key."""
        def decorator(func):
            self._samplers[key] = SamplerInfo(key, dims, patched, description)
            self._functions[key] = func
            for alias in aliases:
                self._aliases[alias] = key
            logger.debug(f"Registered sampler '{key}' ({dims}D)")
            return func
        return decorator

    def resolve(self, name: str) -> str:
        key = str(name).strip().lower()
        key = self._aliases.get(key, key)
        if key not in self._samplers:
            available = ", ".join(sorted(self._samplers))
            raise SamplingError(f"Unknown sampler '{name}' (available: {available})")
        return key

    def info(self, name: str) -> SamplerInfo:
        return self._samplers[self.resolve(name)]

    def function(self, name: str) -> Callable:
        return self._functions[self.resolve(name)]

    def keys(self) -> List[str]:
        return list(self._samplers)


samplers = SamplerRegistry()


@dataclass(frozen=True)
class PatchSpec:
    """Patch size in voxels (pd, ph, pw)."""
    size: Shape3 = (64, 64, 64)
    restrict_to_mask: bool = False

    def __post_init__(self):
        size = tuple(int(s) for s in self.size)
        if len(size) != 3 or min(size) < 1:
            raise SamplingError(f"Patch size components must be >= 1, got {self.size}")
        object.__setattr__(self, "size", size)

    def check_fits(self, shape: Sequence[int]) -> None:
        if any(p > s for p, s in zip(self.size, shape)):
            raise SamplingError(f"Patch {self.size} is larger than volume {tuple(shape)}")


@dataclass
class PatchBatch:
    """Patches (N, C, pd, ph, pw) with their corner origins in the source volume."""
    patches: np.ndarray
    origins: np.ndarray
    source_shape: Shape3
    labels: Optional[np.ndarray] = None
    size: Shape3 = field(init=False)

    def __post_init__(self):
        self.origins = np.asarray(self.origins, dtype=np.int64).reshape(-1, 3)
        self.source_shape = tuple(int(s) for s in self.source_shape)
        if self.patches.ndim != 5:
            raise SamplingError(f"Patches must be (N, C, pd, ph, pw), got {self.patches.shape}")
        if len(self.patches) != len(self.origins):
            raise SamplingError(f"{len(self.patches)} patches paired with {len(self.origins)} origins")
        self.size = tuple(self.patches.shape[2:])
        _check_windows(self.origins, self.size, self.source_shape)

    def __len__(self) -> int:
        return len(self.origins)


def _check_windows(origins: np.ndarray, size: Sequence[int], source_shape: Sequence[int]) -> None:
    upper = np.asarray(source_shape) - np.asarray(size)
    bad = np.any((origins < 0) | (origins > upper), axis=1)
    if bad.any():
        first = tuple(int(v) for v in origins[np.argmax(bad)])
        raise SamplingError(f"Patch window at origin {first} of size {tuple(size)} "
                            f"exceeds volume {tuple(source_shape)}")


def _extract(case: CaseRecord, origins: np.ndarray, size: Shape3) -> PatchBatch:
    image, label = case.image.data, case.label.data
    patches = np.empty((len(origins), image.shape[0], *size), dtype=image.dtype)
    labels = np.empty((len(origins), *size), dtype=label.dtype)
    for i, (z, y, x) in enumerate(origins):
        window = (slice(z, z + size[0]), slice(y, y + size[1]), slice(x, x + size[2]))
        patches[i] = image[(slice(None), *window)]
        labels[i] = label[window]
    return PatchBatch(patches, origins, case.spatial_shape, labels)


@samplers.register("two_dim", dims=2, description="every axial slice, in index order")
def sample_two_dim(case: CaseRecord) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """Yield (slice_index, image_slice (C, H, W), label_slice (H, W)) for every axial slice."""
    image, label = case.image.data, case.label.data
    for k in range(label.shape[0]):
        yield k, image[:, k], label[k]


@samplers.register("three_dim", dims=3, description="the whole volume")
def sample_three_dim(case: CaseRecord) -> Tuple[np.ndarray, np.ndarray]:
    """Return the full (C, D, H, W) image and (D, H, W) label arrays unchanged."""
    return case.image.data, case.label.data


@samplers.register("uniform_patch", dims=3, patched=True, aliases=("uniform_patch3d",),
                   description="patch centers uniform over valid positions")
def sample_uniform_patch(case: CaseRecord, spec: PatchSpec, n: int, seed: int) -> PatchBatch:
    """Sample n patches whose centers are uniform over valid positions.

    A position is valid when the whole window lies in the volume and, with
    spec.restrict_to_mask, the window center lies inside the brain mask.

    Raises:
        SamplingError: patch larger than the volume, or no valid masked center
    """
    shape = case.spatial_shape
    spec.check_fits(shape)
    rng = np.random.default_rng(seed)
    size = np.asarray(spec.size)
    upper = np.asarray(shape) - size

    if not spec.restrict_to_mask:
        origins = np.stack([rng.integers(0, u + 1, size=n) for u in upper], axis=1)
        return _extract(case, origins, spec.size)

    if case.brain_mask is None:
        raise SamplingError(f"Case {case.case_id}: restrict_to_mask requires a brain mask")
    centers = np.argwhere(case.brain_mask)
    corner = centers - size // 2
    valid = np.all((corner >= 0) & (corner <= upper), axis=1)
    if not valid.any():
        raise SamplingError(f"Case {case.case_id}: no mask voxel can center a {spec.size} patch")
    candidates = corner[valid]
    origins = candidates[rng.integers(0, len(candidates), size=n)]
    return _extract(case, origins, spec.size)


@samplers.register("center_patch", dims=3, patched=True, aliases=("center_patch3d",),
                   description="patches containing at least one foreground voxel")
def sample_center_patch(case: CaseRecord, spec: PatchSpec, n: int, seed: int) -> PatchBatch:
    """Sample n patches that each contain at least one foreground voxel.

    A foreground voxel is drawn uniformly, then the origin is drawn uniformly
    among the in-bounds windows containing it.

    Raises:
        SamplingError: all-background label volume, or patch larger than the volume
    """
    shape = case.spatial_shape
    spec.check_fits(shape)
    foreground = np.argwhere(case.label.data > 0)
    if len(foreground) == 0:
        raise SamplingError(f"Case {case.case_id}: label volume has no foreground voxel")

    rng = np.random.default_rng(seed)
    size = np.asarray(spec.size)
    upper = np.asarray(shape) - size
    voxels = foreground[rng.integers(0, len(foreground), size=n)]
    lo = np.maximum(voxels - size + 1, 0)
    hi = np.minimum(voxels, upper)
    origins = lo + np.floor(rng.random(voxels.shape) * (hi - lo + 1)).astype(np.int64)
    return _extract(case, origins, spec.size)


def _axis_starts(length: int, patch: int) -> List[int]:
    starts = list(range(0, length - patch + 1, patch))
    if starts[-1] + patch < length:
        starts.append(length - patch)
    return starts


def tile_for_inference(case: CaseRecord, spec: PatchSpec) -> PatchBatch:
    """Regular grid of windows with stride = patch size covering the whole volume.

    The last window per axis is clamped to the high boundary, so windows may
    overlap there.

    Raises:
        SamplingError: patch larger than the volume
    """
    shape = case.spatial_shape
    spec.check_fits(shape)
    grids = [_axis_starts(length, patch) for length, patch in zip(shape, spec.size)]
    origins = np.array([(z, y, x) for z in grids[0] for y in grids[1] for x in grids[2]], dtype=np.int64)
    return _extract(case, origins, spec.size)


def reassemble(predictions: np.ndarray, origins: np.ndarray, source_shape: Sequence[int]) -> np.ndarray:
    """Average patch class-probabilities back into a (num_classes, D, H, W) volume.

    Voxels covered by several patches take the arithmetic mean; uncovered
    voxels are background-certain (probability 1 on class 0).

    Raises:
        SamplingError: a window lies outside the volume
    """
    predictions = np.asarray(predictions)
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 3)
    if predictions.ndim != 5 or len(predictions) != len(origins):
        raise SamplingError(f"Predictions {predictions.shape} do not pair with {len(origins)} origins")
    size = predictions.shape[2:]
    source_shape = tuple(int(s) for s in source_shape)
    _check_windows(origins, size, source_shape)

    num_classes = predictions.shape[1]
    sums = np.zeros((num_classes, *source_shape), dtype=np.float64)
    counts = np.zeros(source_shape, dtype=np.int64)
    for pred, (z, y, x) in zip(predictions, origins):
        window = (slice(z, z + size[0]), slice(y, y + size[1]), slice(x, x + size[2]))
        sums[(slice(None), *window)] += pred
        counts[window] += 1

    covered = counts > 0
    out = np.zeros_like(sums)
    np.divide(sums, counts, out=out, where=covered)
    out[0][~covered] = 1.0
    return out.astype(np.result_type(predictions.dtype, np.float32))
