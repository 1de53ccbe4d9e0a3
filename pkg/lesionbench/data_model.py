"""
Core volumetric types, dataset manifests and NIfTI file I/O.

Arrays are held in (C, D, H, W) / (D, H, W) order, i.e. (z, y, x) for the
spatial axes, with spacing in mm/voxel given in the same order. NIfTI files
store (x, y, z); the readers and writers here do the transposition.

Values are immutable once constructed: the arrays inside ImageVolume,
LabelVolume and CaseRecord are flagged read-only, so records can be shared
between threads and workers without copying.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import nibabel as nib
import numpy as np
import pandas as pd

from lesionbench.errors import (
    DataError,
    LabelRangeError,
    ManifestError,
    MissingFileError,
    ShapeMismatchError,
)
from lesionbench.utils.logger import logger

PathLike = Union[str, Path]
Triple = Tuple[float, float, float]

MANIFEST_COLUMNS = ["case_id", "image_path", "label_path", "mask_path", "diagnosis", "split"]
SEQUENCE_SEPARATOR = ";"
BRATS_NUM_SEQUENCES = 4
BRATS_NUM_CLASSES = 5


class Diagnosis(str, Enum):
    """Lesion-type tags; the vocabulary is closed."""
    METASTASIS = "metastasis"
    MENINGIOMA = "meningioma"
    SCHWANNOMA = "schwannoma"
    PITUITARY = "pituitary"
    AVM = "avm"
    TN = "tn"
    OTHER = "other"
    SYNTHETIC = "synthetic"

    @property
    def display_name(self) -> str:
        return DIAGNOSIS_DISPLAY_NAMES[self]

    @classmethod
    def parse(cls, value: Union[str, "Diagnosis"]) -> "Diagnosis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            allowed = ", ".join(d.value for d in cls)
            raise ManifestError(f"Unknown diagnosis tag '{value}' (allowed: {allowed})") from None


DIAGNOSIS_DISPLAY_NAMES = {
    Diagnosis.METASTASIS: "Metastasis",
    Diagnosis.MENINGIOMA: "Meningioma",
    Diagnosis.SCHWANNOMA: "Schwannoma",
    Diagnosis.PITUITARY: "Pituitary",
    Diagnosis.AVM: "AVM",
    Diagnosis.TN: "TN",
    Diagnosis.OTHER: "Other tumors",
    Diagnosis.SYNTHETIC: "Synthetic",
}


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"

    @classmethod
    def parse(cls, value: Union[str, "Split"]) -> "Split":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ManifestError(f"Unknown split '{value}' (allowed: train, test)") from None


def _frozen_array(array: np.ndarray) -> np.ndarray:
    if not array.flags.writeable and array.flags.c_contiguous:
        return array
    array = np.array(array, order="C", copy=True)
    array.flags.writeable = False
    return array


def _as_triple(values: Sequence[float], name: str) -> Triple:
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise DataError(f"{name} must have 3 components, got {len(values)}")
    return values  # type: ignore[return-value]


@dataclass(frozen=True)
class ImageVolume:
    """Intensity array (C, D, H, W) with per-axis spacing (sz, sy, sx) in mm.

    A 3D array is accepted and gets a leading channel axis of size 1.
    """
    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 3:
            data = data[np.newaxis]
        if data.ndim != 4:
            raise DataError(f"Image data must be 3D or 4D (C, D, H, W), got shape {data.shape}")
        if min(data.shape) < 1:
            raise DataError(f"Image shape components must be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("Image data contains NaN or Inf values")
        spacing = _as_triple(self.spacing, "spacing")
        if min(spacing) <= 0:
            raise DataError(f"Spacing components must be > 0, got {spacing}")
        object.__setattr__(self, "data", _frozen_array(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triple(self.origin, "origin"))

    @property
    def num_sequences(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape[1:])  # type: ignore[return-value]


@dataclass(frozen=True)
class LabelVolume:
    """Integer class array (D, H, W) with values in [0, num_classes)."""
    data: np.ndarray
    num_classes: int = 2

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DataError(f"Label data must be 3D (D, H, W), got shape {data.shape}")
        if self.num_classes < 2:
            raise DataError(f"num_classes must be >= 2, got {self.num_classes}")
        if data.dtype.kind == "f":
            rounded = np.rint(data)
            if not np.array_equal(rounded, data):
                raise LabelRangeError("Label data contains non-integer values")
            data = rounded
        if data.size and (data.min() < 0 or data.max() >= self.num_classes):
            raise LabelRangeError(
                f"Label values must lie in [0, {self.num_classes}), found range [{data.min()}, {data.max()}]"
            )
        dtype = np.uint8 if self.num_classes <= 256 else np.int32
        object.__setattr__(self, "data", _frozen_array(data.astype(dtype, copy=False)))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    @property
    def foreground(self) -> np.ndarray:
        return self.data > 0


@dataclass(frozen=True)
class CaseRecord:
    """One patient case: image, label, optional brain mask and metadata."""
    case_id: str
    image: ImageVolume
    label: LabelVolume
    brain_mask: Optional[np.ndarray] = None
    diagnosis: Diagnosis = Diagnosis.SYNTHETIC
    split: Split = Split.TRAIN

    def __post_init__(self):
        if not self.case_id:
            raise DataError("case_id must be a non-empty string")
        if self.image.spatial_shape != self.label.shape:
            raise ShapeMismatchError(
                f"Case {self.case_id}: image spatial shape {self.image.spatial_shape} "
                f"differs from label shape {self.label.shape}"
            )
        if self.brain_mask is not None:
            mask = np.asarray(self.brain_mask).astype(bool)
            if mask.shape != self.label.shape:
                raise ShapeMismatchError(
                    f"Case {self.case_id}: brain mask shape {mask.shape} differs from label shape {self.label.shape}"
                )
            object.__setattr__(self, "brain_mask", _frozen_array(mask))
        object.__setattr__(self, "diagnosis", Diagnosis.parse(self.diagnosis))
        object.__setattr__(self, "split", Split.parse(self.split))

    @property
    def num_classes(self) -> int:
        return self.label.num_classes

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return self.label.shape


@dataclass(frozen=True)
class ManifestRow:
    case_id: str
    image_paths: Tuple[Path, ...]
    label_path: Path
    mask_path: Optional[Path]
    diagnosis: Diagnosis
    split: Split

    def to_record(self, root: Optional[Path] = None) -> dict:
        def rel(path: Path) -> str:
            if root is not None:
                try:
                    return Path(path).resolve().relative_to(root.resolve()).as_posix()
                except ValueError:
                    pass
            return Path(path).as_posix()

        return {
            "case_id": self.case_id,
            "image_path": SEQUENCE_SEPARATOR.join(rel(p) for p in self.image_paths),
            "label_path": rel(self.label_path),
            "mask_path": rel(self.mask_path) if self.mask_path else "",
            "diagnosis": self.diagnosis.value,
            "split": self.split.value,
        }


@dataclass
class DatasetManifest:
    """Ordered manifest rows; case ids are unique."""
    rows: List[ManifestRow] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.case_id in seen:
                raise ManifestError(f"Duplicate case_id '{row.case_id}' in manifest")
            seen.add(row.case_id)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[ManifestRow]:
        return iter(self.rows)

    @property
    def case_ids(self) -> List[str]:
        return [row.case_id for row in self.rows]

    def by_split(self, split: Union[str, Split]) -> "DatasetManifest":
        split = Split.parse(split)
        return DatasetManifest([row for row in self.rows if row.split == split])

    def get(self, case_id: str) -> ManifestRow:
        for row in self.rows:
            if row.case_id == case_id:
                return row
        raise ManifestError(f"Case '{case_id}' not found in manifest")


# ---------------------------------------------------------------------------
# NIfTI I/O
# ---------------------------------------------------------------------------

def read_nifti(path: PathLike) -> Tuple[np.ndarray, Triple, Triple]:
    """Read a NIfTI file into (z, y, x) order.

    4D files (x, y, z, c) come back as (c, z, y, x).

    Returns:
        (array, spacing (sz, sy, sx), origin (oz, oy, ox))
    """
    img = nib.load(str(path))
    array = np.asanyarray(img.dataobj)
    if array.ndim == 3:
        array = np.transpose(array, (2, 1, 0))
    elif array.ndim == 4:
        array = np.transpose(array, (3, 2, 1, 0))
    else:
        raise DataError(f"{path}: expected a 3D or 4D NIfTI volume, got {array.ndim}D")
    zooms = img.header.get_zooms()[:3]
    spacing = (float(zooms[2]), float(zooms[1]), float(zooms[0]))
    offset = img.affine[:3, 3]
    origin = (float(offset[2]), float(offset[1]), float(offset[0]))
    return np.ascontiguousarray(array), spacing, origin


def write_nifti(array: np.ndarray, path: PathLike, spacing: Triple = (1.0, 1.0, 1.0),
                origin: Triple = (0.0, 0.0, 0.0)) -> Path:
    """Write a (z, y, x) array as NIfTI-1 with a diagonal affine."""
    array = np.asarray(array)
    if array.dtype == bool:
        array = array.astype(np.uint8)
    if array.ndim != 3:
        raise DataError(f"write_nifti expects a 3D array, got shape {array.shape}")
    affine = np.diag([spacing[2], spacing[1], spacing[0], 1.0])
    affine[:3, 3] = [origin[2], origin[1], origin[0]]
    img = nib.Nifti1Image(np.transpose(array, (2, 1, 0)), affine)
    img.set_data_dtype(array.dtype)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nib.save(img, str(path))
    return path


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _resolve(root: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else root / path


def load_manifest(path: PathLike) -> DatasetManifest:
    """Parse a manifest CSV with header case_id,image_path,label_path,mask_path,diagnosis,split.

    Relative paths are resolved against the manifest's directory. Multi-sequence
    images list their sequence files separated by ';' in image_path.

    Raises:
        ManifestError: malformed row, duplicate id, unknown diagnosis tag or split
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Manifest not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ManifestError(f"Malformed manifest {path}: {e}") from e

    columns = [c.strip() for c in frame.columns]
    if columns != MANIFEST_COLUMNS:
        raise ManifestError(
            f"Manifest {path} header must be '{','.join(MANIFEST_COLUMNS)}', got '{','.join(columns)}'"
        )
    frame.columns = columns
    frame = frame.fillna("")

    root = path.parent
    rows: List[ManifestRow] = []
    for line_no, record in enumerate(frame.to_dict("records"), start=2):
        record = {k: str(v).strip() for k, v in record.items()}
        missing = [k for k in ("case_id", "image_path", "label_path", "diagnosis", "split") if not record[k]]
        if missing:
            raise ManifestError(f"Malformed manifest row at line {line_no}: empty {', '.join(missing)}")
        image_parts = [p.strip() for p in record["image_path"].split(SEQUENCE_SEPARATOR) if p.strip()]
        rows.append(ManifestRow(
            case_id=record["case_id"],
            image_paths=tuple(_resolve(root, p) for p in image_parts),
            label_path=_resolve(root, record["label_path"]),
            mask_path=_resolve(root, record["mask_path"]) if record["mask_path"] else None,
            diagnosis=Diagnosis.parse(record["diagnosis"]),
            split=Split.parse(record["split"]),
        ))

    manifest = DatasetManifest(rows)
    logger.debug(f"Loaded manifest {path} with {len(manifest)} rows")
    return manifest


def write_manifest(manifest: DatasetManifest, path: PathLike) -> Path:
    """Write a manifest CSV; paths under the manifest directory are stored relative."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.to_record(path.parent) for row in manifest.rows], columns=MANIFEST_COLUMNS)
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote manifest {path} with {len(manifest)} rows")
    return path


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------

def _require_file(case_id: str, path: Path) -> None:
    if not Path(path).exists():
        raise MissingFileError(f"Case {case_id}: file not found: {path}")


def load_case(row: ManifestRow, num_classes: Optional[int] = None) -> CaseRecord:
    """Load and validate one case from a manifest row.

    Args:
        row: Manifest row
        num_classes: Label class count; defaults to 5 for 4-sequence (BraTS-style)
            images and 2 otherwise

    Raises:
        MissingFileError: a referenced file does not exist
        ShapeMismatchError: sequences, label or mask are not spatially aligned
        LabelRangeError: a label value is >= num_classes
    """
    required = [*row.image_paths, row.label_path]
    if row.mask_path:
        required.append(row.mask_path)
    for p in required:
        _require_file(row.case_id, p)

    channels = []
    spacing: Optional[Triple] = None
    origin: Optional[Triple] = None
    for seq_path in row.image_paths:
        array, seq_spacing, seq_origin = read_nifti(seq_path)
        stack = array[np.newaxis] if array.ndim == 3 else array
        if channels and stack.shape[1:] != channels[0].shape[1:]:
            raise ShapeMismatchError(
                f"Case {row.case_id}: sequence {seq_path} has shape {stack.shape[1:]}, "
                f"expected {channels[0].shape[1:]}"
            )
        if spacing is None:
            spacing, origin = seq_spacing, seq_origin
        channels.append(stack.astype(np.float32, copy=False))
    image = ImageVolume(np.concatenate(channels, axis=0), spacing=spacing, origin=origin)

    label_array, _, _ = read_nifti(row.label_path)
    if label_array.shape != image.spatial_shape:
        raise ShapeMismatchError(
            f"Case {row.case_id}: label shape {label_array.shape} differs from image shape {image.spatial_shape}"
        )
    if num_classes is None:
        num_classes = BRATS_NUM_CLASSES if image.num_sequences == BRATS_NUM_SEQUENCES else 2
    try:
        label = LabelVolume(label_array, num_classes=num_classes)
    except LabelRangeError as e:
        raise LabelRangeError(f"Case {row.case_id}: {e}") from e

    mask = None
    if row.mask_path:
        mask_array, _, _ = read_nifti(row.mask_path)
        mask = mask_array > 0

    return CaseRecord(
        case_id=row.case_id,
        image=image,
        label=label,
        brain_mask=mask,
        diagnosis=row.diagnosis,
        split=row.split,
    )


def load_cases(manifest: DatasetManifest, split: Optional[Union[str, Split]] = None,
               workers: int = 1, num_classes: Optional[int] = None) -> List[CaseRecord]:
    """Load manifest cases, optionally one split only, preserving manifest order."""
    rows = manifest.by_split(split).rows if split is not None else manifest.rows
    if workers <= 1 or len(rows) <= 1:
        return [load_case(row, num_classes) for row in rows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: load_case(r, num_classes), rows))


def write_case(case: CaseRecord, out_dir: PathLike) -> ManifestRow:
    """Write a case as NIfTI files under out_dir.

    Each sequence becomes <case_id>_seq<k>.nii.gz; the label <case_id>_label.nii.gz
    and the mask, when present, <case_id>_mask.nii.gz.
    """
    out_dir = Path(out_dir)
    spacing, origin = case.image.spacing, case.image.origin
    image_paths = tuple(
        write_nifti(case.image.data[k], out_dir / f"{case.case_id}_seq{k}.nii.gz", spacing, origin)
        for k in range(case.image.num_sequences)
    )
    label_path = write_nifti(case.label.data, out_dir / f"{case.case_id}_label.nii.gz", spacing, origin)
    mask_path = None
    if case.brain_mask is not None:
        mask_path = write_nifti(case.brain_mask.astype(np.uint8), out_dir / f"{case.case_id}_mask.nii.gz",
                                spacing, origin)
    return ManifestRow(
        case_id=case.case_id,
        image_paths=image_paths,
        label_path=label_path,
        mask_path=mask_path,
        diagnosis=case.diagnosis,
        split=case.split,
    )
