"""
Import of a BraTS-2015 style dataset.

The expected tree has one directory per patient (under HGG/ and LGG/ or
directly under the root); each sequence and the ground truth live in their
own sub-directory holding one .mha file:

    <patient>/VSD.Brain.XX.O.MR_T1.<id>/VSD.Brain.XX.O.MR_T1.<id>.mha
    <patient>/VSD.Brain.XX.O.MR_T1c.<id>/...
    <patient>/VSD.Brain.XX.O.MR_T2.<id>/...
    <patient>/VSD.Brain.XX.O.MR_Flair.<id>/...
    <patient>/VSD.Brain_3more.XX.O.OT.<id>/...

Volumes are read with SimpleITK and written as NIfTI cases stacked
T1, T1c, T2, Flair with the five-class label. The volumes are already
skull-stripped, so the brain mask is the support of the sequences.
"""

import re
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import SimpleITK as sitk

from lesionbench.data_model import (
    BRATS_NUM_CLASSES,
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
from lesionbench.errors import DataError, MissingFileError
from lesionbench.utils.logger import logger
from lesionbench.utils.seeding import derive_seed

SEQUENCE_ORDER = ("T1", "T1c", "T2", "Flair")
_SEQUENCE_PATTERN = re.compile(r"\.MR_(T1|T1c|T2|Flair)\.", re.IGNORECASE)
_LABEL_PATTERN = re.compile(r"\.OT\.", re.IGNORECASE)


def read_mha(path: PathLike) -> Tuple[np.ndarray, Tuple[float, float, float], Tuple[float, float, float]]:
    """Read a volume as a (z, y, x) array with spacing and origin in the same order."""
    image = sitk.ReadImage(str(path))
    data = sitk.GetArrayFromImage(image)
    spacing = tuple(float(s) for s in reversed(image.GetSpacing()))
    origin = tuple(float(o) for o in reversed(image.GetOrigin()))
    return data, spacing, origin  # type: ignore[return-value]


def _classify(path: Path):
    match = _SEQUENCE_PATTERN.search(path.name)
    if match:
        token = match.group(1).lower()
        return next(s for s in SEQUENCE_ORDER if s.lower() == token)
    if _LABEL_PATTERN.search(path.name):
        return "OT"
    return None


def find_patients(root: PathLike) -> Dict[str, Dict[str, Path]]:
    """Map patient directory names to their sequence and label files, sorted by name."""
    patients: Dict[str, Dict[str, Path]] = {}
    for mha in sorted(Path(root).rglob("*.mha")):
        kind = _classify(mha)
        if kind is None:
            logger.debug(f"Skipping unrecognized file {mha}")
            continue
        # <patient>/<volume dir>/<file>.mha
        patient = mha.parent.parent.name
        patients.setdefault(patient, {})[kind] = mha
    return dict(sorted(patients.items()))


def load_patient(patient: str, files: Dict[str, Path], split: Split = Split.TRAIN) -> CaseRecord:
    missing = [kind for kind in (*SEQUENCE_ORDER, "OT") if kind not in files]
    if missing:
        raise MissingFileError(f"BraTS patient {patient} lacks: {', '.join(missing)}")

    channels: List[np.ndarray] = []
    spacing = origin = None
    for kind in SEQUENCE_ORDER:
        data, spacing, origin = read_mha(files[kind])
        channels.append(data.astype(np.float32))
    label, _, _ = read_mha(files["OT"])
    image = np.stack(channels)
    return CaseRecord(
        case_id=patient,
        image=ImageVolume(image, spacing=spacing, origin=origin),
        label=LabelVolume(label.astype(np.uint8), num_classes=BRATS_NUM_CLASSES),
        brain_mask=np.any(image != 0, axis=0),
        diagnosis=Diagnosis.OTHER,
        split=split,
    )


def import_brats(root: PathLike, out_dir: PathLike, test_fraction: float = 0.2, seed: int = 0) -> DatasetManifest:
    """Convert a BraTS tree to NIfTI cases and a manifest with a seeded train/test split.

    Raises:
        DataError: no patient found, or test_fraction outside [0, 1)
        MissingFileError: a patient lacks a sequence or the label
    """
    if not 0.0 <= test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    patients = find_patients(root)
    if not patients:
        raise DataError(f"No BraTS patients found under {root}")

    names = list(patients)
    rng = np.random.default_rng(derive_seed(seed, "brats_split"))
    num_test = int(round(test_fraction * len(names)))
    test_names = set(rng.permutation(names)[:num_test].tolist())

    out_dir = Path(out_dir)
    rows = []
    for name in names:
        split = Split.TEST if name in test_names else Split.TRAIN
        case = load_patient(name, patients[name], split)
        rows.append(write_case(case, out_dir))
        logger.info(f"Imported BraTS patient {name} ({split.value}), shape {case.spatial_shape}")
    manifest = DatasetManifest(rows)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
