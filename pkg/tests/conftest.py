"""Shared fixtures: tiny synthetic cases, manifests on disk and small model configs."""

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pytest

from lesionbench.data_model import (
    CaseRecord,
    DatasetManifest,
    Diagnosis,
    ImageVolume,
    LabelVolume,
    Split,
    write_case,
    write_manifest,
)
from lesionbench.models import ModelConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run multi-minute training experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_case(case_id: str = "case0", shape: Sequence[int] = (16, 16, 16), lesion: Optional[tuple] = None,
              diagnosis: Diagnosis = Diagnosis.METASTASIS, split: Split = Split.TRAIN, channels: int = 1,
              num_classes: int = 2, seed: int = 0, with_mask: bool = True) -> CaseRecord:
    """A case with a cubic lesion that is brighter than the noisy background.

    lesion is a (z0, z1, y0, y1, x0, x1) box; it defaults to a 4-voxel cube near the center.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    label = np.zeros(shape, dtype=np.uint8)
    if lesion is None:
        c = [s // 2 for s in shape]
        lesion = (c[0] - 2, c[0] + 2, c[1] - 2, c[1] + 2, c[2] - 2, c[2] + 2)
    z0, z1, y0, y1, x0, x1 = lesion
    label[z0:z1, y0:y1, x0:x1] = 1
    image = rng.normal(0.0, 0.1, size=(channels, *shape)).astype(np.float32)
    image[:, label > 0] += 1.0
    mask = np.ones(shape, dtype=bool) if with_mask else None
    return CaseRecord(case_id, ImageVolume(image), LabelVolume(label, num_classes), mask, diagnosis, split)


@pytest.fixture
def tiny_case() -> CaseRecord:
    return make_case()


@pytest.fixture
def tiny_cases():
    """Four train cases and two test cases of different diagnoses."""
    diagnoses = [Diagnosis.METASTASIS, Diagnosis.MENINGIOMA, Diagnosis.SCHWANNOMA,
                 Diagnosis.PITUITARY, Diagnosis.AVM, Diagnosis.METASTASIS]
    cases = []
    for i, diagnosis in enumerate(diagnoses):
        split = Split.TEST if i >= 4 else Split.TRAIN
        cases.append(make_case(f"case{i}", diagnosis=diagnosis, split=split, seed=i))
    return cases


@pytest.fixture
def manifest_on_disk(tmp_path: Path, tiny_cases):
    """The tiny cases written as NIfTI with a manifest.csv; returns the manifest path."""
    rows = [write_case(case, tmp_path / "data") for case in tiny_cases]
    return write_manifest(DatasetManifest(rows), tmp_path / "data" / "manifest.csv")


@pytest.fixture
def tiny_v_net() -> ModelConfig:
    return ModelConfig(arch="v_net", base_width=2, depth=2)
