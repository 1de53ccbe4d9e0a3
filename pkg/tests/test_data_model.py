import numpy as np
import pytest

from lesionbench.data_model import (
    CaseRecord,
    DatasetManifest,
    Diagnosis,
    ImageVolume,
    LabelVolume,
    Split,
    load_case,
    load_cases,
    load_manifest,
    write_case,
    write_manifest,
    write_nifti,
)
from lesionbench.errors import DataError, LabelRangeError, ManifestError, MissingFileError, ShapeMismatchError
from tests.conftest import make_case

HEADER = "case_id,image_path,label_path,mask_path,diagnosis,split\n"


def test_image_volume_adds_channel_axis_and_rejects_bad_spacing():
    image = ImageVolume(np.zeros((4, 5, 6)), spacing=(2, 1, 1))
    assert image.num_sequences == 1
    assert image.spatial_shape == (4, 5, 6)
    with pytest.raises(DataError):
        ImageVolume(np.zeros((4, 5, 6)), spacing=(0, 1, 1))
    with pytest.raises(DataError):
        ImageVolume(np.full((2, 2, 2), np.nan))


def test_label_volume_range_is_checked():
    with pytest.raises(LabelRangeError):
        LabelVolume(np.full((2, 2, 2), 2), num_classes=2)
    label = LabelVolume(np.array([[[0, 4]]]), num_classes=5)
    assert label.foreground.sum() == 1


def test_case_record_is_read_only_and_aligned():
    case = make_case()
    with pytest.raises(ValueError):
        case.image.data[0, 0, 0, 0] = 1.0
    with pytest.raises(ShapeMismatchError):
        CaseRecord("bad", ImageVolume(np.zeros((4, 4, 4))), LabelVolume(np.zeros((4, 4, 5))))


def test_write_then_load_case_is_bit_exact(tmp_path):
    case = make_case(shape=(8, 10, 12), channels=1)
    row = write_case(case, tmp_path)
    loaded = load_case(row)
    np.testing.assert_array_equal(loaded.image.data, case.image.data)
    np.testing.assert_array_equal(loaded.label.data, case.label.data)
    np.testing.assert_array_equal(loaded.brain_mask, case.brain_mask)
    assert loaded.image.spacing == case.image.spacing
    assert loaded.diagnosis == case.diagnosis


def test_load_case_brats_style_defaults_to_five_classes(tmp_path):
    rng = np.random.default_rng(0)
    label = rng.integers(0, 5, size=(6, 6, 6)).astype(np.uint8)
    case = CaseRecord("brats0", ImageVolume(rng.normal(size=(4, 6, 6, 6))), LabelVolume(label, 5),
                      diagnosis=Diagnosis.OTHER)
    loaded = load_case(write_case(case, tmp_path))
    assert loaded.image.num_sequences == 4
    assert loaded.num_classes == 5


def test_load_case_label_shape_mismatch(tmp_path):
    row = write_case(make_case(shape=(6, 6, 6)), tmp_path)
    write_nifti(np.zeros((6, 6, 7), dtype=np.uint8), row.label_path)
    with pytest.raises(ShapeMismatchError):
        load_case(row)


def test_load_case_missing_file(tmp_path):
    row = write_case(make_case(shape=(6, 6, 6)), tmp_path)
    row.label_path.unlink()
    with pytest.raises(MissingFileError):
        load_case(row)


def test_load_case_label_out_of_range(tmp_path):
    row = write_case(make_case(shape=(6, 6, 6)), tmp_path)
    write_nifti(np.full((6, 6, 6), 3, dtype=np.uint8), row.label_path)
    with pytest.raises(LabelRangeError, match="case0"):
        load_case(row, num_classes=2)


def test_load_manifest_three_rows(tmp_path):
    text = HEADER + "".join(f"c{i},c{i}.nii.gz,c{i}_label.nii.gz,,meningioma,train\n" for i in range(3))
    path = tmp_path / "manifest.csv"
    path.write_text(text)
    manifest = load_manifest(path)
    assert manifest.case_ids == ["c0", "c1", "c2"]
    assert manifest.rows[0].image_paths == (tmp_path / "c0.nii.gz",)
    assert manifest.rows[0].mask_path is None
    assert manifest.rows[0].diagnosis == Diagnosis.MENINGIOMA


def test_load_manifest_duplicate_id_names_it(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text(HEADER + "dup,a.nii,a_l.nii,,avm,train\ndup,b.nii,b_l.nii,,avm,test\n")
    with pytest.raises(ManifestError, match="dup"):
        load_manifest(path)


def test_load_manifest_unknown_diagnosis(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text(HEADER + "g1,a.nii,a_l.nii,,glioma,train\n")
    with pytest.raises(ManifestError, match="glioma"):
        load_manifest(path)


def test_load_manifest_bad_header(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("id,image\nx,y\n")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_multi_sequence_paths_are_split_on_semicolon(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text(HEADER + "b1,t1.nii;t1c.nii;t2.nii;flair.nii,ot.nii,,other,test\n")
    row = load_manifest(path).rows[0]
    assert [p.name for p in row.image_paths] == ["t1.nii", "t1c.nii", "t2.nii", "flair.nii"]
    assert row.split == Split.TEST


def test_manifest_round_trip_keeps_split_partition(manifest_on_disk):
    manifest = load_manifest(manifest_on_disk)
    train = set(manifest.by_split("train").case_ids)
    test = set(manifest.by_split(Split.TEST).case_ids)
    assert train.isdisjoint(test)
    assert train | test == set(manifest.case_ids)

    copy_path = write_manifest(manifest, manifest_on_disk.parent / "copy.csv")
    assert load_manifest(copy_path).case_ids == manifest.case_ids


def test_load_cases_preserves_order_with_workers(manifest_on_disk):
    manifest = load_manifest(manifest_on_disk)
    serial = load_cases(manifest)
    parallel = load_cases(manifest, workers=3)
    assert [c.case_id for c in parallel] == [c.case_id for c in serial] == manifest.case_ids


def test_in_memory_manifest_rejects_duplicates(tmp_path):
    row = write_case(make_case(shape=(4, 4, 4)), tmp_path)
    with pytest.raises(ManifestError):
        DatasetManifest([row, row])
