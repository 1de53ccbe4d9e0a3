import numpy as np
import pytest
from scipy.stats import chisquare

from lesionbench.data_model import CaseRecord, ImageVolume, LabelVolume
from lesionbench.errors import SamplingError
from lesionbench.sampling import (
    PatchSpec,
    reassemble,
    sample_center_patch,
    sample_three_dim,
    sample_two_dim,
    sample_uniform_patch,
    samplers,
    tile_for_inference,
)
from tests.conftest import make_case


def _case_with_voxels(shape, voxels, mask=None):
    label = np.zeros(shape, dtype=np.uint8)
    for v in voxels:
        label[v] = 1
    image = np.arange(np.prod(shape), dtype=np.float32).reshape(shape)
    return CaseRecord("c", ImageVolume(image), LabelVolume(label), mask)


def test_registry_keys_and_aliases():
    assert set(samplers.keys()) == {"two_dim", "three_dim", "uniform_patch", "center_patch"}
    assert samplers.resolve("uniform_patch3d") == "uniform_patch"
    assert samplers.resolve("center_patch3d") == "center_patch"
    assert samplers.info("two_dim").dims == 2
    assert samplers.info("center_patch").patched
    with pytest.raises(SamplingError):
        samplers.resolve("random_slices")


def test_two_dim_yields_every_slice_in_order():
    case = make_case(shape=(12, 8, 8))
    slices = list(sample_two_dim(case))
    assert [k for k, _, _ in slices] == list(range(12))
    for k, image_slice, label_slice in slices:
        assert image_slice.shape == (1, 8, 8)
        np.testing.assert_array_equal(label_slice, case.label.data[k])
    restacked = np.stack([s for _, s, _ in slices], axis=1)
    np.testing.assert_array_equal(restacked, case.image.data)


def test_three_dim_returns_arrays_unchanged():
    case = make_case(shape=(8, 8, 8))
    image, label = sample_three_dim(case)
    assert image is case.image.data
    np.testing.assert_array_equal(label, case.label.data)
    assert image.shape[1:] == label.shape


def test_uniform_patch_single_valid_position():
    case = make_case(shape=(16, 16, 16))
    batch = sample_uniform_patch(case, PatchSpec((16, 16, 16)), n=5, seed=0)
    assert (batch.origins == 0).all()
    assert batch.patches.shape == (5, 1, 16, 16, 16)


def test_uniform_patch_is_deterministic():
    case = make_case(shape=(20, 20, 20))
    a = sample_uniform_patch(case, PatchSpec((8, 8, 8)), n=8, seed=11)
    b = sample_uniform_patch(case, PatchSpec((8, 8, 8)), n=8, seed=11)
    np.testing.assert_array_equal(a.origins, b.origins)
    np.testing.assert_array_equal(a.patches, b.patches)


def test_uniform_patch_origin_marginals_are_uniform():
    case = make_case(shape=(24, 24, 24))
    batch = sample_uniform_patch(case, PatchSpec((8, 8, 8)), n=10000, seed=5)
    for axis in range(3):
        counts = np.bincount(batch.origins[:, axis], minlength=17)
        assert len(counts) == 17
        assert chisquare(counts).pvalue > 0.01


def test_uniform_patch_restricted_to_mask_centers():
    shape = (20, 20, 20)
    mask = np.zeros(shape, dtype=bool)
    mask[8:12, 8:12, 8:12] = True
    case = _case_with_voxels(shape, [(10, 10, 10)], mask)
    batch = sample_uniform_patch(case, PatchSpec((6, 6, 6), restrict_to_mask=True), n=200, seed=0)
    centers = batch.origins + 3
    assert mask[tuple(centers.T)].all()


def test_uniform_patch_errors():
    case = make_case(shape=(8, 8, 8), with_mask=False)
    with pytest.raises(SamplingError):
        sample_uniform_patch(case, PatchSpec((16, 8, 8)), n=1, seed=0)
    with pytest.raises(SamplingError):
        sample_uniform_patch(case, PatchSpec((4, 4, 4), restrict_to_mask=True), n=1, seed=0)


def test_center_patch_contains_the_single_foreground_voxel():
    case = _case_with_voxels((20, 20, 20), [(3, 17, 9)])
    batch = sample_center_patch(case, PatchSpec((8, 8, 8)), n=100, seed=2)
    lo = batch.origins
    assert ((lo <= (3, 17, 9)) & ((3, 17, 9) < lo + 8)).all()
    assert all(labels.sum() == 1 for labels in batch.labels)


def test_center_patch_always_hits_sparse_foreground():
    # foreground fraction 0.001: 32 voxels in a 32^3 volume
    rng = np.random.default_rng(0)
    flat = rng.choice(32 ** 3, size=32, replace=False)
    voxels = [tuple(int(v) for v in np.unravel_index(i, (32, 32, 32))) for i in flat]
    case = _case_with_voxels((32, 32, 32), voxels)
    batch = sample_center_patch(case, PatchSpec((8, 8, 8)), n=1000, seed=9)
    assert sum(int(labels.any()) for labels in batch.labels) == 1000

    uniform = sample_uniform_patch(case, PatchSpec((8, 8, 8)), n=1000, seed=9)
    assert sum(int(labels.any()) for labels in uniform.labels) < 1000


def test_center_patch_rejects_all_background():
    case = _case_with_voxels((8, 8, 8), [])
    with pytest.raises(SamplingError):
        sample_center_patch(case, PatchSpec((4, 4, 4)), n=3, seed=0)


def test_tile_exact_partition_round_trips():
    case = make_case(shape=(32, 32, 32))
    tiles = tile_for_inference(case, PatchSpec((16, 16, 16)))
    assert len(tiles) == 8
    np.testing.assert_array_equal(reassemble(tiles.patches, tiles.origins, tiles.source_shape), case.image.data)


def test_tile_clamps_the_last_window():
    case = make_case(shape=(100, 100, 100))
    tiles = tile_for_inference(case, PatchSpec((64, 64, 64)))
    assert len(tiles) == 8
    assert set(np.unique(tiles.origins)) == {0, 36}
    covered = np.zeros((100, 100, 100), dtype=bool)
    for z, y, x in tiles.origins:
        covered[z:z + 64, y:y + 64, x:x + 64] = True
    assert covered.all()


def test_reassemble_averages_full_overlap():
    p = np.full((1, 2, 4, 4, 4), 0.2)
    p[:, 1] = 0.8
    q = np.full((1, 2, 4, 4, 4), 0.6)
    q[:, 1] = 0.4
    out = reassemble(np.concatenate([p, q]), [(0, 0, 0), (0, 0, 0)], (4, 4, 4))
    np.testing.assert_allclose(out[0], 0.4)
    np.testing.assert_allclose(out[1], 0.6)


def test_reassemble_matches_brute_force_on_random_covers():
    rng = np.random.default_rng(3)
    shape, size = (32, 32, 32), (8, 12, 10)
    origins = np.stack([rng.integers(0, s - p + 1, size=40) for s, p in zip(shape, size)], axis=1)
    predictions = rng.random((40, 3, *size))

    sums = np.zeros((3, *shape))
    counts = np.zeros(shape)
    for pred, (z, y, x) in zip(predictions, origins):
        sums[:, z:z + size[0], y:y + size[1], x:x + size[2]] += pred
        counts[z:z + size[0], y:y + size[1], x:x + size[2]] += 1
    expected = np.zeros_like(sums)
    covered = counts > 0
    expected[:, covered] = sums[:, covered] / counts[covered]
    expected[0, ~covered] = 1.0

    np.testing.assert_allclose(reassemble(predictions, origins, shape), expected, atol=1e-6)


def test_reassemble_rejects_out_of_bounds_origin():
    with pytest.raises(SamplingError):
        reassemble(np.zeros((1, 2, 4, 4, 4)), [(1, 0, 0)], (4, 4, 4))
