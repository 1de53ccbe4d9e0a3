import numpy as np
import pytest

from lesionbench.augment import AugmentConfig, AugmentParams, apply_params, augment_slice, draw_params
from lesionbench.errors import AugmentError, ShapeMismatchError


def _slices(seed=0, shape=(32, 32)):
    rng = np.random.default_rng(seed)
    image = rng.normal(size=(2, *shape)).astype(np.float32)
    label = np.zeros(shape, dtype=np.uint8)
    label[10:20, 12:18] = 1
    label[22:26, 4:8] = 2
    return image, label


def test_identity_config_returns_input():
    image, label = _slices()
    config = AugmentConfig(max_shift_frac=0, max_rotate_deg=0, max_shear=0, zoom_range=(1, 1),
                           brightness_frac=0, elastic_alpha=0)
    assert config.is_identity
    out_image, out_label = augment_slice(image, label, config, seed=3)
    np.testing.assert_array_equal(out_image, image)
    np.testing.assert_array_equal(out_label, label)


def test_disabled_config_is_identity():
    image, label = _slices()
    out_image, out_label = augment_slice(image, label, AugmentConfig(enabled=False), seed=1)
    np.testing.assert_array_equal(out_image, image)
    np.testing.assert_array_equal(out_label, label)


def test_same_seed_gives_identical_outputs():
    image, label = _slices()
    first = augment_slice(image, label, AugmentConfig(), seed=42)
    second = augment_slice(image, label, AugmentConfig(), seed=42)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    other = augment_slice(image, label, AugmentConfig(), seed=43)
    assert not np.array_equal(first[0], other[0])


def test_quarter_turn_moves_pixel_to_rotated_coordinate():
    label = np.zeros((5, 5), dtype=np.uint8)
    label[1, 2] = 1
    image = label[np.newaxis].astype(np.float32)
    out_image, out_label = apply_params(image, label, AugmentParams(rotate_deg=90.0))
    assert out_label[2, 1] == 1
    assert out_label.sum() == 1
    assert out_image[0, 2, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_labels_keep_their_value_set_and_shapes(seed):
    image, label = _slices(seed)
    out_image, out_label = augment_slice(image, label, AugmentConfig(), seed=seed)
    assert out_image.shape == image.shape
    assert out_label.shape == label.shape
    assert set(np.unique(out_label)) <= set(np.unique(label))


def test_brightness_only_touches_the_image():
    image, label = _slices()
    out_image, out_label = apply_params(image, label, AugmentParams(brightness=0.25))
    np.testing.assert_allclose(out_image, image + 0.25, atol=1e-6)
    np.testing.assert_array_equal(out_label, label)


def test_draw_params_within_config_ranges():
    config = AugmentConfig(max_shift_frac=0.05, max_rotate_deg=5, zoom_range=(0.95, 1.05), elastic_alpha=0)
    params = draw_params(config, np.random.default_rng(7), (100, 80))
    assert abs(params.shift[0]) <= 5 and abs(params.shift[1]) <= 4
    assert abs(params.rotate_deg) <= 5
    assert 0.95 <= params.zoom <= 1.05
    assert params.elastic_seed is None


def test_invalid_config_and_misaligned_inputs():
    with pytest.raises(AugmentError):
        AugmentConfig(zoom_range=(1.2, 1.0))
    with pytest.raises(AugmentError):
        AugmentConfig(max_rotate_deg=-1)
    with pytest.raises(ShapeMismatchError):
        apply_params(np.zeros((1, 4, 4)), np.zeros((4, 5)), AugmentParams())
