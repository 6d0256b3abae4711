#!/usr/bin/env python3
"""
Domain-label algebra: one-hot construction, append/split/replace round trips
and the batched helpers used in training
"""

import numpy as np
import pytest

from src.autodiff import DiffTensor
from src.conditioning import (
    CLEAN_INDEX,
    DomainLabel,
    ExtendedFeature,
    append_label,
    append_label_batch,
    label_block,
    make_label,
    replace_label,
    replace_label_rows,
    split_label,
    split_label_rows,
    validate_label_batch,
)
from src.errors import LabelDimensionError, ShapeError


def test_clean_label_is_index_zero():
    label = make_label(CLEAN_INDEX, 5)
    assert label.dim == 6
    assert label.is_clean
    assert label.is_one_hot()
    np.testing.assert_array_equal(label.vec, [1, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("index", range(6))
def test_every_domain_is_one_hot(index):
    label = make_label(index, 5)
    assert label.index == index
    assert label.vec.sum() == 1.0
    assert label.is_clean == (index == 0)


def test_out_of_range_index_is_rejected():
    with pytest.raises(LabelDimensionError):
        make_label(6, 5)
    with pytest.raises(LabelDimensionError):
        make_label(-1, 5)
    with pytest.raises(LabelDimensionError):
        DomainLabel(np.zeros(3, dtype=np.float32), 5)


def test_extended_dimension_for_257_bins_and_five_noise_types():
    features = np.random.default_rng(0).standard_normal((257, 64)).astype(np.float32)
    ext = append_label(features, make_label(3, 5))
    assert ext.matrix.shape == (263, 64)
    assert ext.n_label_rows == 6
    assert ext.n_feature_rows == 257
    assert np.all(ext.label_rows[3] == 1.0)
    assert np.all(np.delete(ext.label_rows, 3, axis=0) == 0.0)


def test_append_split_round_trip_is_bit_exact():
    rng = np.random.default_rng(1)
    features = rng.standard_normal((10, 7)).astype(np.float32)
    label = make_label(2, 4)
    recovered, rows = split_label(append_label(features, label))
    assert recovered.tobytes() == features.tobytes()
    np.testing.assert_array_equal(rows, np.repeat(label.vec[:, None], 7, axis=1))


def test_replace_then_split_returns_new_label_and_same_features():
    rng = np.random.default_rng(2)
    features = rng.standard_normal((10, 3)).astype(np.float32)
    ext = append_label(features, make_label(1, 3))
    swapped = replace_label(ext, make_label(0, 3))
    recovered, rows = split_label(swapped)
    assert recovered.tobytes() == features.tobytes()
    assert np.all(rows[0] == 1.0) and np.all(rows[1:] == 0.0)
    assert np.all(ext.label_rows[1] == 1.0)


def test_replace_with_wrong_dimension_fails():
    ext = append_label(np.zeros((4, 2)), make_label(0, 3))
    with pytest.raises(LabelDimensionError):
        replace_label(ext, make_label(0, 4))


def test_single_frame_features():
    ext = append_label(np.ones((5, 1)), make_label(1, 2))
    assert ext.matrix.shape == (8, 1)


def test_degenerate_shapes():
    with pytest.raises(ShapeError):
        append_label(np.ones((5, 0)), make_label(0, 1))
    with pytest.raises(ShapeError):
        ExtendedFeature(np.ones((2, 4)), n_noise=2)


def test_predicted_label_rows_are_kept_as_produced():
    matrix = np.vstack([np.full((3, 4), 0.3), np.ones((5, 4))])
    _, rows = split_label(ExtendedFeature(matrix, 2))
    np.testing.assert_allclose(rows, 0.3)


def test_label_block_and_batch_append():
    block = label_block([0, 2], 2, 4)
    assert block.shape == (2, 1, 3, 4)
    assert np.all(block[0, 0, 0] == 1) and np.all(block[1, 0, 2] == 1)
    features = np.random.default_rng(3).standard_normal((2, 6, 4)).astype(np.float32)
    images = append_label_batch(features, [0, 2], 2)
    assert images.shape == (2, 1, 9, 4)
    feats, rows = split_label_rows(images, 2)
    np.testing.assert_array_equal(feats[:, 0], features)
    np.testing.assert_array_equal(rows, block)
    validate_label_batch(images, 2)


def test_replace_label_rows_blocks_gradients_to_labels():
    x = DiffTensor(np.random.default_rng(4).standard_normal((2, 1, 7, 3)), requires_grad=True, dtype=np.float64)
    y = replace_label_rows(x, [1, 0], 2)
    np.testing.assert_array_equal(y.data[:, :, :3], label_block([1, 0], 2, 3))
    np.testing.assert_array_equal(y.data[:, :, 3:], x.data[:, :, 3:])
    y.sum().backward()
    assert np.all(x.grad[:, :, :3] == 0)
    assert np.all(x.grad[:, :, 3:] == 1)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b.__setitem__((0, 0, 0, 0), 0.5),
        lambda b: b.__setitem__((0, 0, 1, 0), 1.0),
        lambda b: b.__setitem__((1, 0, slice(0, 3), 2), [0.0, 1.0, 0.0]),
    ],
)
def test_validate_label_batch_rejects_bad_labels(mutate):
    batch = append_label_batch(np.zeros((2, 4, 3), dtype=np.float32), [0, 2], 2)
    mutate(batch)
    with pytest.raises(LabelDimensionError):
        validate_label_batch(batch, 2)


def test_validate_label_batch_dimension():
    batch = append_label_batch(np.zeros((1, 4, 3), dtype=np.float32), [0], 2)
    with pytest.raises(LabelDimensionError):
        validate_label_batch(batch[:, :, :3], 3)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
