import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eccstream.index import (
    DENSE_U8,
    IndexKind,
    bin_of,
    bins_of,
    build_index,
    float32_from_keys,
    float32_keys,
    ordered_index,
    present_u8,
)


def test_build_index_sorted_distinct():
    index = build_index([3.5, 1.0, 3.5, 2.0])
    assert index.values.tolist() == [1.0, 2.0, 3.5]
    assert index.kind is IndexKind.SPARSE


def test_build_index_single():
    assert build_index([7]).values.tolist() == [7]


def test_build_index_random_matches_sort_dedup(rng):
    values = rng.random(1000).astype(np.float32)
    values[::7] = values[0]
    expected = sorted(set(values.tolist()))
    index = build_index(values)
    assert index.values.tolist() == expected
    assert np.all(np.diff(index.values) > 0)


@pytest.mark.parametrize("bad", [[], [1.0, np.nan], [np.inf]])
def test_build_index_errors(bad):
    with pytest.raises(ValueError):
        build_index(np.array(bad, dtype=np.float64))


def test_bin_of_examples():
    assert bin_of(2.0, build_index([1.0, 2.0, 3.5])) == 1
    assert bin_of(200, DENSE_U8) == 200
    assert len(DENSE_U8) == 256


def test_bin_of_absent():
    with pytest.raises(KeyError):
        bin_of(1.5, build_index([1.0, 2.0]))
    with pytest.raises(KeyError):
        bin_of(256, DENSE_U8)


def test_bin_of_exhaustive(rng):
    index = build_index(rng.standard_normal(512).astype(np.float32))
    assert len(index) == 512
    for v in index.values:
        assert index.values[bin_of(v, index)] == v
    assert np.array_equal(bins_of(index.values, index), np.arange(512))


def test_present_u8_matches_build_index(rng):
    values = rng.integers(0, 40, (5, 6, 7)).astype(np.int16)
    assert present_u8(values) == build_index(values)


def test_lookup_table():
    index = present_u8(np.array([3, 9, 3], np.int16))
    assert index.lookup[3] == 0 and index.lookup[9] == 1 and index.lookup[4] == -1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False), min_size=1, max_size=60))
def test_index_monotone_and_idempotent(values):
    index = build_index(np.array(values, np.float32))
    assert build_index(index.values) == index
    bins = bins_of(index.values, index)
    assert np.all(np.diff(bins) > 0)
    keys = float32_keys(index.values)
    assert np.all(np.diff(keys.astype(np.int64)) > 0)


def test_ordered_index_groups_voxels(rng):
    block = rng.choice(np.array([-1.5, 0.0, 0.25, 3.0], np.float32), (4, 5, 6))
    index, order = ordered_index(block)
    assert index == build_index(block)
    assert order.starts[0] == 0 and order.starts[-1] == block.size
    flat = block.ravel()
    for b, v in enumerate(index.values):
        group = order.positions[order.starts[b]:order.starts[b + 1]]
        assert np.all(flat[group] == v)
        assert np.all(np.diff(group.astype(np.int64)) > 0)
    assert sorted(order.positions.tolist()) == list(range(block.size))


def test_ordered_index_strided_view(rng):
    base = rng.standard_normal((6, 7, 8)).astype(np.float32)
    view = base[1:-1, 1:-1, 1:-1]
    index, order = ordered_index(view)
    assert np.array_equal(index.values, np.unique(view))
    assert np.array_equal(view.ravel()[order.positions[order.starts[:-1]]], index.values)


def test_ordered_index_rejects_bad_input():
    with pytest.raises(ValueError):
        ordered_index(np.zeros((2, 2), np.float32))
    with pytest.raises(ValueError):
        ordered_index(np.zeros((0, 2, 2), np.float32))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False), min_size=1, max_size=50))
def test_float32_keys_invert(values):
    v = np.array(values, np.float32) + np.float32(0.0)
    assert np.array_equal(float32_from_keys(float32_keys(v)).view(np.uint32), v.view(np.uint32))
