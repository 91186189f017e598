import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eccstream.grid import Image
from eccstream.oracle import build_cell_grid, naive_ecc

from conftest import random_image


def test_single_voxel_2d_has_nine_cells():
    grid = build_cell_grid(Image.from_array(np.array([[4.0]], np.float32)))
    assert grid.values.shape == (3, 3)
    assert np.all(grid.values == 4.0)
    assert [grid.count(j) for j in range(3)] == [4, 4, 1]


def test_two_voxels_2d_have_fifteen_cells():
    grid = build_cell_grid(Image.from_array(np.array([[1.0, 2.0]], np.float32)))
    assert grid.values.size == 15
    assert [grid.count(j) for j in range(3)] == [6, 7, 2]
    # the shared edge and its vertices take the smaller value
    assert grid.values[:, 2].tolist() == [1.0, 1.0, 1.0]
    assert grid.values[:, 4].tolist() == [2.0, 2.0, 2.0]


def test_two_voxels_3d():
    grid = build_cell_grid(Image.from_array(np.array([[[1.0, 2.0]]], np.float32)))
    assert grid.values.shape == (3, 3, 5)
    assert [grid.count(j) for j in range(4)] == [12, 20, 11, 2]
    assert [grid.count(j, 1.0) for j in range(4)] == [8, 12, 6, 1]
    assert grid.euler(1.0) == grid.euler(2.0) == 1


def test_cell_value_is_min_of_cofaces(rng):
    data = rng.integers(0, 9, (3, 4)).astype(np.float32)
    grid = build_cell_grid(Image.from_array(data))
    for x in range(grid.values.shape[0]):
        for y in range(grid.values.shape[1]):
            rows = [r for r in ((x - 1) // 2, x // 2) if 0 <= r < 3 and 2 * r + 1 in (x - 1, x, x + 1)]
            cols = [c for c in ((y - 1) // 2, y // 2) if 0 <= c < 4 and 2 * c + 1 in (y - 1, y, y + 1)]
            expected = min(data[r, c] for r in set(rows) for c in set(cols))
            assert grid.values[x, y] == expected


@pytest.mark.parametrize("data,expected", [
    ([[1, 2], [3, 4]], [(1.0, 1), (2.0, 1), (3.0, 1), (4.0, 1)]),
    ([[0, 0, 0], [0, 9, 0], [0, 0, 0]], [(0.0, 0), (9.0, 1)]),
    ([[0, 1], [1, 0]], [(0.0, 1), (1.0, 1)]),
    ([[0, 1, 0]], [(0.0, 2), (1.0, 1)]),
])
def test_naive_examples(data, expected):
    assert naive_ecc(Image.from_array(np.array(data, np.float32))).points == expected


def test_naive_final_value_is_one(rng):
    for dims in [(4, 5), (3, 4, 5)]:
        assert naive_ecc(random_image(rng, dims, n_values=3)).chi[-1] == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n_values=st.integers(1, 4))
def test_sublevel_cells_monotone(seed, n_values):
    image = random_image(np.random.default_rng(seed), (3, 3, 2), n_values=n_values)
    grid = build_cell_grid(image)
    ts = np.unique(image.values)
    for j in range(4):
        counts = [grid.count(j, t) for t in ts]
        assert counts == sorted(counts)
    # every face of a present cell is present: compare each cell to its max
    # over voxels, which is never exceeded
    assert grid.values.max() <= image.values.max()


def test_single_voxel_as_volume():
    image = Image.from_array(np.full((1, 1, 1), 3.0, np.float32))
    grid = build_cell_grid(image, ndim=3)
    assert [grid.count(j) for j in range(4)] == [8, 12, 6, 1]
    assert naive_ecc(image, ndim=3).points == naive_ecc(image).points == [(3.0, 1)]
    with pytest.raises(ValueError):
        build_cell_grid(Image.from_array(np.zeros((2, 2, 2), np.float32)), ndim=2)
