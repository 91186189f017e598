"""
Brute-force ground truth for the ECC.

Every cell of the cubical complex is materialized on the doubled grid: a cell
of an image with dims ``(w0, w1[, w2])`` sits at a coordinate in
``(2*w0 + 1, 2*w1 + 1[, 2*w2 + 1])`` whose odd components are its
non-degenerate intervals. A cell's value is the minimum over the voxels that
contain it, and the Euler characteristic at a threshold is the alternating
count of cells at or below it. No tie-breaking is involved, which is what
makes this an independent check of the kernel. Test-sized inputs only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import EccCurve
from .grid import Image


@dataclass(frozen=True, eq=False)
class CellGrid:
    values: np.ndarray  # filtration value per cell, doubled-grid shape
    cell_dims: np.ndarray  # dimension per cell (number of odd coordinates)

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def count(self, dim: int, threshold=np.inf) -> int:
        return int(np.count_nonzero((self.cell_dims == dim) & (self.values <= threshold)))

    def euler(self, threshold) -> int:
        return sum((-1) ** j * self.count(j, threshold) for j in range(self.ndim + 1))


def _image_grid(image: Image, ndim) -> np.ndarray:
    if ndim is None:
        ndim = 2 if image.is_2d else 3
    if ndim not in (2, 3) or (ndim == 2 and not image.is_2d):
        raise ValueError(f"cannot view a {image.dims} image as {ndim}D")
    data = image.data[:, :, 0] if ndim == 2 else image.data
    return data.astype(np.float64)


def build_cell_grid(image: Image, ndim=None) -> CellGrid:
    """Cells of ``image`` with their filtration values.

    ``ndim=3`` treats an image with ``w2 == 1`` as a one-voxel-thick volume
    instead of a 2D image.
    """
    voxels = _image_grid(image, ndim)
    shape = tuple(2 * w + 1 for w in voxels.shape)
    values = np.full(shape, np.inf)
    values[tuple(slice(1, None, 2) for _ in shape)] = voxels
    # sweep axes one at a time; each even coordinate takes the min of its two
    # odd neighbours, so after all sweeps a cell holds the min over every voxel
    # containing it
    for axis in range(values.ndim):
        v = np.moveaxis(values, axis, 0)
        n = v.shape[0]
        for x in range(0, n, 2):
            lower = v[x - 1] if x > 0 else np.inf
            upper = v[x + 1] if x + 1 < n else np.inf
            v[x] = np.minimum(lower, upper)
    parity = np.indices(shape) % 2
    return CellGrid(values, parity.sum(axis=0).astype(np.int8))


def naive_ecc(image: Image, ndim=None) -> EccCurve:
    """ECC by counting cells at each distinct image value, O(m n)."""
    grid = build_cell_grid(image, ndim)
    thresholds = np.unique(image.values)
    chi = [grid.euler(float(t)) for t in thresholds]
    if thresholds.dtype.kind in "iu":
        thresholds = thresholds.astype(np.int64)
    return EccCurve(thresholds, np.array(chi, dtype=np.int64))
