"""
Mapping of grayscale values to dense histogram bins.

8-bit data uses the identity mapping over 256 implicit bins. Any other data
uses a sorted list of the distinct values, and a value's bin is its position
in that list.

For float32 chunks :func:`ordered_index` also returns the voxels grouped by
bin (a :class:`BinOrder`). Building it costs one sort, the same as finding
the distinct values. With it, a kernel can bin its voxels in one pass
instead of one search per voxel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numba as nb
import numpy as np


class IndexKind(enum.Enum):
    DENSE_U8 = "dense_u8"
    SPARSE = "sparse"


@dataclass(frozen=True, eq=False)
class ValueIndex:
    values: np.ndarray
    kind: IndexKind = IndexKind.SPARSE

    def __len__(self):
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, ValueIndex):
            return NotImplemented
        return (self.kind is other.kind and self.values.dtype == other.values.dtype
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"ValueIndex(kind={self.kind.name}, bins={len(self)})"

    @cached_property
    def keys(self) -> np.ndarray:
        """Order-preserving unsigned keys of the values (float32 only)."""
        return float32_keys(self.values)

    @cached_property
    def lookup(self) -> np.ndarray:
        """Table from integer value ``v`` in ``[0, 256]`` to bin, -1 if absent.

        Only defined for integer indexes whose values fit 8 bits.
        """
        table = np.full(257, -1, dtype=np.int64)
        table[self.values.astype(np.int64)] = np.arange(len(self))
        return table


DENSE_U8 = ValueIndex(np.arange(256, dtype=np.int16), IndexKind.DENSE_U8)


def float32_keys(values: np.ndarray) -> np.ndarray:
    """Map float32 values to uint32 keys with the same ordering.

    Negative floats have all bits flipped, non-negative floats get the sign bit
    set. NaN is not supported and ``-0.0`` must have been canonicalized.
    """
    bits = np.ascontiguousarray(values, dtype=np.float32).view(np.uint32)
    negative = (bits >> 31).astype(bool)
    return np.where(negative, ~bits, bits | np.uint32(0x80000000))


def build_index(values) -> ValueIndex:
    """Sorted distinct values of ``values`` as a SPARSE index.

    Raises
    ------
    ValueError
        On empty input or non-finite values.
    """
    arr = np.asarray(values)
    if arr.size == 0:
        raise ValueError("cannot build a value index from no values")
    if arr.dtype.kind == "f":
        if not np.isfinite(arr).all():
            raise ValueError("value index requires finite values (NaN/inf found)")
        arr = arr + 0.0
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"unsupported value dtype {arr.dtype}")
    return ValueIndex(np.unique(arr.ravel()), IndexKind.SPARSE)


@dataclass(frozen=True, eq=False)
class BinOrder:
    """Voxels grouped by bin.

    ``positions[starts[b]:starts[b + 1]]`` are the row-major positions, within
    the indexed block, of the voxels whose value falls in bin ``b``.
    """

    positions: np.ndarray  # uint32
    starts: np.ndarray  # int64, length bins + 1

    @property
    def nbytes(self) -> int:
        return int(self.positions.nbytes + self.starts.nbytes)


@nb.njit(nogil=True, cache=True)
def _pack_keys(block, out):
    # (order key << 32) | row-major position
    L, W1, W2 = block.shape
    t = 0
    for i in range(L):
        for j in range(W1):
            for k in range(W2):
                bits = np.float32(block[i, j, k]).view(np.uint32)
                if bits >> np.uint32(31):
                    key = ~bits
                else:
                    key = bits | np.uint32(0x80000000)
                out[t] = (np.uint64(key) << np.uint64(32)) | np.uint64(t)
                t += 1


@nb.njit(nogil=True, cache=True)
def _split_packed(packed):
    n = packed.size
    m = 0
    prev = np.uint64(0)
    for t in range(n):
        key = packed[t] >> np.uint64(32)
        if t == 0 or key != prev:
            m += 1
            prev = key
    keys = np.empty(m, np.uint32)
    starts = np.empty(m + 1, np.int64)
    positions = np.empty(n, np.uint32)
    b = -1
    for t in range(n):
        w = packed[t]
        key = w >> np.uint64(32)
        if b < 0 or key != prev:
            b += 1
            keys[b] = np.uint32(key)
            starts[b] = t
            prev = key
        positions[t] = np.uint32(w & np.uint64(0xFFFFFFFF))
    starts[m] = n
    return keys, starts, positions


def float32_from_keys(keys: np.ndarray) -> np.ndarray:
    """Inverse of :func:`float32_keys`."""
    keys = np.asarray(keys, dtype=np.uint32)
    negative = (keys >> 31) == 0
    bits = np.where(negative, ~keys, keys & np.uint32(0x7FFFFFFF))
    return bits.view(np.float32)


def ordered_index(block: np.ndarray):
    """SPARSE index of a 3D float32 block plus its :class:`BinOrder`.

    ``block`` may be a strided view; positions are row-major within it. The
    values must be finite with ``-0.0`` canonicalized, as guaranteed for
    loaded images. At most ``2**32`` voxels are supported.
    """
    block = np.asarray(block)
    if block.ndim != 3 or block.dtype != np.float32:
        raise ValueError("ordered_index expects a 3D float32 block")
    if block.size == 0:
        raise ValueError("cannot build a value index from no values")
    if block.size > 2 ** 32:
        raise ValueError("block too large for 32-bit positions")
    packed = np.empty(block.size, dtype=np.uint64)
    _pack_keys(block, packed)
    packed.sort()
    keys, starts, positions = _split_packed(packed)
    del packed
    index = ValueIndex(float32_from_keys(keys), IndexKind.SPARSE)
    index.__dict__["keys"] = keys  # prime the cached property
    return index, BinOrder(positions, starts)


def present_u8(values: np.ndarray) -> ValueIndex:
    """SPARSE index of the 8-bit values that occur in ``values``.

    Equivalent to :func:`build_index` but linear time, via a 256-bin count.
    """
    counts = np.bincount(np.asarray(values, dtype=np.int64).ravel(), minlength=256)
    if counts.size > 256:
        raise ValueError("8-bit values must lie in [0, 255]")
    present = np.flatnonzero(counts).astype(np.int16)
    if present.size == 0:
        raise ValueError("cannot build a value index from no values")
    return ValueIndex(present, IndexKind.SPARSE)


def bin_of(value, index: ValueIndex) -> int:
    """Bin of ``value``; raises ``KeyError`` if the value is not indexed."""
    if index.kind is IndexKind.DENSE_U8:
        if value != int(value) or not 0 <= int(value) <= 255:
            raise KeyError(f"value {value!r} is outside the 8-bit range")
        return int(value)
    pos = int(np.searchsorted(index.values, value))
    if pos == len(index) or index.values[pos] != value:
        raise KeyError(f"value {value!r} not present in index")
    return pos


def bins_of(values, index: ValueIndex) -> np.ndarray:
    """Vectorized :func:`bin_of`."""
    values = np.asarray(values)
    if index.kind is IndexKind.DENSE_U8:
        bins = values.astype(np.int64)
        if bins.size and (bins.min() < 0 or bins.max() > 255 or np.any(bins != values)):
            raise KeyError("values outside the 8-bit range")
        return bins
    bins = np.searchsorted(index.values, values)
    clipped = np.minimum(bins, len(index) - 1)
    missing = (bins == len(index)) | (index.values[clipped] != values)
    if missing.any():
        raise KeyError(f"value {values.ravel()[np.flatnonzero(missing.ravel())[0]]!r} "
                       "not present in index")
    return bins
