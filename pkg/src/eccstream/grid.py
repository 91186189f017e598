"""
Image representation, raw volume I/O and padded chunk extraction.

Images are always stored as 3D arrays ``(w0, w1, w2)`` in row-major order;
a 2D image is encoded with ``w2 == 1``. Chunks are slabs along axis 0 that
carry a one-voxel collar on every side. Collar positions inside the image
hold the neighbouring voxel values, positions outside hold a sentinel that
compares greater than any finite value.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

Dims = Tuple[int, int, int]
PathLike = Union[str, os.PathLike]

SIDECAR_SUFFIX = ".meta"


class ValueKind(enum.Enum):
    """Voxel value kinds supported on disk."""

    U8 = "u8"
    F32 = "f32"

    @property
    def dtype(self) -> np.dtype:
        """In-memory dtype of image values."""
        return np.dtype(np.uint8) if self is ValueKind.U8 else np.dtype(np.float32)

    @property
    def storage_dtype(self) -> np.dtype:
        """Dtype of padded chunk storage; wide enough to hold the sentinel."""
        return np.dtype(np.int16) if self is ValueKind.U8 else np.dtype(np.float32)

    @property
    def sentinel(self):
        return 256 if self is ValueKind.U8 else np.inf

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    def file_dtype(self, big_endian: bool = False) -> np.dtype:
        if self is ValueKind.U8:
            return np.dtype("u1")
        return np.dtype(">f4" if big_endian else "<f4")

    @classmethod
    def parse(cls, value: Union[str, "ValueKind"]) -> "ValueKind":
        if isinstance(value, ValueKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown value kind {value!r}; expected 'u8' or 'f32'") from None


def normalize_dims(dims: Sequence[int]) -> Dims:
    """Return ``dims`` as a 3-tuple, appending ``w2 = 1`` for 2D input."""
    dims = tuple(int(w) for w in dims)
    if len(dims) == 2:
        dims = dims + (1,)
    if len(dims) != 3:
        raise ValueError(f"expected 2 or 3 dimensions, got {len(dims)}")
    if any(w < 1 for w in dims):
        raise ValueError(f"all dimensions must be >= 1, got {dims}")
    return dims


def check_values(values: np.ndarray, offset: int = 0) -> None:
    """Raise ``ValueError`` on NaN or infinite values.

    ``offset`` is added to the reported linear index, so slab-wise callers can
    report positions in the whole image.
    """
    if values.dtype.kind != "f":
        return
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        what = "NaN" if np.isnan(values.ravel()[first]) else "infinite value"
        raise ValueError(f"{what} at linear index {offset + first}")


def _canonical_zero(values: np.ndarray) -> np.ndarray:
    # -0.0 and +0.0 compare equal; merge them under one bit pattern
    if values.dtype.kind == "f":
        values += 0.0
    return values


@dataclass(frozen=True, eq=False)
class Image:
    """Dense row-major voxel grid.

    Attributes
    ----------
    data : ndarray
        Array of shape ``dims`` holding the voxel values (``uint8`` or
        ``float32``).
    kind : ValueKind
    """

    data: np.ndarray
    kind: ValueKind

    def __post_init__(self):
        kind = ValueKind.parse(self.kind)
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image must be 2D or 3D, got {data.ndim} dimensions")
        if data.size == 0:
            raise ValueError("image must be non-empty")
        check_values(data)
        if kind is ValueKind.U8 and data.dtype != np.uint8:
            if data.dtype.kind == "f" and not np.all(data == np.round(data)):
                raise ValueError("U8 images need integral values")
            if data.min() < 0 or data.max() > 255:
                raise ValueError("U8 values must lie in [0, 255]")
        data = _canonical_zero(np.ascontiguousarray(data, dtype=kind.dtype).copy())
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "kind", kind)

    @classmethod
    def from_array(cls, array, kind: Union[str, ValueKind, None] = None) -> "Image":
        """Build an image from a 2D or 3D array; the kind defaults from dtype."""
        array = np.asarray(array)
        if kind is None:
            kind = ValueKind.U8 if array.dtype == np.uint8 else ValueKind.F32
        return cls(array, ValueKind.parse(kind))

    @property
    def dims(self) -> Dims:
        return tuple(int(w) for w in self.data.shape)

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the voxel values."""
        return self.data.reshape(-1)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_2d(self) -> bool:
        return self.data.shape[2] == 1

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image(dims={self.dims}, kind={self.kind.name})"


def linear_index(coord: Sequence[int], dims: Sequence[int]) -> int:
    """Row-major linear index of ``coord`` (axis 0 most significant)."""
    dims = normalize_dims(dims)
    if len(coord) == 2:
        coord = tuple(coord) + (0,)
    if len(coord) != 3:
        raise ValueError(f"coordinate {coord} does not match dims {dims}")
    x0, x1, x2 = (int(x) for x in coord)
    w0, w1, w2 = dims
    if not (0 <= x0 < w0 and 0 <= x1 < w1 and 0 <= x2 < w2):
        raise IndexError(f"coordinate {tuple(coord)} out of range for dims {dims}")
    return x0 * w1 * w2 + x1 * w2 + x2


# -- raw files ---------------------------------------------------------------


def sidecar_path(path: PathLike) -> Path:
    return Path(str(path) + SIDECAR_SUFFIX)


def read_sidecar(path: PathLike) -> Tuple[Dims, ValueKind] | None:
    """Read ``<path>.meta`` (``w0 w1 w2 dtype``) if it exists."""
    meta = sidecar_path(path)
    if not meta.exists():
        return None
    fields = meta.read_text().split()
    if len(fields) != 4:
        raise ValueError(f"{meta}: expected 'w0 w1 w2 dtype', got {' '.join(fields)!r}")
    return normalize_dims(int(x) for x in fields[:3]), ValueKind.parse(fields[3])


def write_sidecar(path: PathLike, dims: Sequence[int], kind: Union[str, ValueKind]) -> Path:
    w0, w1, w2 = normalize_dims(dims)
    meta = sidecar_path(path)
    meta.write_text(f"{w0} {w1} {w2} {ValueKind.parse(kind).value}\n")
    return meta


def expected_nbytes(dims: Sequence[int], kind: ValueKind) -> int:
    w0, w1, w2 = normalize_dims(dims)
    return w0 * w1 * w2 * kind.itemsize


def load_raw(path: PathLike, dims: Sequence[int], kind: Union[str, ValueKind],
             big_endian: bool = False) -> Image:
    """Load a headerless row-major volume.

    Raises
    ------
    ValueError
        If the file size does not match ``dims`` or a value is NaN/infinite.
    """
    dims = normalize_dims(dims)
    kind = ValueKind.parse(kind)
    expected = expected_nbytes(dims, kind)
    actual = os.path.getsize(path)
    if actual != expected:
        raise ValueError(
            f"{path}: size mismatch, expected {expected} bytes for dims {dims} "
            f"{kind.value}, found {actual}"
        )
    raw = np.fromfile(path, dtype=kind.file_dtype(big_endian))
    check_values(raw)
    return Image(raw.astype(kind.dtype, copy=False).reshape(dims), kind)


def write_raw(image: Image, path: PathLike, big_endian: bool = False,
              sidecar: bool = False) -> None:
    image.values.astype(image.kind.file_dtype(big_endian), copy=False).tofile(path)
    if sidecar:
        write_sidecar(path, image.dims, image.kind)


# -- padded chunks -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PaddedChunk:
    """Slab ``[a, b)`` of an image along axis 0 plus a one-voxel collar.

    ``storage`` has shape ``(b - a + 2, w1 + 2, w2 + 2)``; padded coordinate
    ``(i + 1, j + 1, k + 1)`` holds image voxel ``(a + i, j, k)``.
    """

    owned_range: Tuple[int, int]
    dims: Dims
    kind: ValueKind
    storage: np.ndarray

    @property
    def owned(self) -> np.ndarray:
        """View of the owned voxels (without collar)."""
        return self.storage[1:-1, 1:-1, 1:-1]

    @property
    def is_2d(self) -> bool:
        return self.dims[2] == 1

    @property
    def nbytes(self) -> int:
        return int(self.storage.nbytes)

    @property
    def n_owned(self) -> int:
        a, b = self.owned_range
        return (b - a) * self.dims[1] * self.dims[2]

    def value_at(self, coord: Sequence[int]):
        """Extended value at image coordinate ``coord``; may lie in the collar."""
        x0, x1, x2 = coord
        return self.storage[x0 - self.owned_range[0] + 1, x1 + 1, x2 + 1]


def padded_nbytes(length: int, dims: Sequence[int], kind: ValueKind) -> int:
    """Bytes of padded storage for a chunk owning ``length`` rows."""
    _, w1, w2 = normalize_dims(dims)
    return (length + 2) * (w1 + 2) * (w2 + 2) * kind.storage_dtype.itemsize


def check_range(owned_range: Sequence[int], w0: int) -> Tuple[int, int]:
    a, b = (int(x) for x in owned_range)
    if not 0 <= a < b <= w0:
        raise ValueError(f"invalid chunk range [{a}, {b}) for w0={w0}")
    return a, b


def empty_padded(owned_range: Tuple[int, int], dims: Dims, kind: ValueKind) -> np.ndarray:
    a, b = owned_range
    _, w1, w2 = dims
    return np.full((b - a + 2, w1 + 2, w2 + 2), kind.sentinel, dtype=kind.storage_dtype)


def extract_padded_chunk(image: Image, owned_range: Sequence[int]) -> PaddedChunk:
    """Copy rows ``[a, b)`` of ``image`` plus collar into a new padded chunk."""
    dims = image.dims
    a, b = check_range(owned_range, dims[0])
    storage = empty_padded((a, b), dims, image.kind)
    lo, hi = max(a - 1, 0), min(b + 1, dims[0])
    storage[lo - a + 1:hi - a + 1, 1:-1, 1:-1] = image.data[lo:hi]
    return PaddedChunk((a, b), dims, image.kind, storage)
