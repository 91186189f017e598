"""
Synthetic inputs: uniform noise, Gaussian random fields and separable
Gaussian smoothing.

Random numbers come from the Philox4x64-10 counter-based generator
(``numpy.random.Philox``) keyed by the seed. Each counter block yields four
64-bit outputs, and voxel ``n`` (row-major linear index) consumes output
``n``: word ``n % 4`` of counter block ``n // 4``. Any slab of a volume can
therefore be generated on its own and matches the whole-volume result.

* uniform float32: ``(u >> 40) * 2**-24``, in ``[0, 1)``
* uniform uint8: ``u >> 56``
* standard normal: ``ndtri(((u >> 11) + 0.5) * 2**-53)``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import ndimage, special

from .grid import Dims, Image, PathLike, ValueKind, normalize_dims, write_sidecar

DEFAULT_LEVELS = 1024
DEFAULT_WIDTH = 13


class GenKind(enum.Enum):
    UNIFORM = "uniform"
    GRF = "grf"


@dataclass(frozen=True)
class GenSpec:
    dims: Dims
    seed: int = 0
    kind: GenKind = GenKind.UNIFORM
    sigma: float = 4.0
    levels: int = DEFAULT_LEVELS
    value_kind: ValueKind = ValueKind.F32

    def __post_init__(self):
        object.__setattr__(self, "dims", normalize_dims(self.dims))
        object.__setattr__(self, "kind", GenKind(self.kind))
        object.__setattr__(self, "value_kind", ValueKind.parse(self.value_kind))
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.kind is GenKind.GRF and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")

    @property
    def size(self) -> int:
        w0, w1, w2 = self.dims
        return w0 * w1 * w2


def random_u64(seed: int, start: int, count: int) -> np.ndarray:
    """Output numbers ``[start, start + count)`` of the Philox stream for ``seed``."""
    bitgen = np.random.Philox(key=int(seed))
    if start // 4:
        bitgen.advance(start // 4)
    out = bitgen.random_raw(count + start % 4)
    return out[start % 4:]


def _uniform_from_u64(u: np.ndarray, kind: ValueKind) -> np.ndarray:
    if kind is ValueKind.U8:
        return (u >> np.uint64(56)).astype(np.uint8)
    return ((u >> np.uint64(40)).astype(np.float32) * np.float32(2.0 ** -24))


def _normal_from_u64(u: np.ndarray) -> np.ndarray:
    return special.ndtri(((u >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53)


def uniform_noise(spec: GenSpec) -> Image:
    u = random_u64(spec.seed, 0, spec.size)
    return Image(_uniform_from_u64(u, spec.value_kind).reshape(spec.dims), spec.value_kind)


def uniform_slabs(spec: GenSpec, rows: int = 16) -> Iterator[np.ndarray]:
    """Uniform noise of ``spec`` as consecutive blocks of ``rows`` axis-0 rows."""
    w0, w1, w2 = spec.dims
    per_row = w1 * w2
    for a in range(0, w0, rows):
        b = min(a + rows, w0)
        u = random_u64(spec.seed, a * per_row, (b - a) * per_row)
        yield _uniform_from_u64(u, spec.value_kind).reshape(b - a, w1, w2)


def gaussian_kernel(sigma: float, width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Sampled Gaussian of odd ``width``, normalized to unit sum."""
    width = int(width)
    if width < 1 or width % 2 == 0:
        raise ValueError(f"kernel width must be odd and >= 1, got {width}")
    if width == 1:
        return np.ones(1)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    x = np.arange(width) - width // 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def default_width(sigma: float) -> int:
    """Odd kernel width covering three standard deviations on each side."""
    return 2 * math.ceil(3 * sigma) + 1


def smooth_array(data: np.ndarray, sigma: float, width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Separable Gaussian smoothing of a float array with edge clamping."""
    weights = gaussian_kernel(sigma, width)
    out = np.asarray(data, dtype=np.float64)
    if weights.size == 1:
        return out.copy()
    for axis in range(out.ndim):
        if out.shape[axis] > 1:
            out = ndimage.correlate1d(out, weights, axis=axis, mode="nearest")
    return out


def gaussian_smooth(image: Image, sigma: float, width: int = DEFAULT_WIDTH) -> Image:
    """Separable Gaussian smoothing; the result is a float32 image."""
    return Image(smooth_array(image.data, sigma, width).astype(np.float32), ValueKind.F32)


def quantize(data: np.ndarray, levels: int) -> np.ndarray:
    """Equal-width bins over ``[min, max]``; returns bin numbers ``0..levels-1``."""
    lo, hi = float(data.min()), float(data.max())
    if hi == lo:
        return np.zeros(data.shape, dtype=np.int64)
    q = np.floor((data - lo) / (hi - lo) * levels).astype(np.int64)
    return np.minimum(q, levels - 1)


def generate_grf(spec: GenSpec, width: Optional[int] = None) -> Image:
    """Gaussian white noise, smoothed with ``spec.sigma`` and quantized.

    F32 output holds ``bin / (levels - 1)``; U8 output holds the bin number and
    needs ``levels <= 256``. ``sigma == 0`` skips smoothing.
    """
    noise = _normal_from_u64(random_u64(spec.seed, 0, spec.size)).reshape(spec.dims)
    if spec.sigma > 0:
        noise = smooth_array(noise, spec.sigma, width or default_width(spec.sigma))
    q = quantize(noise, spec.levels)
    if spec.value_kind is ValueKind.U8:
        if spec.levels > 256:
            raise ValueError("U8 fields need levels <= 256")
        return Image(q.astype(np.uint8), ValueKind.U8)
    return Image((q / (spec.levels - 1)).astype(np.float32), ValueKind.F32)


def generate(spec: GenSpec) -> Image:
    if spec.kind is GenKind.UNIFORM:
        return uniform_noise(spec)
    return generate_grf(spec)


def write_generated(spec: GenSpec, path: PathLike) -> None:
    """Write the volume for ``spec`` as a raw file plus ``.meta`` sidecar.

    Uniform noise is streamed slab by slab; fields are built in memory.
    """
    with open(path, "wb") as f:
        if spec.kind is GenKind.UNIFORM:
            for slab in uniform_slabs(spec):
                slab.astype(spec.value_kind.file_dtype(), copy=False).tofile(f)
        else:
            image = generate_grf(spec)
            image.values.astype(spec.value_kind.file_dtype(), copy=False).tofile(f)
    write_sidecar(path, spec.dims, spec.value_kind)
