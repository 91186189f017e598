"""Streaming Euler characteristic curves of 2D and 3D grayscale images."""

__version__ = "0.1.0"

from .curve import EccCurve, read_curve, vcec_to_ecc, write_curve, zero_crossings
from .engine import (
    ArraySource,
    ChunkPlan,
    GlobalVcec,
    MemoryTracker,
    PipelineTrace,
    RawFileSource,
    compute_vcec,
    merge_local,
    plan_chunks,
    process_image,
)
from .grid import Image, PaddedChunk, ValueKind, extract_padded_chunk, linear_index, load_raw, write_raw
from .index import DENSE_U8, ValueIndex, bin_of, build_index, ordered_index
from .kernel import accumulate_chunk, contributions, voxel_contribution

__all__ = [
    "ArraySource", "ChunkPlan", "DENSE_U8", "EccCurve", "GlobalVcec", "Image", "MemoryTracker",
    "PaddedChunk", "PipelineTrace", "RawFileSource", "ValueIndex", "ValueKind",
    "accumulate_chunk", "bin_of", "build_index", "compute_vcec", "contributions", "ecc",
    "extract_padded_chunk", "linear_index", "load_raw", "merge_local", "ordered_index",
    "plan_chunks", "process_image", "read_curve", "vcec_to_ecc", "voxel_contribution",
    "write_curve", "write_raw", "zero_crossings",
]


def ecc(image, chunks=1, workers=1) -> EccCurve:
    """ECC of an in-memory image or array."""
    if not isinstance(image, Image):
        image = Image.from_array(image)
    return vcec_to_ecc(process_image(image, plan_chunks(image.dims, chunks=chunks), workers))
