"""
Chunked, pipelined VCEC computation.

The image is cut along axis 0 into slabs. A single ingestion thread reads
each padded slab and builds its value index, a pool of kernel threads
turns slabs into chunk-local histograms, and the calling thread merges those
into the global VCEC. Live padded slabs are bounded by ``workers + 1``, so
reading the next slab overlaps kernel execution on the previous ones.
"""

from __future__ import annotations

import contextlib
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numba as nb
import numpy as np

from .grid import (
    Image,
    PaddedChunk,
    PathLike,
    ValueKind,
    _canonical_zero,
    check_range,
    check_values,
    empty_padded,
    expected_nbytes,
    extract_padded_chunk,
    normalize_dims,
    padded_nbytes,
)
from .index import BinOrder, ValueIndex, ordered_index, present_u8
from .kernel import accumulate_chunk

logger = logging.getLogger(__name__)

READ_BLOCK_BYTES = 4 << 20


class ChunkError(RuntimeError):
    """Failure while ingesting or processing one chunk."""

    def __init__(self, chunk: int, owned_range: Tuple[int, int], cause: BaseException):
        a, b = owned_range
        super().__init__(f"chunk {chunk} (rows [{a}, {b})): {cause}")
        self.chunk = chunk
        self.owned_range = owned_range


# -- planning ----------------------------------------------------------------


@dataclass(frozen=True)
class ChunkPlan:
    ranges: Tuple[Tuple[int, int], ...]

    @property
    def c(self) -> int:
        return len(self.ranges)

    @property
    def max_length(self) -> int:
        return max(b - a for a, b in self.ranges)

    def check(self, w0: int) -> None:
        pos = 0
        for a, b in self.ranges:
            if a != pos or b <= a:
                raise ValueError(f"chunk plan {self.ranges} is not a contiguous cover")
            pos = b
        if pos != w0:
            raise ValueError(f"chunk plan covers [0, {pos}) but the image has w0={w0}")


def split_rows(w0: int, c: int) -> ChunkPlan:
    """Split ``[0, w0)`` into ``min(c, w0)`` ranges of at most ``ceil(w0 / c)`` rows.

    Ranges take the ceiling length while enough rows remain to keep every later
    range non-empty, so the last range absorbs the remainder.
    """
    if w0 < 1 or c < 1:
        raise ValueError(f"need w0 >= 1 and c >= 1, got w0={w0}, c={c}")
    c = min(c, w0)
    length = -(-w0 // c)
    ranges = []
    a = 0
    for k in range(c):
        n = min(length, w0 - a - (c - k - 1))
        ranges.append((a, a + n))
        a += n
    return ChunkPlan(tuple(ranges))


def plan_chunks(dims: Sequence[int], chunks: Optional[int] = None,
                memory_budget: Optional[int] = None,
                kind: Union[str, ValueKind] = ValueKind.F32, in_flight: int = 1) -> ChunkPlan:
    """Plan chunks from an explicit count or a memory budget in bytes.

    With a budget, ``in_flight`` padded chunks together must fit in it, i.e.
    each chunk gets ``memory_budget // in_flight`` bytes.
    """
    w0, w1, w2 = normalize_dims(dims)
    if (chunks is None) == (memory_budget is None):
        raise ValueError("give exactly one of chunks or memory_budget")
    if chunks is not None:
        return split_rows(w0, int(chunks))
    kind = ValueKind.parse(kind)
    per_chunk = int(memory_budget) // max(int(in_flight), 1)
    slab = (w1 + 2) * (w2 + 2) * kind.storage_dtype.itemsize
    max_len = per_chunk // slab - 2
    if max_len < 1:
        minimum = padded_nbytes(1, (w0, w1, w2), kind) * max(int(in_flight), 1)
        raise ValueError(f"memory budget {memory_budget} B is too small; "
                         f"the minimum feasible budget is {minimum} B")
    return split_rows(w0, -(-w0 // max_len))


# -- sources -----------------------------------------------------------------


class ArraySource:
    """Chunks copied out of an in-memory :class:`Image`."""

    def __init__(self, image: Image):
        self.image = image
        self.dims = image.dims
        self.kind = image.kind

    def read_chunk(self, a: int, b: int) -> PaddedChunk:
        return extract_padded_chunk(self.image, (a, b))


class RawFileSource:
    """Chunks read range by range from a headerless raw volume file.

    Each chunk reads the contiguous byte span of rows ``[a - 1, b + 1)``
    (clipped to the image) in blocks of at most ``READ_BLOCK_BYTES``.
    """

    def __init__(self, path: PathLike, dims: Sequence[int], kind: Union[str, ValueKind],
                 big_endian: bool = False):
        self.path = os.fspath(path)
        self.dims = normalize_dims(dims)
        self.kind = ValueKind.parse(kind)
        self.file_dtype = self.kind.file_dtype(big_endian)
        expected = expected_nbytes(self.dims, self.kind)
        actual = os.path.getsize(self.path)
        if actual != expected:
            raise ValueError(
                f"{self.path}: size mismatch, expected {expected} bytes for dims "
                f"{self.dims} {self.kind.value}, found {actual}")

    def read_chunk(self, a: int, b: int) -> PaddedChunk:
        w0, w1, w2 = self.dims
        a, b = check_range((a, b), w0)
        storage = empty_padded((a, b), self.dims, self.kind)
        row_values = w1 * w2
        row_bytes = row_values * self.kind.itemsize
        rows_per_read = max(1, READ_BLOCK_BYTES // row_bytes)
        lo, hi = max(a - 1, 0), min(b + 1, w0)
        buf = bytearray(min(rows_per_read, hi - lo) * row_bytes)
        with open(self.path, "rb") as f:
            f.seek(lo * row_bytes)
            r = lo
            while r < hi:
                n = min(rows_per_read, hi - r)
                view = memoryview(buf)[:n * row_bytes]
                got = f.readinto(view)
                if got != len(view):
                    raise OSError(f"{self.path}: short read at row {r} "
                                  f"({got} of {len(view)} bytes)")
                block = np.frombuffer(view, dtype=self.file_dtype).reshape(n, w1, w2)
                check_values(block, offset=r * row_values)
                storage[r - a + 1:r - a + 1 + n, 1:-1, 1:-1] = block
                r += n
        _canonical_zero(storage)
        return PaddedChunk((a, b), self.dims, self.kind, storage)


def as_source(source):
    if isinstance(source, Image):
        return ArraySource(source)
    if not (hasattr(source, "read_chunk") and hasattr(source, "dims")):
        raise TypeError(f"not an image source: {source!r}")
    return source


def chunk_index(chunk: PaddedChunk) -> Tuple[ValueIndex, Optional[BinOrder]]:
    """Value index of the owned voxels of ``chunk``, rebuilt for every chunk.

    Float chunks also get the :class:`BinOrder` that the kernel bins with; 8-bit
    chunks bin by table lookup and get ``None``.
    """
    if chunk.kind is ValueKind.U8:
        return present_u8(chunk.owned), None
    return ordered_index(chunk.owned)


# -- global VCEC -------------------------------------------------------------


@nb.njit(nogil=True, cache=True)
def _merge_sorted(va, ca, vb, cb):
    n = va.size + vb.size
    values = np.empty(n, va.dtype)
    counts = np.empty(n, np.int64)
    i = 0
    j = 0
    m = 0
    while i < va.size or j < vb.size:
        if j == vb.size or (i < va.size and va[i] < vb[j]):
            values[m] = va[i]
            counts[m] = ca[i]
            i += 1
        elif i == va.size or vb[j] < va[i]:
            values[m] = vb[j]
            counts[m] = cb[j]
            j += 1
        else:
            values[m] = va[i]
            counts[m] = ca[i] + cb[j]
            i += 1
            j += 1
        m += 1
    return values[:m], counts[:m]


class GlobalVcec:
    """Map from grayscale value to change in Euler characteristic.

    Stored as a strictly increasing ``values`` array with matching int64
    ``counts``. Float keys are float32, so two values merge exactly when they
    are equal as float32 (``-0.0`` is canonicalized on load). Integer keys are
    int64.
    """

    def __init__(self, values=None, counts=None):
        if values is None:
            self.values = np.empty(0, np.float32)
            self.counts = np.empty(0, np.int64)
            return
        values = _key_array(np.asarray(values))
        counts = np.asarray(counts, dtype=np.int64)
        if values.shape != counts.shape:
            raise ValueError("values and counts must have the same length")
        order = np.argsort(values, kind="stable")
        values, counts = values[order], counts[order]
        if values.size > 1 and not np.all(values[1:] > values[:-1]):
            raise ValueError("duplicate VCEC keys")
        self.values, self.counts = values, counts

    @classmethod
    def from_dict(cls, mapping: Dict) -> "GlobalVcec":
        keys = list(mapping)
        values = np.array(keys)
        return cls(values, [mapping[k] for k in keys]) if keys else cls()

    def add(self, values: np.ndarray, counts: np.ndarray) -> None:
        """Add ``counts`` at the strictly increasing keys ``values``."""
        self._add_sorted(_key_array(np.asarray(values)), np.asarray(counts, dtype=np.int64))

    def _add_sorted(self, values: np.ndarray, counts: np.ndarray) -> None:
        # values: valid keys of the right dtype, strictly increasing
        if self.values.size == 0:
            self.values, self.counts = values.copy(), counts.copy()
            return
        if values.dtype != self.values.dtype:
            raise ValueError(f"cannot merge {values.dtype} keys into {self.values.dtype} VCEC")
        self.values, self.counts = _merge_sorted(self.values, self.counts, values, counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def items(self) -> Iterator[Tuple[object, int]]:
        for v, c in zip(self.values.tolist(), self.counts.tolist()):
            yield v, c

    def as_dict(self) -> Dict[object, int]:
        return dict(self.items())

    def __len__(self):
        return int(self.values.size)

    def __getitem__(self, value) -> int:
        pos = int(np.searchsorted(self.values, value))
        if pos == len(self) or self.values[pos] != value:
            raise KeyError(value)
        return int(self.counts[pos])

    def __eq__(self, other):
        if not isinstance(other, GlobalVcec):
            return NotImplemented
        return (self.values.dtype == other.values.dtype
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.counts, other.counts))

    def __repr__(self):
        if len(self) <= 8:
            return f"GlobalVcec({self.as_dict()})"
        return f"GlobalVcec(<{len(self)} values>, total={self.total()})"


def _key_array(values: np.ndarray) -> np.ndarray:
    if values.dtype.kind in "iu":
        return values.astype(np.int64)
    if values.dtype.kind == "f":
        out = values.astype(np.float32)
        if not np.isfinite(out).all():
            raise ValueError("VCEC keys must be finite")
        return out + np.float32(0.0)
    raise ValueError(f"unsupported key dtype {values.dtype}")


def merge_local(global_vcec: GlobalVcec, local: np.ndarray, index: ValueIndex) -> GlobalVcec:
    """Add a chunk-local histogram into ``global_vcec`` (in place) and return it."""
    local = np.asarray(local)
    if local.shape != (len(index),):
        raise ValueError(f"local VCEC has {local.size} bins, index has {len(index)}")
    values = index.values
    if values.dtype == np.float32:
        global_vcec._add_sorted(values, local.astype(np.int64, copy=False))  # validated on build
    else:
        global_vcec.add(values, local)
    return global_vcec


# -- instrumentation ---------------------------------------------------------


class MemoryTracker:
    """Thread-safe tally of live padded-chunk bytes and its peak."""

    def __init__(self):
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def alloc(self, nbytes: int) -> None:
        with self._lock:
            self.current += nbytes
            self.peak = max(self.peak, self.current)

    def free(self, nbytes: int) -> None:
        with self._lock:
            self.current -= nbytes


@dataclass
class Span:
    stage: str
    chunk: int
    start: float
    end: float
    cpu: float = 0.0  # CPU seconds used by the recording thread


@dataclass
class PipelineTrace:
    """Timestamped spans of pipeline stages (``read``, ``index``, ``kernel``, ``merge``)."""

    spans: List[Span] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @contextlib.contextmanager
    def span(self, stage: str, chunk: int):
        start, cpu = time.perf_counter(), time.thread_time()
        try:
            yield
        finally:
            end, cpu = time.perf_counter(), time.thread_time() - cpu
            with self._lock:
                self.spans.append(Span(stage, chunk, start, end, cpu))

    def of(self, stage: str) -> List[Span]:
        return [s for s in self.spans if s.stage == stage]

    def total(self, stage: str) -> float:
        """Sum of span durations of ``stage``."""
        return sum(s.end - s.start for s in self.of(stage))

    def cpu(self, stage: str) -> float:
        """CPU seconds spent inside ``stage`` spans, summed over threads.

        Unlike wall time this is not inflated when other stages share the
        same cores.
        """
        return sum(s.cpu for s in self.of(stage))

    def busy(self, stage: str) -> float:
        """Wall time during which at least one ``stage`` span was running."""
        spans = sorted(self.of(stage), key=lambda s: s.start)
        busy, cur_start, cur_end = 0.0, None, None
        for s in spans:
            if cur_end is None or s.start > cur_end:
                if cur_end is not None:
                    busy += cur_end - cur_start
                cur_start, cur_end = s.start, s.end
            else:
                cur_end = max(cur_end, s.end)
        if cur_end is not None:
            busy += cur_end - cur_start
        return busy

    def overlap(self, stage_a: str, chunk_a: int, stage_b: str, chunk_b: int) -> float:
        """Seconds during which both given spans were running."""
        a = [s for s in self.of(stage_a) if s.chunk == chunk_a]
        b = [s for s in self.of(stage_b) if s.chunk == chunk_b]
        if not a or not b:
            return 0.0
        return max(0.0, min(a[0].end, b[0].end) - max(a[0].start, b[0].start))


# -- pipeline ----------------------------------------------------------------


def process_image(source, plan: Optional[ChunkPlan] = None, workers: int = 1, *,
                  tracker: Optional[MemoryTracker] = None,
                  trace: Optional[PipelineTrace] = None) -> GlobalVcec:
    """Compute the global VCEC of ``source``.

    Parameters
    ----------
    source : Image or source object
        An :class:`Image`, or any object with ``dims``, ``kind`` and
        ``read_chunk(a, b) -> PaddedChunk``.
    plan : ChunkPlan, optional
        Defaults to a single chunk.
    workers : int
        Number of kernel threads.
    tracker, trace : optional
        Instrumentation hooks for padded-chunk memory and stage timestamps.

    The result does not depend on ``plan``, ``workers`` or the order in which
    chunks complete.
    """
    source = as_source(source)
    dims = source.dims
    plan = plan if plan is not None else split_rows(dims[0], 1)
    plan.check(dims[0])
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    tracker = tracker if tracker is not None else MemoryTracker()
    trace = trace if trace is not None else PipelineTrace()

    slots = threading.Semaphore(workers + 1)
    work: "queue.Queue" = queue.Queue()
    results: "queue.Queue" = queue.Queue()
    stop = threading.Event()

    def ingest():
        k = 0
        try:
            for k, (a, b) in enumerate(plan.ranges):
                while not slots.acquire(timeout=0.05):
                    if stop.is_set():
                        return
                if stop.is_set():
                    return
                with trace.span("ingest", k):
                    with trace.span("read", k):
                        chunk = source.read_chunk(a, b)
                    tracker.alloc(chunk.nbytes)
                    with trace.span("index", k):
                        index, order = chunk_index(chunk)
                work.put((k, chunk, index, order))
                del chunk
        except BaseException as exc:  # reported to the merging thread
            results.put((k, exc, None))
        finally:
            for _ in range(workers):
                work.put(None)

    def kernel_worker():
        while True:
            item = work.get()
            if item is None:
                return
            k, chunk, index, order = item
            item = None
            try:
                if not stop.is_set():
                    with trace.span("kernel", k):
                        local = accumulate_chunk(chunk, index, order=order)
                    results.put((k, local, index))
            except BaseException as exc:
                results.put((k, exc, None))
            finally:
                tracker.free(chunk.nbytes)
                chunk = order = None
                slots.release()

    threads = [threading.Thread(target=ingest, name="ecc-ingest", daemon=True)]
    threads += [threading.Thread(target=kernel_worker, name=f"ecc-kernel-{i}", daemon=True)
                for i in range(workers)]
    for t in threads:
        t.start()

    vcec = GlobalVcec()
    try:
        for _ in range(plan.c):
            k, local, index = results.get()
            if isinstance(local, BaseException):
                raise ChunkError(k, plan.ranges[k], local) from local
            with trace.span("merge", k):
                merge_local(vcec, local, index)
    finally:
        stop.set()
        for t in threads:
            t.join()
    return vcec


def compute_vcec(source, chunks: Optional[int] = None, memory_budget: Optional[int] = None,
                 workers: int = 1, **hooks) -> GlobalVcec:
    """Plan and run :func:`process_image`.

    A ``memory_budget`` covers all padded chunks that can be live at once
    (``workers + 1`` of them).
    """
    source = as_source(source)
    if chunks is None and memory_budget is None:
        chunks = max(2, workers)
    plan = plan_chunks(source.dims, chunks=chunks, memory_budget=memory_budget,
                       kind=source.kind, in_flight=workers + 1)
    logger.debug("processing %s in %d chunks with %d workers", source.dims, plan.c, workers)
    return process_image(source, plan, workers, **hooks)
