"""
Command-line entry point.

    eccstream compute volume.raw --dims 64 64 64 --dtype f32 --chunks 4 -o out.csv
    eccstream batch data/ --glob '*.raw' --out-dir curves/
    eccstream bench --size 256 256 --iters 100
    eccstream gen --kind grf --dims 128 128 128 --sigma 4 --seed 2 -o grf.raw

Timing reports go to stderr, mirroring the phases disk read / index build /
kernel / merge / overall, with kernel throughput in GVox/s (10^9 voxels per
second of kernel time).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .curve import vcec_to_ecc, write_curve, write_vcec
from .datagen import DEFAULT_LEVELS, DEFAULT_WIDTH, GenKind, GenSpec, generate, gaussian_smooth
from .datagen import write_generated
from .engine import PipelineTrace, RawFileSource, compute_vcec, process_image, split_rows
from .grid import Image, ValueKind, normalize_dims, read_sidecar

logger = logging.getLogger("eccstream")


@dataclass
class RunReport:
    """Phase timings of one run, in seconds.

    ``kernel_s`` is the wall time during which at least one kernel was
    running; the other phases are summed over chunks. Phases overlap, so
    they need not add up to ``total_s``. Throughput divides by
    ``kernel_cpu_s``, the CPU time of the kernel threads, because wall time
    also counts ingestion and merging whenever they share a core with a
    kernel.
    """

    voxels: int
    read_s: float
    index_s: float
    kernel_s: float
    kernel_cpu_s: float
    merge_s: float
    total_s: float
    chunks: int = 1
    workers: int = 1

    @classmethod
    def from_trace(cls, trace: PipelineTrace, voxels: int, total_s: float, **kw) -> "RunReport":
        return cls(voxels=voxels, read_s=trace.total("read"), index_s=trace.total("index"),
                   kernel_s=trace.busy("kernel"), kernel_cpu_s=trace.cpu("kernel"),
                   merge_s=trace.total("merge"),
                   total_s=total_s, **kw)

    @property
    def gvox_per_s(self) -> float:
        return self.voxels / self.kernel_cpu_s / 1e9 if self.kernel_cpu_s > 0 else float("inf")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gvox_per_s"] = self.gvox_per_s
        return d

    def format(self) -> str:
        ms = lambda s: f"{s * 1e3:10.2f} ms"  # noqa: E731
        return "\n".join([
            f"voxels          {self.voxels:>13d}",
            f"chunks/workers  {self.chunks:>6d} / {self.workers:<5d}",
            f"disk read       {ms(self.read_s)}",
            f"index build     {ms(self.index_s)}",
            f"kernel          {ms(self.kernel_s)}",
            f"kernel CPU      {ms(self.kernel_cpu_s)}",
            f"merge           {ms(self.merge_s)}",
            f"overall         {ms(self.total_s)}",
            f"kernel GVox/s   {self.gvox_per_s:13.4f}",
        ])


class UsageError(Exception):
    pass


# -- shared helpers ----------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _dims_arg(values: Optional[Sequence[int]]):
    if values is None:
        return None
    if len(values) not in (2, 3):
        raise UsageError("--dims takes 2 or 3 values")
    return normalize_dims(values)


def _resolve_layout(path: Path, args) -> tuple:
    """Dims and value kind from flags, else from the ``.meta`` sidecar."""
    dims = _dims_arg(args.dims)
    kind = ValueKind.parse(args.dtype) if args.dtype else None
    if dims is None or kind is None:
        meta = read_sidecar(path)
        if meta is None:
            if dims is None:
                raise UsageError(f"{path}: no --dims given and no sidecar {path}.meta found")
        else:
            dims = dims or meta[0]
            kind = kind or meta[1]
    return dims, kind or ValueKind.F32


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dims", type=_positive_int, nargs="+", metavar="W",
                   help="image dimensions W0 W1 [W2], axis 0 slowest (default: from sidecar)")
    p.add_argument("--dtype", choices=["u8", "f32"], default=None,
                   help="voxel type (default: from sidecar, else f32)")
    p.add_argument("--big-endian", action="store_true",
                   help="f32 files are big-endian (default: little-endian)")
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--chunks", type=_positive_int, default=None,
                        help="number of chunks along axis 0 (default: max(2, workers))")
    budget.add_argument("--memory-budget", type=_positive_int, default=None, metavar="BYTES",
                        help="bytes available for all live padded chunks")
    p.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1,
                   help="kernel threads (default: %(default)s, the CPU count)")
    p.add_argument("--format", choices=["csv", "json"], default="csv",
                   help="curve format (default: %(default)s)")
    p.add_argument("--report-json", metavar="PATH", default=None,
                   help="also write the timing report as JSON")


def _warmup() -> None:
    # loads (or compiles) the kernels once so the first file does not pay for it
    for kind, dims in ((ValueKind.F32, (2, 2, 1)), (ValueKind.F32, (2, 2, 2)),
                       (ValueKind.U8, (2, 2, 1)), (ValueKind.U8, (2, 2, 2))):
        process_image(Image(np.zeros(dims, dtype=kind.dtype), kind))


def _compute_file(path: Path, args, out, vcec_out=None) -> RunReport:
    dims, kind = _resolve_layout(path, args)
    start = time.perf_counter()
    source = RawFileSource(path, dims, kind, big_endian=args.big_endian)
    trace = PipelineTrace()
    vcec = compute_vcec(source, chunks=args.chunks, memory_budget=args.memory_budget,
                        workers=args.workers, trace=trace)
    curve = vcec_to_ecc(vcec)
    write_curve(curve, args.format, out)
    if vcec_out is not None:
        write_vcec(vcec, args.format, vcec_out)
    total = time.perf_counter() - start
    chunks = len(trace.of("kernel"))
    return RunReport.from_trace(trace, int(np.prod(dims)), total, chunks=chunks,
                                workers=args.workers)


def _dump_report(path: Optional[str], payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# -- commands ----------------------------------------------------------------


def cmd_compute(args) -> int:
    path = Path(args.input)
    out = args.output if args.output else sys.stdout
    report = _compute_file(path, args, out, args.vcec_out)
    print(report.format(), file=sys.stderr)
    _dump_report(args.report_json, report.to_dict())
    return 0


def cmd_batch(args, started: float) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")
    files = sorted(p for p in directory.glob(args.glob) if p.is_file())
    if not files:
        print(f"warning: no files in {directory} match {args.glob!r}", file=sys.stderr)
        _dump_report(args.report_json, {"files": 0, "failed": 0})
        return 0
    out_dir = Path(args.out_dir) if args.out_dir else directory
    out_dir.mkdir(parents=True, exist_ok=True)
    _warmup()
    failed = 0
    reports: List[RunReport] = []
    for path in files:
        target = out_dir / f"{path.name}.{args.format}"
        try:
            report = _compute_file(path, args, target)
        except Exception as exc:  # one bad file must not stop the batch
            failed += 1
            print(f"FAILED {path}: {exc}", file=sys.stderr)
            continue
        reports.append(report)
        if args.verbose:
            print(f"{path.name}: {report.total_s * 1e3:.2f} ms, "
                  f"{report.gvox_per_s:.4f} GVox/s", file=sys.stderr)
    elapsed = time.perf_counter() - started
    n = len(files)
    summary = {
        "files": n,
        "failed": failed,
        "overall_s": elapsed,
        "overall_avg_ms": elapsed / n * 1e3,
        "compute_avg_ms": float(np.mean([r.total_s for r in reports]) * 1e3) if reports else None,
        "read_avg_ms": float(np.mean([r.read_s for r in reports]) * 1e3) if reports else None,
        "kernel_avg_ms": float(np.mean([r.kernel_s for r in reports]) * 1e3) if reports else None,
    }
    print(f"files           {n:>13d}  ({failed} failed)", file=sys.stderr)
    print(f"overall         {elapsed * 1e3:10.2f} ms", file=sys.stderr)
    print(f"overall avg.    {summary['overall_avg_ms']:10.2f} ms", file=sys.stderr)
    if reports:
        print(f"disk read avg.  {summary['read_avg_ms']:10.2f} ms", file=sys.stderr)
        print(f"kernel avg.     {summary['kernel_avg_ms']:10.2f} ms", file=sys.stderr)
    _dump_report(args.report_json, summary)
    return 1 if failed else 0


def cmd_bench(args, started: float) -> int:
    dims = _dims_arg(args.size)
    kind = ValueKind.parse(args.dtype)
    spec = GenSpec(dims=dims, seed=args.seed, kind=GenKind(args.kind), sigma=args.sigma,
                   levels=args.levels, value_kind=kind)
    image = generate(spec)
    _warmup()
    setup = time.perf_counter() - started
    plan = split_rows(dims[0], args.chunks)
    ecc_total = smooth_total = kernel_total = 0.0
    for _ in range(args.iters):
        t0 = time.perf_counter()
        image = gaussian_smooth(image, args.sigma, args.width)
        t1 = time.perf_counter()
        trace = PipelineTrace()
        vcec_to_ecc(process_image(image, plan, args.workers, trace=trace))
        t2 = time.perf_counter()
        smooth_total += t1 - t0
        ecc_total += t2 - t1
        kernel_total += trace.cpu("kernel")
    overall = time.perf_counter() - started
    k = args.iters
    summary = {
        "size": list(dims),
        "iters": k,
        "overall_ms": overall * 1e3,
        "overall_avg_ms": overall / k * 1e3,
        "ecc_avg_ms": ecc_total / k * 1e3,
        "gaussian_avg_ms": smooth_total / k * 1e3,
        "setup_ms": setup * 1e3,
        "kernel_gvox_per_s": int(np.prod(dims)) * k / kernel_total / 1e9 if kernel_total else None,
    }
    print(f"(ECC+Gaussian) x {k}", file=sys.stderr)
    for key in ("overall_ms", "overall_avg_ms", "ecc_avg_ms", "gaussian_avg_ms", "setup_ms"):
        print(f"{key:<16}{summary[key]:12.3f}", file=sys.stderr)
    if summary["kernel_gvox_per_s"] is not None:
        print(f"{'kernel GVox/s':<16}{summary['kernel_gvox_per_s']:12.4f}", file=sys.stderr)
    _dump_report(args.report_json, summary)
    return 0


def cmd_gen(args) -> int:
    spec = GenSpec(dims=_dims_arg(args.dims), seed=args.seed, kind=GenKind(args.kind),
                   sigma=args.sigma, levels=args.levels, value_kind=ValueKind.parse(args.dtype))
    write_generated(spec, args.output)
    print(f"wrote {args.output} ({spec.size * spec.value_kind.itemsize} bytes) "
          f"and {args.output}.meta", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eccstream",
        description="Euler characteristic curves of 2D/3D grayscale volumes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="compute the ECC of one raw volume")
    p.add_argument("input", help="headerless raw volume")
    _add_io_flags(p)
    p.add_argument("-o", "--output", default=None, help="curve file (default: stdout)")
    p.add_argument("--vcec-out", metavar="PATH", default=None, help="also write the raw VCEC")

    p = sub.add_parser("batch", help="compute curves for every matching file in a directory")
    p.add_argument("directory")
    p.add_argument("--glob", default="*.raw", help="file pattern (default: %(default)s)")
    p.add_argument("--out-dir", default=None,
                   help="where to write <file>.<format> curves (default: the input directory)")
    _add_io_flags(p)

    p = sub.add_parser("bench", help="repeat {Gaussian smoothing; ECC} on a resident image")
    p.add_argument("--size", type=_positive_int, nargs="+", required=True, metavar="W",
                   help="image dimensions W0 W1 [W2]")
    p.add_argument("--dtype", choices=["u8", "f32"], default="f32",
                   help="generated voxel type (default: %(default)s)")
    p.add_argument("--kind", choices=[k.value for k in GenKind], default="uniform",
                   help="generated data (default: %(default)s)")
    p.add_argument("--iters", type=int, default=100,
                   help="pipeline iterations, >= 1 (default: %(default)s)")
    p.add_argument("--sigma", type=float, default=2.0,
                   help="smoothing standard deviation in voxels (default: %(default)s)")
    p.add_argument("--width", type=_positive_int, default=DEFAULT_WIDTH,
                   help="odd smoothing kernel width (default: %(default)s)")
    p.add_argument("--levels", type=_positive_int, default=DEFAULT_LEVELS,
                   help="quantization levels for --kind grf (default: %(default)s)")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed (default: %(default)s)")
    p.add_argument("--chunks", type=_positive_int, default=1,
                   help="chunks per ECC run (default: %(default)s)")
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="kernel threads (default: %(default)s)")
    p.add_argument("--report-json", metavar="PATH", default=None,
                   help="also write the timing report as JSON")

    p = sub.add_parser("gen", help="generate a synthetic raw volume plus .meta sidecar")
    p.add_argument("--kind", choices=[k.value for k in GenKind], default="uniform",
                   help="uniform noise or Gaussian random field (default: %(default)s)")
    p.add_argument("--dims", type=_positive_int, nargs="+", required=True, metavar="W",
                   help="dimensions W0 W1 [W2]")
    p.add_argument("--dtype", choices=["u8", "f32"], default="f32",
                   help="voxel type (default: %(default)s)")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed (default: %(default)s)")
    p.add_argument("--sigma", type=float, default=4.0,
                   help="field smoothness in voxels, 0 = none (default: %(default)s)")
    p.add_argument("--levels", type=_positive_int, default=DEFAULT_LEVELS,
                   help="field quantization levels (default: %(default)s)")
    p.add_argument("-o", "--output", required=True, help="output raw file")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "bench" and args.iters < 1:
        parser.error("--iters must be >= 1")
    try:
        if args.command == "compute":
            return cmd_compute(args)
        if args.command == "batch":
            return cmd_batch(args, started)
        if args.command == "bench":
            return cmd_bench(args, started)
        return cmd_gen(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"eccstream: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
