"""Acceptance criteria, one test per criterion.

Each test prints (and adds to the pytest summary) one line of the form
``criterion N: PASS|FAIL <name> (<detail>)``.
"""

import contextlib
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from eccstream import (
    ArraySource,
    Image,
    MemoryTracker,
    PipelineTrace,
    RawFileSource,
    compute_vcec,
    process_image,
    vcec_to_ecc,
)
from eccstream.curve import curve_to_string, write_curve
from eccstream.datagen import GenSpec, gaussian_kernel, smooth_array, uniform_noise, write_generated
from eccstream.engine import split_rows
from eccstream.grid import ValueKind, extract_padded_chunk
from eccstream.kernel import _stencil_3d
from eccstream.oracle import naive_ecc

from conftest import ACCEPTANCE_LINES, random_image
from test_datagen import direct_convolution

MiB = 2 ** 20


@contextlib.contextmanager
def criterion(number, name):
    """Record PASS or FAIL for the enclosed checks; ``detail`` may be filled in."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"criterion {number:2d}: FAIL {name} ({detail.get('text', '')} {type(exc).__name__}: {exc})"
        ACCEPTANCE_LINES.append(line.replace("\n", " ")[:300])
        print(ACCEPTANCE_LINES[-1])
        raise
    line = f"criterion {number:2d}: PASS {name}" + (f" ({detail['text']})" if detail.get("text") else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def run_cli(*args, check=True):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "eccstream", *map(str, args)],
                          capture_output=True, text=True)
    wall = time.perf_counter() - start
    if check and proc.returncode != 0:
        raise AssertionError(f"eccstream {' '.join(map(str, args))} failed:\n{proc.stderr}")
    return proc, wall


def test_criterion_01_oracle_equivalence():
    with criterion(1, "oracle equivalence") as d:
        rng = np.random.default_rng(1)
        start = time.perf_counter()
        images = 0
        for n in range(1000):
            if n % 2:
                dims = tuple(int(x) for x in rng.integers(1, 9, 2))
            else:
                dims = tuple(int(x) for x in rng.integers(1, 7, 3))
            if n % 4 < 2:
                image = random_image(rng, dims, ValueKind.U8, n_values=8)
            else:
                image = random_image(rng, dims, ValueKind.F32, n_values=int(rng.integers(1, 6)))
            expected = naive_ecc(image)
            for c in sorted({1, 2, 3, dims[0]}):
                for workers in (1, 4):
                    got = vcec_to_ecc(process_image(image, split_rows(dims[0], c), workers))
                    assert got == expected, (image.data, c, workers, got, expected)
            images += 1
        elapsed = time.perf_counter() - start
        d["text"] = f"{images} images x chunks {{1,2,3,w0}} x workers {{1,4}} in {elapsed:.1f} s"
        assert images >= 1000
        assert elapsed < 60


def _corpus():
    rng = np.random.default_rng(2)
    shapes = [(1, 1), (1, 7), (7, 1), (1, 1, 5), (1, 5, 1), (3, 1, 4), (2, 2), (5, 6), (4, 5, 6),
              (8, 8), (6, 6, 6), (1, 200), (1, 1, 200), (33, 17, 9)]
    for dims in shapes:
        for kind in (ValueKind.U8, ValueKind.F32):
            for n_values in (1, 3, None):
                yield random_image(rng, dims, kind, n_values=n_values)
    for fixture in FIXTURES:
        yield Image.from_array(np.array(fixture[0], np.float32))
    yield uniform_noise(GenSpec((64, 64, 64), seed=3))


FIXTURES = [
    ([[0, 0, 0], [0, 9, 0], [0, 0, 0]], [(0.0, 0), (9.0, 1)]),
    ([[1, 2], [3, 4]], [(1.0, 1), (2.0, 1), (3.0, 1), (4.0, 1)]),
    ([[0, 1], [1, 0]], [(0.0, 1), (1.0, 1)]),
    ([[5.5]], [(5.5, 1)]),
]


def test_criterion_02_contractibility():
    with criterion(2, "contractibility") as d:
        count = 0
        for image in _corpus():
            for c in (1, 3):
                vcec = compute_vcec(image, chunks=c, workers=2)
                assert vcec.total() == 1, image.dims
                assert vcec_to_ecc(vcec).chi[-1] == 1, image.dims
            count += 1
        d["text"] = f"{count} images incl. 1xk and 1x1xk"


def test_criterion_03_hand_fixtures():
    with criterion(3, "hand-verified fixtures") as d:
        for data, expected in FIXTURES:
            image = Image.from_array(np.array(data, np.float32))
            assert naive_ecc(image).points == expected  # oracle first
            assert vcec_to_ecc(compute_vcec(image, chunks=1)).points == expected
            assert vcec_to_ecc(compute_vcec(image, chunks=len(data), workers=2)).points == expected
        # single voxel as a genuine cube: oracle on the 3D cell grid, 3D stencil directly
        cube = Image.from_array(np.full((1, 1, 1), 7.0, np.float32))
        assert naive_ecc(cube, ndim=3).points == [(7.0, 1)]
        storage = extract_padded_chunk(cube, (0, 1)).storage
        out = np.empty((1, 1, 1), np.int8)
        _stencil_3d(storage, out)
        assert out.item() == 1
        assert vcec_to_ecc(compute_vcec(cube, chunks=1)).points == [(7.0, 1)]
        d["text"] = f"{len(FIXTURES)} 2D fixtures + single 3D voxel"


def test_criterion_04_chunk_worker_invariance(tmp_path):
    with criterion(4, "chunking/worker invariance") as d:
        image = uniform_noise(GenSpec((64, 64, 64), seed=4))
        path = tmp_path / "noise.raw"
        image.values.tofile(path)
        source = RawFileSource(path, image.dims, "f32")
        outputs = set()
        for c in range(1, 9):
            for workers in (1, 2, 8):
                out = tmp_path / f"c{c}_w{workers}.csv"
                write_curve(vcec_to_ecc(compute_vcec(source, chunks=c, workers=workers)), "csv", out)
                outputs.add(out.read_bytes())
        assert len(outputs) == 1
        d["text"] = "24 runs, 1 distinct curve file"


def test_criterion_05_u8_f32_equivalence():
    with criterion(5, "U8/F32 path equivalence") as d:
        rng = np.random.default_rng(5)
        for dims in [(40, 30), (20, 16, 12), (1, 50), (9, 1, 9)]:
            data = rng.integers(0, 256, dims).astype(np.uint8)
            as_u8 = vcec_to_ecc(compute_vcec(Image(data, ValueKind.U8), chunks=3))
            as_f32 = vcec_to_ecc(compute_vcec(Image(data.astype(np.float32), ValueKind.F32), chunks=2))
            assert np.array_equal(as_u8.thresholds, as_f32.thresholds)
            assert np.array_equal(as_u8.chi, as_f32.chi)
        d["text"] = "4 images, identical thresholds and chi"


def test_criterion_06_out_of_core(tmp_path):
    with criterion(6, "out-of-core operation") as d:
        budget = 64 * MiB
        spec = GenSpec((1024, 256, 256), seed=6)
        path = tmp_path / "big.raw"
        write_generated(spec, path)
        assert os.path.getsize(path) >= 2 * budget
        source = RawFileSource(path, spec.dims, "f32")
        results = []
        for workers in (1, 2):
            tracker = MemoryTracker()
            vcec = compute_vcec(source, memory_budget=budget, workers=workers, tracker=tracker)
            assert 0 < tracker.peak <= budget, tracker.peak
            assert tracker.current == 0
            results.append((vcec, tracker.peak))
        other = compute_vcec(source, chunks=3, workers=1)
        curves = {curve_to_string(vcec_to_ecc(v)) for v in [results[0][0], results[1][0], other]}
        assert len(curves) == 1
        vcec = results[0][0]
        assert vcec.total() == 1 and vcec_to_ecc(vcec).chi[-1] == 1
        peak = max(p for _, p in results)
        d["text"] = (f"{os.path.getsize(path) // MiB} MiB file, budget {budget // MiB} MiB, "
                     f"peak chunk storage {peak / MiB:.1f} MiB")


class DelayedSource(ArraySource):
    def read_chunk(self, a, b):
        time.sleep(0.05)
        return super().read_chunk(a, b)


def test_criterion_07_streaming_overlap():
    with criterion(7, "streaming overlap") as d:
        image = uniform_noise(GenSpec((64, 64, 64), seed=7))
        trace = PipelineTrace()
        plan = split_rows(64, 4)
        vcec = process_image(DelayedSource(image), plan, workers=2, trace=trace)
        assert vcec == compute_vcec(image, chunks=1)
        overlaps = [trace.overlap("ingest", k + 1, "kernel", k) for k in range(plan.c - 1)]
        assert max(overlaps) > 0
        d["text"] = "overlap ingest(k+1)/kernel(k) ms: " + ", ".join(f"{o * 1e3:.1f}" for o in overlaps)


def test_criterion_08_separable_convolution():
    with criterion(8, "separable convolution") as d:
        rng = np.random.default_rng(8)
        worst = 0.0
        for shape in [(9, 9), (7, 7, 7)]:
            data = rng.random(shape)
            for sigma, width in [(1.0, 3), (1.5, 5), (2.0, 13)]:
                direct = direct_convolution(data, gaussian_kernel(sigma, width))
                rel = np.max(np.abs(smooth_array(data, sigma, width) - direct) / np.abs(direct))
                worst = max(worst, rel)
        assert worst <= 1e-5
        d["text"] = f"max relative error {worst:.2e}"


def test_criterion_09_performance_smoke(tmp_path):
    with criterion(9, "performance smoke 512^3") as d:
        raw = tmp_path / "noise.raw"
        run_cli("gen", "--kind", "uniform", "--dims", 512, 512, 512, "--seed", 1, "-o", raw)
        assert os.path.getsize(raw) == 512 * MiB
        report = tmp_path / "report.json"
        proc, wall = run_cli("compute", raw, "--dtype", "f32", "-o", tmp_path / "out.csv",
                             "--report-json", report)
        stats = json.loads(report.read_text())
        assert "GVox/s" in proc.stderr
        d["text"] = (f"end-to-end {wall:.1f} s, kernel {stats['gvox_per_s']:.3f} GVox/s, "
                     f"{os.cpu_count()} CPU")
        assert wall <= 60
        assert stats["gvox_per_s"] >= 0.05


def test_criterion_10_amortization(tmp_path):
    with criterion(10, "amortization trend") as d:
        many, one = tmp_path / "many", tmp_path / "one"
        many.mkdir()
        one.mkdir()
        for i in range(1000):
            uniform_noise(GenSpec((16, 16), seed=i)).values.tofile(many / f"f{i:04d}.raw")
        uniform_noise(GenSpec((16, 16), seed=0)).values.tofile(one / "f0000.raw")
        _, wall_many = run_cli("batch", many, "--dims", 16, 16, "--out-dir", tmp_path / "o1")
        _, wall_one = run_cli("batch", one, "--dims", 16, 16, "--out-dir", tmp_path / "o2")
        assert len(list((tmp_path / "o1").iterdir())) == 1000
        batch_many, batch_one = wall_many / 1000, wall_one
        _, bench_many = run_cli("bench", "--size", 32, 32, "--iters", 1000)
        _, bench_one = run_cli("bench", "--size", 32, 32, "--iters", 1)
        bench_many /= 1000
        d["text"] = (f"batch avg {batch_many * 1e3:.2f} ms (1000) vs {batch_one * 1e3:.1f} ms (1); "
                     f"bench avg {bench_many * 1e3:.2f} ms (1000) vs {bench_one * 1e3:.1f} ms (1)")
        assert batch_many < batch_one
        assert bench_many < bench_one
