"""
Repeated smoothing and ECC on an image kept in memory.

This is the loop the ``bench`` command times. Each pass blurs the image with
a separable Gaussian and recomputes its curve, so the number of distinct
values and the curve both change as the image gets smoother.
"""

import time

from eccstream import compute_vcec, vcec_to_ecc
from eccstream.datagen import GenSpec, gaussian_smooth, uniform_noise

image = uniform_noise(GenSpec((64, 64, 64), seed=5))
for step in range(5):
    t0 = time.perf_counter()
    if step:
        image = gaussian_smooth(image, sigma=2.0, width=13)
    t1 = time.perf_counter()
    curve = vcec_to_ecc(compute_vcec(image, chunks=2, workers=2))
    t2 = time.perf_counter()
    print(f"pass {step}: {len(curve):7d} thresholds, max |chi| {abs(curve.chi).max():6d}, "
          f"smooth {1e3 * (t1 - t0):6.1f} ms, ECC {1e3 * (t2 - t1):6.1f} ms")
