"""
Euler characteristic curves of tiny images, checked against brute force.

Each voxel adds its share of cells to the sublevel complex at its own value.
Summing those shares per value gives the VCEC and its prefix sum is the ECC.
"""

import numpy as np

from eccstream import Image, compute_vcec, contributions, extract_padded_chunk, vcec_to_ecc
from eccstream.oracle import naive_ecc


def show(name, data):
    image = Image.from_array(np.asarray(data, dtype=np.float32))
    curve = vcec_to_ecc(compute_vcec(image, chunks=1))
    brute = naive_ecc(image)
    print(f"{name}: {curve.points}  (brute force agrees: {curve == brute})")
    return image


# a ring: one component with one hole until the centre fills in
ring = show("ring", [[0, 0, 0], [0, 9, 0], [0, 0, 0]])

# per-voxel shares; the centre closes the hole (+1), the rest cancel out
chunk = extract_padded_chunk(ring, (0, 3))
print(contributions(chunk)[..., 0])

# diagonal squares meet at a vertex, so the checkerboard is connected
show("checkerboard", [[0, 1], [1, 0]])

# a hollow cube is a sphere: chi = 2 until the centre voxel enters
cube = np.zeros((3, 3, 3))
cube[1, 1, 1] = 9
show("hollow cube", cube)

# ties are broken by row-major position, so flat images still sum to one
flat = show("flat 4x4x4", np.ones((4, 4, 4)))
