"""
Nearest and bilinear upscaling
===============================

Both modes use pixel centres: output pixel u samples source coordinate
(u + 0.5) / r. Nearest replicates blocks, bilinear blends neighbours and
never leaves the input's value range.
"""

import numpy as np

from connscale.resample import SUPPORTED_FACTORS, upscale

np.set_printoptions(precision=3, suppress=True, linewidth=120)

m = np.array([[1.0, 0.2, -0.5],
              [0.2, 1.0, 0.4],
              [-0.5, 0.4, 1.0]])

# 2x nearest is plain block replication
print("nearest, r=2\n", upscale(m, 2.0, "nearest"))

# the same matrix blended; the corners stay pinned by edge clamping
print("\nbilinear, r=2\n", upscale(m, 2.0, "bilinear"))

# a non-integer factor needs an input size that divides cleanly: 4 x 1.5 = 6
ramp = np.tile([0.0, 1.0, 2.0, 3.0], (4, 1))
print("\nramp row, bilinear r=1.5:", upscale(ramp, 1.5, "bilinear")[0])

# output sizes for a 32-channel montage
print("\n32-channel input sizes:", {r: int(32 * r) for r in SUPPORTED_FACTORS})
