"""
Baking a point-wise network into a lookup table
===============================================

A small untrained network is enough to see the mechanics: tabulate it on a
voxel grid, then replace the forward pass with indexing plus a running max.
"""
import time

import numpy as np

from lutpoint import GridSpec, PointwiseMLP, bake, global_feature, lookup_feature, synthetic_instance

model = PointwiseMLP.init((64, 64, 64, 128, 256), seed=0)
cloud = synthetic_instance("torus", 1024, seed=0)

# 32 voxels per axis, 8-bit levels: m * S^3 bytes
table = bake(model, GridSpec(32, 8))
print("table payload:", table.payload_nbytes, "bytes =", model.m, "* 32**3")

exact = global_feature(model, cloud).values
approx = lookup_feature(table, cloud).values

# the error comes from snapping points to voxel corners and from quantization
err = np.abs(exact - approx)
print(f"max |F - F_hat| = {err.max():.4f}, mean = {err.mean():.4f}")
print(f"channel ranges: {float(np.median(table.maxs - table.mins)):.3f} (median)")

t = time.perf_counter()
for _ in range(100):
    global_feature(model, cloud)
t_exact = (time.perf_counter() - t) / 100
t = time.perf_counter()
for _ in range(100):
    lookup_feature(table, cloud)
t_lut = (time.perf_counter() - t) / 100
print(f"exact {t_exact * 1e3:.2f} ms, lookup {t_lut * 1e3:.3f} ms")
