"""
Critical points and level sets
==============================

Each channel's maximum over the cloud is reached at a critical point. The
whole cloud lies in the sub-level set below that value, so in a slice
through the shape the points sit inside the region h <= critical value.
"""
import numpy as np

from lutpoint import PointwiseMLP, synthetic_instance
from lutpoint.analysis import probe_level_set, sublevel_containment

model = PointwiseMLP.init((64, 64, 128), seed=2)
cloud = synthetic_instance("sphere", 2048, seed=0)

for channel in (0, 17, 99):
    sl = probe_level_set(model, cloud, channel, axis="z", offset=0.0, resolution=96)
    frac, count = sublevel_containment(sl, cloud)
    p = sl.critical_points[channel]
    print(f"channel {channel:3d}: critical point ({p[0]:+.3f}, {p[1]:+.3f}, {p[2]:+.3f}), "
          f"value {sl.critical_value:.4f}, {frac:.1%} of {count} near-plane points inside")

# ASCII view of the tightest slice: '#' inside the sub-level set, '.' outside, 'o' cloud points
slices = [probe_level_set(model, cloud, c, resolution=32) for c in range(model.m)]
sl = min(slices, key=lambda s: np.mean(s.values <= s.critical_value))
print(f"channel {sl.channel}: {np.mean(sl.values <= sl.critical_value):.0%} of the slice is inside")
grid = np.where(sl.values <= sl.critical_value, "#", ".")
near = cloud[np.abs(cloud[:, 2]) < 0.05]
ij = np.clip(np.rint((near[:, :2] + 1) / 2 * 31).astype(int), 0, 31)
grid[ij[:, 0], ij[:, 1]] = "o"
print("\n".join("".join(row) for row in grid.T[::-1]))
