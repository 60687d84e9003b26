"""Planar slices through one channel's level sets, with the cloud's critical points.

Max pooling picks, per channel, the point where h_s is largest over the
cloud; the level set through that value touches the shape there and the
whole cloud sits in the sub-level set {h_s <= critical value}.
"""
from dataclasses import dataclass

import numpy as np

from ..network import global_feature

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class LevelSetSlice:
    channel: int
    axis: int  # axis normal to the slice plane
    offset: float
    coords: np.ndarray  # (R,) grid coordinates along both in-plane axes
    values: np.ndarray  # (R, R) h_channel; values[a, b] at (coords[a], coords[b])
    critical_points: np.ndarray  # (m, 3) argmax point of each channel
    critical_values: np.ndarray  # (m,)

    @property
    def resolution(self):
        return len(self.coords)

    @property
    def plane_axes(self):
        return tuple(a for a in range(3) if a != self.axis)

    @property
    def critical_value(self):
        return float(self.critical_values[self.channel])

    def to_csv(self):
        names = "xyz"
        a, b = self.plane_axes
        lines = [f"{names[a]},{names[b]},value"]
        for i, u in enumerate(self.coords):
            for j, v in enumerate(self.coords):
                lines.append(f"{u:.6f},{v:.6f},{self.values[i, j]:.8g}")
        return "\n".join(lines) + "\n"

    def critical_csv(self):
        lines = ["channel,x,y,z,value"]
        for s, (p, val) in enumerate(zip(self.critical_points, self.critical_values)):
            lines.append(f"{s},{p[0]:.6f},{p[1]:.6f},{p[2]:.6f},{val:.8g}")
        return "\n".join(lines) + "\n"

    def to_pgm(self):
        """8-bit greyscale image of the slice (row = first in-plane axis)."""
        v = self.values
        lo, hi = float(v.min()), float(v.max())
        img = np.zeros(v.shape, np.uint8) if hi == lo else np.round((v - lo) / (hi - lo) * 255).astype(np.uint8)
        R = self.resolution
        return f"P5\n{R} {R}\n255\n".encode() + img.tobytes()


def probe_level_set(model, cloud, channel, axis="z", offset=0.0, resolution=64):
    """Sample ``h_channel`` on an R x R grid in the plane ``axis = offset``."""
    axis = AXES.get(axis, axis)
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be x, y, z or 0..2, got {axis!r}")
    if not 0 <= channel < model.m:
        raise ValueError(f"channel {channel} outside [0, {model.m})")
    if not -1.0 <= offset <= 1.0:
        raise ValueError(f"offset {offset} outside [-1, 1]")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    coords = np.linspace(-1.0, 1.0, resolution)
    a, b = (d for d in range(3) if d != axis)
    grid = np.empty((resolution, resolution, 3))
    grid[..., axis] = offset
    grid[..., a], grid[..., b] = np.meshgrid(coords, coords, indexing="ij")
    values = model.forward(grid.reshape(-1, 3))[:, channel].reshape(resolution, resolution).astype(np.float64)
    if not np.isfinite(values).all():
        raise FloatingPointError("non-finite values in the slice")
    cloud = np.asarray(cloud, dtype=np.float64)
    feat = global_feature(model, cloud, return_critical=True)
    return LevelSetSlice(channel, axis, float(offset), coords, values, cloud[feat.critical],
                         np.asarray(feat.values, dtype=np.float64))


def sublevel_containment(level_slice, cloud, band=None):
    """Fraction of cloud points near the plane whose projection lies, within
    one grid cell, in the slice's sub-level set {h <= critical value}.

    Points farther than ``band`` (default: one grid cell) from the plane are
    ignored. Returns ``(fraction, points_considered)``.
    """
    s = level_slice
    cell = s.coords[1] - s.coords[0]
    band = cell if band is None else band
    cloud = np.asarray(cloud, dtype=np.float64)
    near = cloud[np.abs(cloud[:, s.axis] - s.offset) <= band]
    if len(near) == 0:
        return float("nan"), 0
    a, b = s.plane_axes
    inside = s.values <= s.critical_value
    R = s.resolution
    ia = np.clip(np.rint((near[:, a] + 1.0) / cell).astype(int), 0, R - 1)
    ib = np.clip(np.rint((near[:, b] + 1.0) / cell).astype(int), 0, R - 1)
    ok = np.zeros(len(near), dtype=bool)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            ok |= inside[np.clip(ia + da, 0, R - 1), np.clip(ib + db, 0, R - 1)]
    return float(ok.mean()), len(near)
