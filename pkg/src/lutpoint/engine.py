"""Deployment path: voxel indices -> table rows -> running max -> dequantize.

The per-channel max is taken over stored levels and dequantized once at the
end; dequantization is a non-decreasing affine map per channel, so the two
orders give identical results.
"""
import numba
import numpy as np

from .baker import INDEX_SNAP
from .network import GlobalFeature, check_compatible


@numba.njit(cache=True, nogil=True)
def _max_levels(rows, points, S, delta, snap, out):
    m = rows.shape[1]
    top = S - 1
    for p in range(points.shape[0]):
        i = int(np.floor((points[p, 0] + 1.0) / delta + snap))
        j = int(np.floor((points[p, 1] + 1.0) / delta + snap))
        k = int(np.floor((points[p, 2] + 1.0) / delta + snap))
        i = min(max(i, 0), top)
        j = min(max(j, 0), top)
        k = min(max(k, 0), top)
        row = rows[(i * S + j) * S + k]
        for s in range(m):
            if row[s] > out[s]:
                out[s] = row[s]


def lookup_levels(table, cloud):
    """Per-channel max stored level over the cloud's voxels."""
    pts = np.ascontiguousarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot pool over an empty cloud")
    if np.isnan(pts).any():
        raise ValueError("NaN coordinate")
    out = np.zeros(table.m, dtype=table.spec.dtype)
    _max_levels(np.asarray(table.rows()), pts, table.spec.S, table.spec.delta, INDEX_SNAP, out)
    return out


def lookup_feature(table, cloud):
    """Approximate global feature of a normalized cloud, read from the table."""
    return GlobalFeature(table.dequantize(lookup_levels(table, cloud)), "baked")


def extract_features(table, clouds):
    """Baked features for a sequence of clouds as a ``(k, m)`` float64 array."""
    levels = np.empty((len(clouds), table.m), dtype=table.spec.dtype)
    for n, cloud in enumerate(clouds):
        levels[n] = lookup_levels(table, cloud)
    return table.dequantize(levels).reshape(len(clouds), table.m)


def batch_extract(table, clouds):
    return [lookup_feature(table, c) for c in clouds]


def classify(table, head, cloud):
    """Return ``(label, logits, embedding)`` for one cloud via the table."""
    check_compatible(head, m=table.m)
    logits, embedding = head.forward(lookup_feature(table, cloud).values)
    return int(np.argmax(logits)), logits, embedding
