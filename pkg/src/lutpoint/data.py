"""Point clouds, labeled datasets, the synthetic shape generator and the
native ``PCLD0001`` dataset format.

A point cloud is simply an ``(n, 3)`` float array; after :func:`normalize`
every coordinate lies in ``[-1, 1]``.
"""
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _binio
from .errors import DegenerateCloudWarning, FormatError, LengthMismatchError
from .mesh import _sample_triangles

FAMILIES = ("sphere", "cube", "cylinder", "cone", "torus", "pyramid", "capsule", "plane-cross")
JITTER_SIGMA = 0.01

DATASET_MAGIC = b"PCLD0001"
DATASET_VERSION = 1


def as_cloud(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
    if len(pts) < 1:
        raise ValueError("point cloud is empty")
    if not np.isfinite(pts).all():
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def normalize(points):
    """Center on the bounding-box center and scale uniformly into [-1, 1]^3.

    The axis with the largest extent ends up touching -1 and 1. A cloud whose
    points all coincide is mapped to the origin with a DegenerateCloudWarning.
    """
    pts = as_cloud(points)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max())
    if half == 0.0:
        warnings.warn("all points identical; cloud collapsed to origin", DegenerateCloudWarning, stacklevel=2)
        return np.zeros_like(pts)
    return np.clip((pts - center) / half, -1.0, 1.0)


class LabeledCloud(NamedTuple):
    cloud: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    clouds: tuple
    labels: np.ndarray
    class_names: tuple
    split: str = "train"
    _stack: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clouds", tuple(self.clouds))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.clouds):
            raise ValueError("labels and clouds differ in length")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("label out of range for the class list")

    @property
    def num_classes(self):
        return len(self.class_names)

    def __len__(self):
        return len(self.clouds)

    def __getitem__(self, i):
        return LabeledCloud(self.clouds[i], int(self.labels[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def stacked(self):
        """All clouds as one ``(k, n, 3)`` array; requires equal point counts."""
        if not self._stack:
            sizes = {len(c) for c in self.clouds}
            if len(sizes) > 1:
                raise ValueError(f"clouds have differing point counts {sorted(sizes)}")
            self._stack.append(np.stack([np.asarray(c, dtype=np.float64) for c in self.clouds]))
        return self._stack[0]


# --- synthetic shapes --------------------------------------------------------

def _box_mesh(hx, hy, hz):
    v = np.array([[x, y, z] for x in (-hx, hx) for y in (-hy, hy) for z in (-hz, hz)])
    f = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return v, f


def _pick(rng, parts, n):
    """Split n samples over surface parts proportionally to their areas."""
    areas = np.array([a for a, _ in parts])
    which = rng.choice(len(parts), size=n, p=areas / areas.sum())
    out = np.empty((n, 3))
    for k, (_, sampler) in enumerate(parts):
        mask = which == k
        out[mask] = sampler(int(mask.sum()))
    return out


def _unit_sphere(rng, n):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sample_family(name, n, rng):
    """Clean surface samples of one random instance of a shape family."""
    if name == "sphere":
        r = rng.uniform(0.6, 1.0)
        return r * _unit_sphere(rng, n)
    if name == "cube":
        v, f = _box_mesh(*rng.uniform(0.7, 1.0, 3))
        return _sample_triangles(v, f, n, rng)
    if name == "cylinder":
        r, h = rng.uniform(0.35, 0.55), rng.uniform(0.7, 1.0)

        def side(k):
            t = rng.uniform(0, 2 * np.pi, k)
            return np.column_stack([r * np.cos(t), r * np.sin(t), rng.uniform(-h, h, k)])

        def cap(z):
            def s(k):
                rad, t = r * np.sqrt(rng.random(k)), rng.uniform(0, 2 * np.pi, k)
                return np.column_stack([rad * np.cos(t), rad * np.sin(t), np.full(k, z)])
            return s

        return _pick(rng, [(4 * np.pi * r * h, side), (np.pi * r * r, cap(h)), (np.pi * r * r, cap(-h))], n)
    if name == "cone":
        r, height = rng.uniform(0.5, 0.8), rng.uniform(1.3, 1.8)

        def lateral(k):
            s, t = np.sqrt(rng.random(k)), rng.uniform(0, 2 * np.pi, k)
            return np.column_stack([s * r * np.cos(t), s * r * np.sin(t), height / 2 - s * height])

        def base(k):
            rad, t = r * np.sqrt(rng.random(k)), rng.uniform(0, 2 * np.pi, k)
            return np.column_stack([rad * np.cos(t), rad * np.sin(t), np.full(k, -height / 2)])

        return _pick(rng, [(np.pi * r * np.hypot(r, height), lateral), (np.pi * r * r, base)], n)
    if name == "torus":
        big, small = rng.uniform(0.6, 0.8), rng.uniform(0.15, 0.3)
        out = np.empty((0, 3))
        while len(out) < n:
            u = rng.uniform(0, 2 * np.pi, 2 * n)
            v = rng.uniform(0, 2 * np.pi, 2 * n)
            keep = rng.random(2 * n) < (big + small * np.cos(v)) / (big + small)
            u, v = u[keep], v[keep]
            ring = big + small * np.cos(v)
            out = np.vstack([out, np.column_stack([ring * np.cos(u), ring * np.sin(u), small * np.sin(v)])])
        return out[:n]
    if name == "pyramid":
        a, height = rng.uniform(0.6, 0.9), rng.uniform(1.0, 1.6)
        v = np.array([[-a, -a, -height / 2], [a, -a, -height / 2], [a, a, -height / 2],
                      [-a, a, -height / 2], [0, 0, height / 2]])
        f = np.array([[0, 2, 1], [0, 3, 2], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
        return _sample_triangles(v, f, n, rng)
    if name == "capsule":
        r, h = rng.uniform(0.3, 0.4), rng.uniform(0.5, 0.7)

        def side(k):
            t = rng.uniform(0, 2 * np.pi, k)
            return np.column_stack([r * np.cos(t), r * np.sin(t), rng.uniform(-h, h, k)])

        def cap(sign):
            def s(k):
                p = r * _unit_sphere(rng, k)
                p[:, 2] = sign * np.abs(p[:, 2]) + sign * h
                return p
            return s

        hemi = 2 * np.pi * r * r
        return _pick(rng, [(4 * np.pi * r * h, side), (hemi, cap(1.0)), (hemi, cap(-1.0))], n)
    if name == "plane-cross":
        w, height = rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0)
        v = np.array([[-w, 0, -height], [w, 0, -height], [w, 0, height], [-w, 0, height],
                      [0, -w, -height], [0, w, -height], [0, w, height], [0, -w, height]])
        f = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
        return _sample_triangles(v, f, n, rng)
    raise ValueError(f"unknown shape family {name!r}; choose from {', '.join(FAMILIES)}")


def _rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_SPLIT_KEYS = {"train": 0, "val": 1, "test": 2}


def synthetic_instance(family, n_points, seed, split="train", index=0):
    """One normalized cloud of ``family``.

    The instance (size, orientation, offset) depends only on
    ``(seed, split, family, index)``; ``n_points`` only changes how densely
    its surface is sampled, so the same test set can be re-sampled at any n.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown shape family {family!r}; choose from {', '.join(FAMILIES)}")
    key = [seed, _SPLIT_KEYS.get(split, 3), FAMILIES.index(family), index]
    shape_rng = np.random.default_rng(key)
    scale = shape_rng.uniform(0.5, 2.0)
    rot = _rotation_z(shape_rng.uniform(0, 2 * np.pi))
    offset = shape_rng.uniform(-0.5, 0.5, 3)
    point_seed = shape_rng.integers(2**63)
    point_rng = np.random.default_rng([int(point_seed), n_points])
    pts = _sample_family(family, n_points, point_rng)
    pts = pts + point_rng.normal(0.0, JITTER_SIGMA, pts.shape)
    pts = scale * pts @ rot.T + offset
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCloudWarning)
        return to_file_precision(normalize(pts))


def to_file_precision(cloud):
    """Round coordinates to float32 (the dataset file precision), keeping float64 dtype."""
    return np.asarray(cloud, dtype=np.float32).astype(np.float64)


def generate_synthetic(classes=FAMILIES, per_class=25, n_points=1024, seed=0, split="train"):
    """Labeled dataset of ``per_class`` random instances per shape family.

    Labels follow the order of ``classes``; items are stored class-major.
    """
    classes = tuple(classes)
    for name in classes:
        if name not in FAMILIES:
            raise ValueError(f"unknown shape family {name!r}; choose from {', '.join(FAMILIES)}")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    clouds, labels = [], []
    for label, name in enumerate(classes):
        for i in range(per_class):
            clouds.append(synthetic_instance(name, n_points, seed, split, i))
            labels.append(label)
    return Dataset(clouds, labels, classes, split)


# --- PCLD0001 ----------------------------------------------------------------

def dataset_to_bytes(dataset):
    parts = [DATASET_MAGIC, _binio.u32(DATASET_VERSION), _binio.u32(dataset.num_classes), _binio.u32(len(dataset))]
    for name in dataset.class_names:
        raw = name.encode("utf-8")
        parts += [_binio.u32(len(raw)), raw]
    for cloud, label in dataset:
        cloud = np.asarray(cloud).reshape(-1, 3)
        parts += [_binio.u32(label), _binio.u32(len(cloud)), _binio.f32_bytes(cloud)]
    return b"".join(parts)


def dataset_from_bytes(buf, split="train"):
    r = _binio.Reader(buf, "dataset")
    _binio.check_header(r, DATASET_MAGIC, DATASET_VERSION)
    n_classes, count = r.u32(), r.u32()
    names = []
    for _ in range(n_classes):
        size = r.u32()
        names.append(bytes(r.take(size)).decode("utf-8"))
    clouds, labels = [], []
    for k in range(count):
        label, n = r.u32(), r.u32()
        if label >= n_classes:
            raise FormatError(f"dataset: item {k} has label {label} >= C={n_classes}")
        clouds.append(r.array("f4", 3 * n).reshape(n, 3))
        labels.append(label)
    if not r.at_end():
        raise LengthMismatchError(f"dataset: {len(r.buf) - r.pos} trailing bytes after {count} items")
    return Dataset(clouds, labels, names, split)


def write_dataset(dataset, path):
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(dataset))


def read_dataset(path, split="train"):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read(), split)
