"""Triangle meshes: OFF ingestion and area-weighted surface sampling."""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import OFFParseError


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangle_areas(self):
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _lines(text):
    """Yield (line_number, tokens) for non-blank, non-comment lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_off(data):
    """Parse an OFF file (bytes or str) into a TriangleMesh.

    Accepts the header on its own line or fused with the counts, as in
    ``OFF490 518 0`` found throughout ModelNet. Polygons with more than
    three vertices are fan-triangulated around their first vertex.
    """
    if isinstance(data, (bytes, bytearray, memoryview)):
        data = bytes(data).decode("ascii", errors="replace")
    lines = _lines(data)
    last_line = 0

    def next_line(what):
        nonlocal last_line
        try:
            lineno, toks = next(lines)
        except StopIteration:
            raise OFFParseError(f"unexpected end of file, expected {what}", last_line + 1) from None
        last_line = lineno
        return lineno, toks

    lineno, toks = next_line("OFF header")
    head = toks[0]
    if not head.startswith("OFF"):
        raise OFFParseError(f"missing OFF header, got {head!r}", lineno)
    rest = head[3:]
    counts = ([rest] if rest else []) + toks[1:]
    if not counts:
        lineno, counts = next_line("vertex/face counts")
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (IndexError, ValueError):
        raise OFFParseError(f"malformed counts {' '.join(counts)!r}", lineno) from None
    if nv < 0 or nf < 0:
        raise OFFParseError("negative counts", lineno)

    vertices = np.empty((nv, 3), dtype=np.float64)
    for v in range(nv):
        lineno, toks = next_line(f"vertex {v}")
        try:
            vertices[v] = [float(t) for t in toks[:3]]
        except ValueError:
            raise OFFParseError(f"malformed vertex {' '.join(toks)!r}", lineno) from None
        if len(toks) < 3:
            raise OFFParseError("vertex needs 3 coordinates", lineno)

    faces = []
    for f in range(nf):
        lineno, toks = next_line(f"face {f}")
        try:
            k = int(toks[0])
            idx = [int(t) for t in toks[1:1 + k]]
        except ValueError:
            raise OFFParseError(f"malformed face {' '.join(toks)!r}", lineno) from None
        if k < 3 or len(idx) != k:
            raise OFFParseError(f"face declares {k} vertices but lists {len(idx)}", lineno)
        for i in idx:
            if not 0 <= i < nv:
                raise OFFParseError(f"face index {i} out of range for {nv} vertices", lineno)
        for t in range(1, k - 1):
            faces.append((idx[0], idx[t], idx[t + 1]))

    return TriangleMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))


def read_off(path):
    with open(path, "rb") as fh:
        return parse_off(fh.read())


def _sample_triangles(vertices, faces, n, rng):
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    keep = areas > 0
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} zero-area faces", stacklevel=3)
        a, b, c, areas = a[keep], b[keep], c[keep], areas[keep]
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has zero total surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    wa = 1.0 - r1
    wb = r1 * (1.0 - r2)
    wc = r1 * r2
    return wa[:, None] * a[tri] + wb[:, None] * b[tri] + wc[:, None] * c[tri]


def sample_surface(mesh, n, seed):
    """Draw ``n`` points uniformly by area over the mesh surface.

    The result is deterministic for a given seed and is not normalized.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return _sample_triangles(mesh.vertices, mesh.faces, n, rng)
