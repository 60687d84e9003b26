"""The point-wise function set, its max-pooled global feature, and the head.

The point-wise MLP maps every point independently through
3 -> 64 -> 64 -> 64 -> 128 -> 1024 with ReLU between layers and a linear
final layer, so channel ``s`` of its output is a plain function of three
variables. Channel-wise max over the cloud gives the global feature, which
the head classifies.
"""
from dataclasses import dataclass

import numpy as np

from . import _binio
from .errors import BadMagicError, FormatError, IncompatibleArtifactError, LengthMismatchError

POINTWISE_WIDTHS = (64, 64, 64, 128, 1024)
HEAD_HIDDEN = (512, 256)

# BLAS takes different code paths (and summation orders) for very short
# matrices; padding every point-wise evaluation to at least this many rows
# keeps h(x) bit-identical however many points are evaluated alongside x.
MIN_ROWS = 128

MODEL_MAGIC = b"PWMD0001"
MODEL_VERSION = 1
TAG_POINTWISE = 1
TAG_HEAD = 2


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return x @ self.weight.T + self.bias

    def astype(self, dtype):
        return DenseLayer(self.weight.astype(dtype), self.bias.astype(dtype))


def _check_chain(layers, first_in):
    if not layers:
        raise ValueError("a network needs at least one layer")
    expected = first_in
    for k, layer in enumerate(layers):
        if layer.weight.ndim != 2 or layer.bias.shape != (layer.n_out,):
            raise ValueError(f"layer {k}: bias shape {layer.bias.shape} does not match weight {layer.weight.shape}")
        if expected is not None and layer.n_in != expected:
            raise ValueError(f"layer {k} takes {layer.n_in} inputs but previous layer emits {expected}")
        expected = layer.n_out


def _he_uniform(rng, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return DenseLayer(rng.uniform(-bound, bound, (fan_out, fan_in)).astype(dtype), np.zeros(fan_out, dtype))


class _Network:
    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def widths(self):
        return tuple(layer.n_out for layer in self.layers)

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def astype(self, dtype):
        return type(self)([layer.astype(dtype) for layer in self.layers])

    def copy(self):
        return type(self)([DenseLayer(l.weight.copy(), l.bias.copy()) for l in self.layers])

    def parameters(self):
        """Flat list of parameter arrays, ``[W0, b0, W1, b1, ...]``."""
        return [p for layer in self.layers for p in (layer.weight, layer.bias)]

    def __eq__(self, other):
        return (type(self) is type(other) and len(self.layers) == len(other.layers)
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())))


class PointwiseMLP(_Network):
    """Shared per-point MLP; the ``m`` outputs are the functions h_1..h_m."""

    def __init__(self, layers):
        super().__init__(layers)
        _check_chain(self.layers, 3)

    @classmethod
    def init(cls, widths=POINTWISE_WIDTHS, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        dims = (3,) + tuple(widths)
        return cls([_he_uniform(rng, a, b, dtype) for a, b in zip(dims[:-1], dims[1:])])

    @property
    def m(self):
        return self.layers[-1].n_out

    def forward(self, points):
        """(..., 3) points -> (..., m) channel values, evaluated in the model's dtype."""
        x = np.asarray(points, dtype=self.dtype)
        lead = x.shape[:-1]
        x = x.reshape(-1, 3)
        n = len(x)
        if n < MIN_ROWS:
            x = np.vstack([x, np.zeros((MIN_ROWS - n, 3), dtype=x.dtype)])
        for layer in self.layers[:-1]:
            x = np.maximum(layer(x), 0)
        return self.layers[-1](x)[:n].reshape(lead + (self.m,))


class HeadModel(_Network):
    """Classifier m -> 512 -> 256 -> C; the 256-wide activation is the embedding."""

    def __init__(self, layers):
        super().__init__(layers)
        _check_chain(self.layers, None)

    @classmethod
    def init(cls, m=1024, n_classes=8, hidden=HEAD_HIDDEN, seed=1, dtype=np.float64):
        rng = np.random.default_rng(seed)
        dims = (m,) + tuple(hidden) + (n_classes,)
        return cls([_he_uniform(rng, a, b, dtype) for a, b in zip(dims[:-1], dims[1:])])

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_classes(self):
        return self.layers[-1].n_out

    def forward(self, features):
        """Return ``(logits, embedding)`` for one feature vector or a batch."""
        x = np.asarray(features, dtype=self.dtype)
        if x.shape[-1] != self.n_in:
            raise IncompatibleArtifactError(f"head expects {self.n_in} features, got {x.shape[-1]}")
        for layer in self.layers[:-1]:
            x = np.maximum(layer(x), 0)
        return self.layers[-1](x), x


@dataclass(frozen=True)
class GlobalFeature:
    values: np.ndarray
    provenance: str  # "exact" or "baked"
    critical: np.ndarray = None  # argmax point index per channel, when requested

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def eval_h(model, point):
    """All m function values at a single point."""
    return model.forward(np.asarray(point, dtype=np.float64).reshape(1, 3))[0]


def global_feature(model, cloud, return_critical=False):
    """Channel-wise max of h over the cloud.

    With ``return_critical`` the first index attaining each channel's maximum
    is kept on the result as ``critical``.
    """
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot pool over an empty cloud")
    h = model.forward(pts)
    if return_critical:
        arg = h.argmax(axis=0)
        return GlobalFeature(h[arg, np.arange(h.shape[1])], "exact", arg)
    return GlobalFeature(h.max(axis=0), "exact")


def batch_global_features(model, clouds, chunk=8):
    """Exact features for a stack of equally sized clouds, ``(k, n, 3) -> (k, m)``."""
    clouds = np.asarray(clouds)
    out = np.empty((len(clouds), model.m), dtype=model.dtype)
    for start in range(0, len(clouds), chunk):
        out[start:start + chunk] = model.forward(clouds[start:start + chunk]).max(axis=1)
    return out


def head_forward(head, feature):
    return head.forward(np.asarray(feature))


def check_compatible(head, m=None, n_classes=None):
    if m is not None and head.n_in != m:
        raise IncompatibleArtifactError(f"head input width {head.n_in} != feature width m={m}")
    if n_classes is not None and head.n_classes != n_classes:
        raise IncompatibleArtifactError(f"head predicts {head.n_classes} classes, dataset has C={n_classes}")


# --- PWMD0001 ----------------------------------------------------------------

def _section_bytes(tag, net):
    parts = [bytes([tag]), _binio.u32(len(net.layers))]
    for layer in net.layers:
        parts += [_binio.u32(layer.n_in), _binio.u32(layer.n_out),
                  _binio.f32_bytes(layer.weight), _binio.f32_bytes(layer.bias)]
    return b"".join(parts)


def models_to_bytes(pointwise, head):
    check_compatible(head, m=pointwise.m)
    return b"".join([MODEL_MAGIC, _binio.u32(MODEL_VERSION),
                     _section_bytes(TAG_POINTWISE, pointwise), _section_bytes(TAG_HEAD, head)])


def models_from_bytes(buf):
    r = _binio.Reader(buf, "model")
    _binio.check_header(r, MODEL_MAGIC, MODEL_VERSION)
    sections = {}
    for _ in range(2):
        tag, count = r.u8(), r.u32()
        if tag not in (TAG_POINTWISE, TAG_HEAD) or tag in sections:
            raise FormatError(f"model: unexpected section tag {tag}")
        layers = []
        for _ in range(count):
            n_in, n_out = r.u32(), r.u32()
            w = r.array("f4", n_in * n_out).reshape(n_out, n_in)
            layers.append(DenseLayer(w, r.array("f4", n_out)))
        sections[tag] = layers
    if not r.at_end():
        raise LengthMismatchError(f"model: {len(r.buf) - r.pos} trailing bytes")
    try:
        pointwise, head = PointwiseMLP(sections[TAG_POINTWISE]), HeadModel(sections[TAG_HEAD])
    except ValueError as exc:
        raise FormatError(f"model: {exc}") from None
    if head.n_in != pointwise.m:
        raise IncompatibleArtifactError(f"model: head input width {head.n_in} != point-wise m={pointwise.m}")
    return pointwise, head


def write_models(path, pointwise, head):
    with open(path, "wb") as fh:
        fh.write(models_to_bytes(pointwise, head))


def read_models(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MODEL_MAGIC:
        raise BadMagicError(f"model: bad magic {buf[:8]!r}, expected {MODEL_MAGIC!r}")
    return models_from_bytes(buf)
