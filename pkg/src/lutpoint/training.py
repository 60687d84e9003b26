"""From-scratch backprop and Adam for the point-wise MLP and its head.

Max pooling routes each channel's gradient to the single point that attains
the channel maximum (the first one on ties), so the point-wise backward pass
only ever touches those critical points.
"""
import hashlib
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError
from .network import HEAD_HIDDEN, POINTWISE_WIDTHS, HeadModel, PointwiseMLP, check_compatible, models_to_bytes


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    decay_every: int = 20
    decay_rate: float = 0.7
    widths: tuple = POINTWISE_WIDTHS
    head_hidden: tuple = HEAD_HIDDEN

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def lr_at(self, epoch):
        return self.learning_rate * self.decay_rate ** (epoch // self.decay_every)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    wall_time: float = 0.0
    checksum: str = ""

    def to_csv(self):
        out = io.StringIO()
        out.write("epoch,loss,train_acc,val_acc\n")
        for e in self.epochs:
            out.write(f"{e.epoch},{e.loss:.6f},{e.train_acc:.4f},{e.val_acc:.4f}\n")
        return out.getvalue()

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    def summary(self):
        if not self.epochs:
            return f"no epochs run; checksum {self.checksum[:16]}"
        first, last = self.epochs[0], self.epochs[-1]
        return (f"{len(self.epochs)} epochs in {self.wall_time:.1f}s: loss {first.loss:.4f} -> {last.loss:.4f}, "
                f"train acc {last.train_acc:.2%}, val acc {last.val_acc:.2%}, checksum {self.checksum[:16]}")


def model_checksum(pointwise, head):
    return hashlib.sha256(models_to_bytes(pointwise, head)).hexdigest()


# --- loss --------------------------------------------------------------------

def softmax_xent(logits, label):
    """Cross-entropy of one logit vector against ``label`` and its gradient."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    logsum = np.log(np.exp(shifted).sum())
    grad = np.exp(shifted - logsum)
    loss = logsum - shifted[label]
    grad[label] -= 1.0
    return float(loss), grad


def _batch_xent(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(shifted - logsum)
    rows = np.arange(len(labels))
    losses = logsum[:, 0] - shifted[rows, labels]
    grad = probs
    grad[rows, labels] -= 1.0
    return losses, grad


# --- forward/backward ----------------------------------------------------------

def _head_backward(head, acts, d_out):
    """Backprop ``d_out`` (gradient wrt logits) through the head.

    ``acts`` are the head inputs of each layer. Returns per-layer
    (dW, db) pairs and the gradient wrt the head input.
    """
    grads = [None] * len(head.layers)
    d = d_out
    for k in range(len(head.layers) - 1, -1, -1):
        layer = head.layers[k]
        grads[k] = (d.T @ acts[k], d.sum(axis=0))
        d = d @ layer.weight
        if k > 0:
            d = d * (acts[k] > 0)
    return grads, d


def _head_forward_trace(head, x):
    acts = [x]
    for layer in head.layers[:-1]:
        x = np.maximum(layer(x), 0)
        acts.append(x)
    return head.layers[-1](x), acts


def backward(pointwise, head, clouds, labels):
    """Mean softmax loss over a batch and the gradient of every parameter.

    ``clouds`` is a ``(B, n, 3)`` array (or a list of equally sized clouds).
    Returns ``(loss, pointwise_grads, head_grads, logits)`` where the grads
    are lists of ``(dW, db)`` per layer.
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B, n, _ = clouds.shape
    x = clouds.reshape(B * n, 3)

    acts = [x]
    for layer in pointwise.layers[:-1]:
        x = np.maximum(layer(x), 0)
        acts.append(x)
    z = pointwise.layers[-1](x).reshape(B, n, -1)
    m = z.shape[2]
    arg = z.argmax(axis=1)  # (B, m), first occurrence on ties
    feats = np.take_along_axis(z, arg[:, None, :], axis=1)[:, 0, :]
    del z

    logits, head_acts = _head_forward_trace(head, feats)
    losses, d_logits = _batch_xent(logits, labels)
    d_logits /= B
    head_grads, d_feat = _head_backward(head, head_acts, d_logits)

    # route each (cloud, channel) gradient to its critical point only
    flat = (arg + n * np.arange(B)[:, None]).ravel()
    rows, inv = np.unique(flat, return_inverse=True)
    d = np.zeros((len(rows), m))
    d[inv, np.tile(np.arange(m), B)] = d_feat.ravel()

    pw_grads = [None] * len(pointwise.layers)
    for k in range(len(pointwise.layers) - 1, -1, -1):
        a_prev = acts[k][rows]
        pw_grads[k] = (d.T @ a_prev, d.sum(axis=0))
        if k > 0:
            d = (d @ pointwise.layers[k].weight) * (a_prev > 0)
    return float(losses.mean()), pw_grads, head_grads, logits


# --- optimizer ----------------------------------------------------------------

class Adam:
    def __init__(self, params, config):
        self.params = params
        self.cfg = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr):
        self.t += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _flatten(grads):
    return [g for pair in grads for g in pair]


def _check_finite(loss, blocks, epoch, batch):
    if np.isfinite(loss):
        return
    bad = [name for name, g in blocks if not np.isfinite(g).all()]
    raise NonFiniteError(f"non-finite loss {loss} at epoch {epoch}, batch {batch}; "
                         f"non-finite gradient blocks: {', '.join(bad) or 'none'}")


def _grad_blocks(prefix, grads):
    return [(f"{prefix}[{k}].{n}", g) for k, pair in enumerate(grads) for n, g in zip(("W", "b"), pair)]


def accuracy(logits, labels):
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels))) if len(labels) else float("nan")


def exact_logits(pointwise, head, clouds, chunk=8):
    from .network import batch_global_features
    return head.forward(batch_global_features(pointwise, clouds, chunk))[0]


def train(dataset, config=None, val=None, log=None):
    """Jointly train a fresh point-wise MLP and head on ``dataset``.

    Deterministic for a fixed ``config.seed``. ``val`` (optional Dataset) is
    scored after every epoch.
    """
    config = config or TrainConfig()
    if dataset.num_classes < 2:
        raise ValueError("training needs at least 2 classes")
    clouds = dataset.stacked()
    labels = dataset.labels
    val_clouds = val.stacked() if val is not None else None

    pointwise = PointwiseMLP.init(config.widths, seed=[config.seed, 1])
    head = HeadModel.init(pointwise.m, dataset.num_classes, config.head_hidden, seed=[config.seed, 2])
    opt = Adam(pointwise.parameters() + head.parameters(), config)
    order_rng = np.random.default_rng([config.seed, 3])

    report = TrainReport()
    start = time.perf_counter()
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = order_rng.permutation(len(clouds))
        loss_sum, correct = 0.0, 0
        for b, at in enumerate(range(0, len(order), config.batch_size)):
            idx = order[at:at + config.batch_size]
            loss, pw_g, head_g, logits = backward(pointwise, head, clouds[idx], labels[idx])
            _check_finite(loss, _grad_blocks("pointwise", pw_g) + _grad_blocks("head", head_g), epoch, b)
            opt.step(_flatten(pw_g) + _flatten(head_g), lr)
            loss_sum += loss * len(idx)
            correct += int((np.argmax(logits, axis=1) == labels[idx]).sum())
        val_acc = accuracy(exact_logits(pointwise, head, val_clouds), val.labels) if val is not None else float("nan")
        stats = EpochStats(epoch + 1, loss_sum / len(clouds), correct / len(clouds), val_acc)
        report.epochs.append(stats)
        if log:
            log(stats)
    report.wall_time = time.perf_counter() - start
    report.checksum = model_checksum(pointwise, head)
    return pointwise, head, report


def train_head(head, features, labels, config, val_features=None, val_labels=None, log=None):
    """Train only ``head`` on fixed feature vectors; returns a new head and its report."""
    head = head.astype(np.float64)
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    opt = Adam(head.parameters(), config)
    order_rng = np.random.default_rng([config.seed, 4])
    report = TrainReport()
    start = time.perf_counter()
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = order_rng.permutation(len(features))
        loss_sum, correct = 0.0, 0
        for b, at in enumerate(range(0, len(order), config.batch_size)):
            idx = order[at:at + config.batch_size]
            logits, acts = _head_forward_trace(head, features[idx])
            losses, d_logits = _batch_xent(logits, labels[idx])
            loss = float(losses.mean())
            grads, _ = _head_backward(head, acts, d_logits / len(idx))
            _check_finite(loss, _grad_blocks("head", grads), epoch, b)
            opt.step(_flatten(grads), lr)
            loss_sum += loss * len(idx)
            correct += int((np.argmax(logits, axis=1) == labels[idx]).sum())
        val_acc = float("nan")
        if val_features is not None:
            val_acc = accuracy(head.forward(val_features)[0], val_labels)
        stats = EpochStats(epoch + 1, loss_sum / len(features), correct / len(features), val_acc)
        report.epochs.append(stats)
        if log:
            log(stats)
    report.wall_time = time.perf_counter() - start
    report.checksum = hashlib.sha256(b"".join(p.astype("<f4").tobytes() for p in head.parameters())).hexdigest()
    return head, report


FINETUNE_DEFAULTS = dict(epochs=20, learning_rate=1e-4, decay_every=10)


def finetune_head(head, table, dataset, config=None, val=None, log=None):
    """Retrain the head on baked features read through ``table``.

    The table (and the network it came from) stays frozen; features are
    extracted once since they do not change during fine-tuning.
    """
    from .engine import extract_features

    config = config or TrainConfig(**FINETUNE_DEFAULTS)
    check_compatible(head, m=table.m, n_classes=dataset.num_classes)
    if config.epochs == 0:
        return head.copy(), TrainReport()
    feats = extract_features(table, dataset.clouds)
    val_feats = extract_features(table, val.clouds) if val is not None else None
    return train_head(head, feats, dataset.labels, config, val_feats,
                      val.labels if val is not None else None, log)
