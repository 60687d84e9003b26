import math

import numpy as np
import pytest

from lutpoint.data import Dataset, generate_synthetic
from lutpoint.errors import IncompatibleArtifactError, NonFiniteError
from lutpoint.network import HeadModel, PointwiseMLP
from lutpoint.training import TrainConfig, backward, finetune_head, softmax_xent, train, train_head

TINY = dict(widths=(4, 6), head_hidden=(5, 4))


def reference_loss(pw, head, clouds, labels):
    """Loss through the public forward paths, independent of backward()."""
    total = 0.0
    for cloud, label in zip(clouds, labels):
        feat = pw.forward(cloud).max(axis=0)
        logits = head.forward(feat)[0]
        total += math.log(np.exp(logits - logits.max()).sum()) - (logits[label] - logits.max())
    return total / len(labels)


def finite_difference(pw, head, clouds, labels, h=1e-6):
    grads = []
    for p in pw.parameters() + head.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up = reference_loss(pw, head, clouds, labels)
            p[idx] = keep - h
            down = reference_loss(pw, head, clouds, labels)
            p[idx] = keep
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic(pw, head, clouds, labels):
    loss, pw_g, head_g, _ = backward(pw, head, clouds, labels)
    return loss, [g for pair in pw_g + head_g for g in pair]


def max_rel_error(a, b, floor=1e-7):
    return max(float(np.max(np.abs(x - y) / np.maximum(np.abs(x) + np.abs(y), floor))) for x, y in zip(a, b))


def tiny_problem(seed, n=5, batch=2):
    rng = np.random.default_rng(seed)
    pw = PointwiseMLP.init(TINY["widths"], seed=seed)
    head = HeadModel.init(pw.m, 3, TINY["head_hidden"], seed=seed + 100)
    for p in pw.parameters() + head.parameters():
        p += rng.normal(0, 0.1, p.shape)
    clouds = rng.uniform(-1, 1, (batch, n, 3))
    labels = rng.integers(0, 3, batch)
    return pw, head, clouds, labels


def test_xent_uniform_logits():
    loss, grad = softmax_xent(np.zeros(8), 3)
    assert loss == pytest.approx(math.log(8), abs=1e-12)
    assert loss == pytest.approx(2.0794, abs=1e-4)
    np.testing.assert_allclose(grad, np.full(8, 1 / 8) - np.eye(8)[3])


def test_xent_stable_for_huge_logits():
    loss, grad = softmax_xent(np.eye(5)[2] * 1e6, 2)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(grad).all()


def test_xent_shift_invariant():
    z = np.random.default_rng(0).standard_normal(6)
    assert abs(softmax_xent(z, 1)[0] - softmax_xent(z + 123.4, 1)[0]) < 1e-9


def test_xent_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    z = rng.standard_normal(7)
    _, grad = softmax_xent(z, 4)
    h = 1e-6
    fd = np.array([(softmax_xent(z + h * e, 4)[0] - softmax_xent(z - h * e, 4)[0]) / (2 * h) for e in np.eye(7)])
    assert np.max(np.abs(grad - fd) / np.maximum(np.abs(grad), 1e-12)) < 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_gradient_check(seed):
    pw, head, clouds, labels = tiny_problem(seed)
    loss, grads = analytic(pw, head, clouds, labels)
    assert loss == pytest.approx(reference_loss(pw, head, clouds, labels), rel=1e-12)
    assert max_rel_error(grads, finite_difference(pw, head, clouds, labels)) < 1e-5


def test_gradient_check_with_duplicated_argmax():
    pw, head, clouds, labels = tiny_problem(4, batch=1)
    crit = pw.forward(clouds[0]).argmax(axis=0)
    dup = np.concatenate([clouds, clouds[:, crit[:1]]], axis=1)
    loss, grads = analytic(pw, head, dup, labels)
    assert max_rel_error(grads, finite_difference(pw, head, dup, labels)) < 1e-5
    # one copy takes the gradient; the total is unchanged
    _, base = analytic(pw, head, clouds, labels)
    for a, b in zip(grads, base):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_single_point_is_plain_backprop():
    pw, head, clouds, labels = tiny_problem(5, n=1, batch=1)
    _, grads = analytic(pw, head, clouds, labels)
    assert max_rel_error(grads, finite_difference(pw, head, clouds, labels)) < 1e-5


def test_non_critical_points_get_no_gradient():
    pw, head, clouds, labels = tiny_problem(6, n=20, batch=1)
    crit = set(pw.forward(clouds[0]).argmax(axis=0).tolist())
    others = [p for p in range(20) if p not in crit]
    moved = clouds.copy()
    moved[0, others] *= 0.999  # perturb only non-critical points, keeping them non-critical
    if set(pw.forward(moved[0]).argmax(axis=0).tolist()) == crit:
        a = analytic(pw, head, clouds, labels)[1]
        b = analytic(pw, head, moved, labels)[1]
        for x, y in zip(a[-6:], b[-6:]):  # head gradients depend only on the pooled feature
            np.testing.assert_array_equal(x, y)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    cfg = TrainConfig(learning_rate=1.0)
    assert cfg.lr_at(0) == 1.0 and cfg.lr_at(19) == 1.0
    assert cfg.lr_at(20) == pytest.approx(0.7) and cfg.lr_at(45) == pytest.approx(0.49)


def small_data():
    tr = generate_synthetic(("sphere", "cube", "plane-cross"), per_class=6, n_points=64, seed=0)
    te = generate_synthetic(("sphere", "cube", "plane-cross"), per_class=3, n_points=64, seed=0, split="test")
    return tr, te


SMALL_CFG = dict(widths=(16, 32, 64), head_hidden=(32, 16), batch_size=4)


def test_train_descends_and_reports():
    tr, te = small_data()
    _, _, report = train(tr, TrainConfig(epochs=6, **SMALL_CFG), val=te)
    assert len(report.epochs) == 6
    assert report.epochs[-1].loss < report.epochs[0].loss
    losses = [e.loss for e in report.epochs[:5]]
    assert sum(b > a for a, b in zip(losses, losses[1:])) <= 1
    assert report.to_csv().splitlines()[0] == "epoch,loss,train_acc,val_acc"
    assert len(report.to_csv().splitlines()) == 7
    assert "epochs" in report.summary()


def test_train_is_deterministic():
    tr, _ = small_data()
    cfg = TrainConfig(epochs=2, seed=7, **SMALL_CFG)
    a = train(tr, cfg)
    b = train(tr, cfg)
    assert a[0] == b[0] and a[1] == b[1]
    assert a[2].checksum == b[2].checksum
    assert [e.loss for e in a[2].epochs] == [e.loss for e in b[2].epochs]


def test_train_needs_two_classes():
    ds = Dataset([np.zeros((4, 3))], [0], ["only"])
    with pytest.raises(ValueError):
        train(ds, TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    tr, _ = small_data()
    with pytest.raises(NonFiniteError, match=r"epoch 0, batch \d+; non-finite gradient blocks"):
        train(tr, TrainConfig(epochs=1, learning_rate=1e300, **SMALL_CFG))


def test_train_head_only_touches_head():
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((30, 6))
    labels = (feats[:, 0] > 0).astype(int)
    head = HeadModel.init(6, 2, (8, 4), seed=0)
    new, report = train_head(head, feats, labels, TrainConfig(epochs=30, learning_rate=1e-2, batch_size=5))
    assert report.epochs[-1].loss < report.epochs[0].loss
    assert new != head


def test_finetune_zero_epochs_is_identity():
    from lutpoint.baker import GridSpec, bake
    tr, _ = small_data()
    pw = PointwiseMLP.init((8,), seed=0)
    head = HeadModel.init(8, 3, (6, 5), seed=0)
    table = bake(pw, GridSpec(4))
    same, _ = finetune_head(head, table, tr, TrainConfig(epochs=0))
    assert same == head


def test_finetune_rejects_mismatched_table():
    from lutpoint.baker import GridSpec, bake
    tr, _ = small_data()
    table = bake(PointwiseMLP.init((8,), seed=0), GridSpec(4))
    with pytest.raises(IncompatibleArtifactError):
        finetune_head(HeadModel.init(9, 3, (6, 5)), table, tr)
    with pytest.raises(IncompatibleArtifactError):
        finetune_head(HeadModel.init(8, 4, (6, 5)), table, tr)
