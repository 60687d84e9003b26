"""
Train, bake, fine-tune
======================

Train on a small synthetic shape set, bake a coarse table and retrain only
the head on baked features. Runs in a few seconds.
"""
import numpy as np

from lutpoint import GridSpec, TrainConfig, bake, finetune_head, generate_synthetic, train
from lutpoint.analysis import evaluate
from lutpoint.engine import extract_features
from lutpoint.network import batch_global_features
from lutpoint.training import FINETUNE_DEFAULTS

families = ["sphere", "cube", "cylinder", "torus"]
train_set = generate_synthetic(families, 12, 256, seed=1)
test_set = generate_synthetic(families, 6, 256, seed=1, split="test")

# a narrower network than the default keeps this quick
cfg = TrainConfig(epochs=15, decay_every=5, widths=(32, 32, 64, 256), head_hidden=(128, 64))
pointwise, head, report = train(train_set, cfg, val=test_set)
print(report.summary())

feats = batch_global_features(pointwise, test_set.stacked())
exact = evaluate(np.argmax(head.forward(feats)[0], axis=1), test_set.labels, 4)
print("exact features:", f"{exact.overall:.2%}")

table = bake(pointwise, GridSpec(12))
baked_feats = extract_features(table, test_set.clouds)
baked = evaluate(np.argmax(head.forward(baked_feats)[0], axis=1), test_set.labels, 4)
print("S=12 table:    ", f"{baked.overall:.2%}")

tuned, _ = finetune_head(head, table, train_set, TrainConfig(**FINETUNE_DEFAULTS))
ft = evaluate(np.argmax(tuned.forward(baked_feats)[0], axis=1), test_set.labels, 4)
print("after finetune:", f"{ft.overall:.2%}")
print(ft.to_text(families))
