"""Accuracy as a function of grid resolution S and of input point count n."""
import os
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from ..baker import GridSpec, bake, table_payload_bytes
from ..data import DegenerateCloudWarning, normalize
from ..engine import extract_features
from ..network import batch_global_features, check_compatible
from ..training import FINETUNE_DEFAULTS, TrainConfig, accuracy, train_head

IN_MEMORY_LIMIT = 2 << 30


@dataclass
class VoxelSweepRow:
    S: int
    memory_bytes: int
    acc_baked: float
    acc_finetuned: float = float("nan")


@dataclass
class PointSweepRow:
    n: int
    accuracy: float


def rows_to_csv(rows):
    fields = list(rows[0].__dataclass_fields__) if rows else []
    out = [",".join(fields)]
    for r in rows:
        out.append(",".join(f"{getattr(r, f):.6f}" if isinstance(getattr(r, f), float) else str(getattr(r, f))
                            for f in fields))
    return "\n".join(out) + "\n"


def sweep_voxels(model, head, train_set, test_set, S_list=(25, 50, 100, 200), L=8, finetune=True,
                 config=None, workdir=None, log=None):
    """Bake at each S, score the head on baked test features, optionally fine-tune.

    Tables above ``IN_MEMORY_LIMIT`` bytes are streamed to a scratch file in
    ``workdir`` (a temporary directory by default) and deleted afterwards.
    """
    check_compatible(head, m=model.m, n_classes=test_set.num_classes)
    config = config or TrainConfig(**FINETUNE_DEFAULTS)
    rows = []
    for S in S_list:
        spec = GridSpec(S, L)
        nbytes = table_payload_bytes(model.m, S, L)
        with tempfile.TemporaryDirectory(dir=workdir) as scratch:
            out = os.path.join(scratch, f"S{S}.lut") if nbytes > IN_MEMORY_LIMIT else None
            table = bake(model, spec, out=out)
            test_feats = extract_features(table, test_set.clouds)
            train_feats = extract_features(table, train_set.clouds) if finetune else None
            del table
        row = VoxelSweepRow(S, nbytes, accuracy(head.forward(test_feats)[0], test_set.labels))
        if finetune:
            tuned, _ = train_head(head, train_feats, train_set.labels, config)
            row.acc_finetuned = accuracy(tuned.forward(test_feats)[0], test_set.labels)
        rows.append(row)
        if log:
            log(row)
    return rows


def resample(cloud, n, rng):
    """Pick n points (with replacement only when n exceeds the cloud) and renormalize."""
    cloud = np.asarray(cloud)
    idx = rng.choice(len(cloud), size=n, replace=n > len(cloud))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCloudWarning)
        return normalize(cloud[idx])


def sweep_points(head, dataset, n_list=(64, 128, 500, 1024), table=None, model=None, seed=0):
    """Accuracy of the head when every test cloud is re-sampled to n points.

    Features come from ``table`` when given, else from the exact ``model``.
    The subsample for each (n, item) is fixed by ``seed``.
    """
    if (table is None) == (model is None):
        raise ValueError("pass exactly one of table= or model=")
    source = table if table is not None else model
    check_compatible(head, m=source.m, n_classes=dataset.num_classes)
    rows = []
    for n in n_list:
        if n < 1:
            raise ValueError("point counts must be >= 1")
        clouds = [resample(c, n, np.random.default_rng([seed, n, i])) for i, c in enumerate(dataset.clouds)]
        if table is not None:
            feats = extract_features(table, clouds)
        else:
            feats = batch_global_features(model, np.stack(clouds))
        rows.append(PointSweepRow(n, accuracy(head.forward(feats)[0], dataset.labels)))
    return rows
