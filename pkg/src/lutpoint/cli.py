"""``lutpoint`` command line: data, training, baking, evaluation, benchmarks.

Exit status is 0 on success, 1 when a validation step or a requested
threshold fails, and 2 on usage errors.
"""
import argparse
import json
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import baker, data, network
from .errors import FormatError, IncompatibleArtifactError, NonFiniteError, OFFParseError

LARGE_TABLE_BYTES = 2 << 30


class ValidationError(Exception):
    pass


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _existing(path):
    if not Path(path).is_file():
        raise ValidationError(f"no such file: {path}")
    return path


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _write(path, text):
    Path(path).write_text(text)


# --- subcommands ---------------------------------------------------------------

def cmd_gen_data(args):
    families = args.families.split(",") if args.families else list(data.FAMILIES)
    ds = data.generate_synthetic(families, args.per_class, args.points, args.seed, args.split)
    data.write_dataset(ds, args.out)
    _say(args, f"wrote {len(ds)} items, C={ds.num_classes}, n={args.points} to {args.out}")


def cmd_import_off(args):
    root = Path(args.root)
    if not root.is_dir():
        raise ValidationError(f"no such directory: {root}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if args.classes:
        wanted = args.classes.split(",")
        missing = set(wanted) - set(classes)
        if missing:
            raise ValidationError(f"classes not found under {root}: {sorted(missing)}")
        classes = wanted
    from .mesh import read_off, sample_surface
    clouds, labels = [], []
    for label, name in enumerate(classes):
        for i, path in enumerate(sorted((root / name / args.split).glob("*.off"))):
            mesh = read_off(path)
            pts = sample_surface(mesh, args.points, [args.seed, label, i])
            clouds.append(data.to_file_precision(data.normalize(pts)))
            labels.append(label)
    if not clouds:
        raise ValidationError(f"no OFF files found under {root}/<class>/{args.split}/")
    ds = data.Dataset(clouds, labels, classes, args.split)
    data.write_dataset(ds, args.out)
    _say(args, f"imported {len(ds)} meshes over {len(classes)} classes to {args.out}")


def cmd_train(args):
    from .training import TrainConfig, train
    ds = data.read_dataset(_existing(args.dataset))
    val = data.read_dataset(_existing(args.val), "val") if args.val else None
    if val is not None and val.class_names != ds.class_names:
        raise ValidationError("validation set has a different class list")
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                      seed=args.seed, widths=tuple(args.widths))
    log = None if args.quiet else (lambda s: print(f"epoch {s.epoch:3d} loss {s.loss:.4f} "
                                                   f"train {s.train_acc:.2%} val {s.val_acc:.2%}"))
    pointwise, head, report = train(ds, cfg, val=val, log=log)
    network.write_models(args.out, pointwise, head)
    if args.report:
        report.write_csv(args.report)
    _say(args, report.summary())


def _check_large(args, nbytes):
    if nbytes > LARGE_TABLE_BYTES and not args.yes_large:
        raise ValidationError(f"table payload would be {nbytes:,} bytes; pass --yes-large to build it")


def cmd_bake(args):
    pointwise, _ = network.read_models(_existing(args.model))
    spec = baker.GridSpec(args.grid, args.bits)
    _check_large(args, baker.table_payload_bytes(pointwise.m, spec.S, spec.L))
    table = baker.bake(pointwise, spec, out=args.out)
    _say(args, f"baked {args.out}: {baker.describe(table)}")


def cmd_info(args):
    if not (args.table or args.model or args.dataset):
        raise ValidationError("info needs --table, --model and/or --dataset")
    if args.table:
        h = baker.read_table_header(_existing(args.table))
        print(f"table {args.table}: {baker.describe(h)}")
        print(f"  header {h.header_nbytes} bytes; channel range [{h.mins.min():.4g}, {h.maxs.max():.4g}]")
    if args.model:
        pointwise, head = network.read_models(_existing(args.model))
        print(f"model {args.model}: point-wise 3->{'->'.join(map(str, pointwise.widths))} (m={pointwise.m}), "
              f"head {head.n_in}->{'->'.join(map(str, head.widths))} (C={head.n_classes})")
    if args.dataset:
        ds = data.read_dataset(_existing(args.dataset))
        sizes = sorted({len(c) for c in ds.clouds})
        counts = np.bincount(ds.labels, minlength=ds.num_classes)
        print(f"dataset {args.dataset}: {len(ds)} items, C={ds.num_classes}, points per item {sizes}")
        for name, k in zip(ds.class_names, counts):
            print(f"  {name:<16s} {k}")


def _load_head_and_table(args, dataset=None):
    """Read headers first, check (m, C) compatibility, then load payloads."""
    pointwise, head = network.read_models(_existing(args.head))
    table = None
    if getattr(args, "table", None):
        header = baker.read_table_header(_existing(args.table))
        network.check_compatible(head, m=header.m)
    if dataset is not None:
        network.check_compatible(head, n_classes=dataset.num_classes)
    if getattr(args, "table", None):
        table = baker.read_table(args.table, mmap=True)
    return pointwise, head, table


def _threshold(args, name, value, limit, higher_is_better=True):
    if limit is None:
        return True
    ok = value >= limit if higher_is_better else value <= limit
    print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.4f} ({'>=' if higher_is_better else '<='} {limit})")
    return ok


def cmd_eval(args):
    from .analysis import evaluate, retrieval_map
    from .engine import extract_features
    ds = data.read_dataset(_existing(args.dataset), "test")
    pointwise, head, table = _load_head_and_table(args, ds)
    if table is not None:
        feats = extract_features(table, ds.clouds)
        source = f"table {args.table}"
    else:
        feats = np.stack([network.global_feature(pointwise, c).values for c in ds.clouds])
        source = "exact network"
    logits, emb = head.forward(feats)
    report = evaluate(np.argmax(logits, axis=1), ds.labels, ds.num_classes)
    if args.map:
        report.mAP = retrieval_map(emb, ds.labels)
    print(f"features from {source}")
    print(report.to_text(list(ds.class_names)))
    return 0 if _threshold(args, "overall accuracy", report.overall, args.min_accuracy) else 1


def cmd_finetune_head(args):
    from .training import TrainConfig, finetune_head
    ds = data.read_dataset(_existing(args.dataset))
    val = data.read_dataset(_existing(args.val), "val") if args.val else None
    pointwise, head, table = _load_head_and_table(args, ds)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed,
                      decay_every=max(1, args.epochs // 2))
    log = None if args.quiet else (lambda s: print(f"epoch {s.epoch:3d} loss {s.loss:.4f} "
                                                   f"train {s.train_acc:.2%} val {s.val_acc:.2%}"))
    tuned, report = finetune_head(head, table, ds, cfg, val=val, log=log)
    network.write_models(args.out, pointwise, tuned)
    if args.report:
        report.write_csv(args.report)
    _say(args, report.summary())


def cmd_bench(args):
    from .analysis import bench
    pointwise, head = network.read_models(_existing(args.model))
    header = baker.read_table_header(_existing(args.table))
    network.check_compatible(head, m=header.m)
    table = baker.read_table(args.table, mmap=True)
    report = bench(table, pointwise, head, args.points, args.repeats, args.warmup, args.seed)
    print(report.to_text())
    if args.csv:
        _write(args.csv, report.to_csv())
    ok = _threshold(args, "lookup feature ms", report.lookup["feature"].median, args.max_feature_ms, False)
    ok &= _threshold(args, "feature speedup", report.speedup_feature, args.min_speedup)
    return 0 if ok else 1


def cmd_sweep_voxels(args):
    from .analysis.sweeps import rows_to_csv, sweep_voxels
    from .training import FINETUNE_DEFAULTS, TrainConfig
    pointwise, head = network.read_models(_existing(args.model))
    train_set = data.read_dataset(_existing(args.dataset))
    test_set = data.read_dataset(_existing(args.test), "test")
    network.check_compatible(head, n_classes=test_set.num_classes)
    _check_large(args, max(baker.table_payload_bytes(pointwise.m, S, args.bits) for S in args.grids))
    cfg = TrainConfig(**{**FINETUNE_DEFAULTS, "seed": args.seed, "epochs": args.epochs})
    log = None if args.quiet else print
    rows = sweep_voxels(pointwise, head, train_set, test_set, args.grids, args.bits,
                        finetune=not args.no_finetune, config=cfg, workdir=args.workdir, log=log)
    text = rows_to_csv(rows)
    print(text, end="")
    if args.csv:
        _write(args.csv, text)


def cmd_sweep_points(args):
    from .analysis.sweeps import rows_to_csv, sweep_points
    ds = data.read_dataset(_existing(args.dataset), "test")
    args.head = args.model
    pointwise, head, table = _load_head_and_table(args, ds)
    kw = dict(table=table) if table is not None else dict(model=pointwise)
    rows = sweep_points(head, ds, args.points_list, seed=args.seed, **kw)
    text = rows_to_csv(rows)
    print(text, end="")
    if args.csv:
        _write(args.csv, text)


def cmd_probe(args):
    from .analysis import probe_level_set, sublevel_containment
    pointwise, _ = network.read_models(_existing(args.model))
    if args.dataset:
        cloud = data.read_dataset(_existing(args.dataset)).clouds[args.index]
    else:
        cloud = data.synthetic_instance(args.family, args.points, args.seed)
    if not -1 <= args.offset <= 1:
        raise ValidationError(f"--offset {args.offset} outside [-1, 1]")
    if not 0 <= args.channel < pointwise.m:
        raise ValidationError(f"--channel must be in [0, {pointwise.m})")
    sl = probe_level_set(pointwise, cloud, args.channel, args.axis, args.offset, args.resolution)
    prefix = args.out_prefix
    _write(f"{prefix}_slice.csv", sl.to_csv())
    _write(f"{prefix}_critical.csv", sl.critical_csv())
    Path(f"{prefix}_slice.pgm").write_bytes(sl.to_pgm())
    frac, count = sublevel_containment(sl, cloud)
    p = sl.critical_points[args.channel]
    print(f"channel {args.channel}: critical point ({p[0]:.4f}, {p[1]:.4f}, {p[2]:.4f}) value {sl.critical_value:.6g}")
    print(f"sub-level containment of {count} near-plane points: {frac:.2%}")
    print(f"wrote {prefix}_slice.csv, {prefix}_critical.csv, {prefix}_slice.pgm")


# --- parser ----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 42)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="BLAS threads (default: 1 for bench, all cores otherwise; env LUTPOINT_THREADS)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="lutpoint", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(fn=fn)
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic labeled shape dataset")
    p.add_argument("--families", help=f"comma-separated subset of {','.join(data.FAMILIES)}")
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--split", default="train", choices=["train", "val", "test"])
    p.add_argument("--out", required=True)

    p = add("import-off", cmd_import_off, "sample a ModelNet-style OFF tree into a dataset")
    p.add_argument("--root", required=True, help="directory laid out as <class>/<split>/*.off")
    p.add_argument("--split", default="train")
    p.add_argument("--classes", help="comma-separated class subset (default: all)")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the point-wise network and head")
    p.add_argument("--dataset", required=True)
    p.add_argument("--val")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--widths", type=_csv_ints, default=list(network.POINTWISE_WIDTHS))
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="per-epoch CSV")

    p = add("bake", cmd_bake, "tabulate a trained point-wise network")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=25, help="voxels per axis S")
    p.add_argument("--bits", type=int, default=8, choices=[8, 16])
    p.add_argument("--out", required=True)
    p.add_argument("--yes-large", action="store_true", help=f"allow payloads over {LARGE_TABLE_BYTES:,} bytes")

    p = add("eval", cmd_eval, "classification accuracy (and optional mAP) on a dataset")
    p.add_argument("--head", required=True, help="model file whose head is evaluated")
    p.add_argument("--table", help="lookup table; omit to use the exact network from --head")
    p.add_argument("--dataset", required=True)
    p.add_argument("--map", action="store_true", help="also report retrieval mAP over embeddings")
    p.add_argument("--min-accuracy", type=float, help="fail (exit 1) below this overall accuracy (0..1)")

    p = add("finetune-head", cmd_finetune_head, "retrain the head on baked features")
    p.add_argument("--table", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--val")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    p = add("bench", cmd_bench, "single-thread latency, table vs exact network")
    p.add_argument("--table", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--csv")
    p.add_argument("--max-feature-ms", type=float)
    p.add_argument("--min-speedup", type=float)

    p = add("sweep-voxels", cmd_sweep_voxels, "accuracy and memory across grid sizes")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="training set used for fine-tuning")
    p.add_argument("--test", required=True)
    p.add_argument("--grids", type=_csv_ints, default=[25, 50, 100, 200])
    p.add_argument("--bits", type=int, default=8, choices=[8, 16])
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--no-finetune", action="store_true")
    p.add_argument("--workdir", help="scratch directory for tables too big for memory")
    p.add_argument("--yes-large", action="store_true")
    p.add_argument("--csv")

    p = add("sweep-points", cmd_sweep_points, "accuracy across input point counts")
    p.add_argument("--model", required=True)
    p.add_argument("--table", help="use baked features instead of the exact network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--points-list", type=_csv_ints, default=[64, 128, 500, 1024])
    p.add_argument("--csv")

    p = add("probe", cmd_probe, "slice one channel's level sets and locate critical points")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--family", default="sphere", choices=data.FAMILIES)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--axis", default="z", choices=["x", "y", "z"])
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--out-prefix", required=True)

    p = add("info", cmd_info, "describe table/model/dataset files from their headers")
    p.add_argument("--table")
    p.add_argument("--model")
    p.add_argument("--dataset")
    return parser


def _resolve_threads(args):
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("LUTPOINT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"LUTPOINT_THREADS={env!r} is not an integer") from None
    return 1 if args.command == "bench" else None


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    args.seed = getattr(args, "seed", 42)
    args.quiet = getattr(args, "quiet", False)
    try:
        args.threads = _resolve_threads(args)
        if args.command == "bench" and args.threads != 1:
            raise ValidationError("bench measures single-thread latency; --threads must be 1")
        if not args.quiet:
            shown = {k: v for k, v in vars(args).items() if k != "fn"}
            print("config:", json.dumps(shown, default=str, sort_keys=True))
        limit = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
        with limit, warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            code = args.fn(args)
        return code or 0
    except (ValidationError, FormatError, IncompatibleArtifactError, OFFParseError, NonFiniteError,
            OSError, ValueError) as exc:
        print(f"lutpoint {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
