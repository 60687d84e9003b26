"""Single-thread, batch-1 latency of the table path against the exact network.

Both paths see the same raw cloud and are split into three timed phases:
normalize, feature extraction, head.
"""
import platform
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from ..data import DegenerateCloudWarning, normalize, synthetic_instance
from ..engine import lookup_levels
from ..network import check_compatible

PHASES = ("normalize", "feature", "head")
MIN_REPEATS = 30
MIN_WARMUP = 5
MIN_TICKS = 50


@dataclass
class PhaseStats:
    median: float  # milliseconds
    p10: float
    p90: float

    @classmethod
    def from_ns(cls, samples_ns, inner=1):
        ms = np.asarray(samples_ns, dtype=np.float64) / 1e6 / inner
        return cls(*(float(v) for v in np.percentile(ms, [50, 10, 90])))


@dataclass
class BenchReport:
    lookup: dict
    exact: dict
    repeats: int
    warmup: int
    n_points: int
    S: int
    m: int
    L: int
    threads: int
    machine: str
    notes: list = field(default_factory=list)

    @property
    def lookup_total(self):
        return sum(self.lookup[p].median for p in PHASES)

    @property
    def exact_total(self):
        return sum(self.exact[p].median for p in PHASES)

    @property
    def speedup_feature(self):
        return self.exact["feature"].median / self.lookup["feature"].median

    @property
    def speedup(self):
        """Exact-path median over lookup-path median, whole pipeline."""
        return self.exact_total / self.lookup_total

    def to_csv(self):
        rows = ["path,phase,median_ms,p10_ms,p90_ms"]
        for name, phases in (("lookup", self.lookup), ("exact", self.exact)):
            for p in PHASES:
                s = phases[p]
                rows.append(f"{name},{p},{s.median:.6f},{s.p10:.6f},{s.p90:.6f}")
        return "\n".join(rows) + "\n"

    def to_text(self):
        lines = [f"machine: {self.machine}, threads={self.threads}",
                 f"n={self.n_points} S={self.S} m={self.m} L={self.L} repeats={self.repeats} warmup={self.warmup}",
                 f"{'phase':<10s} {'lookup ms':>12s} {'exact ms':>12s}"]
        for p in PHASES:
            lines.append(f"{p:<10s} {self.lookup[p].median:12.4f} {self.exact[p].median:12.4f}")
        lines.append(f"{'total':<10s} {self.lookup_total:12.4f} {self.exact_total:12.4f}")
        lines.append(f"speedup: feature phase {self.speedup_feature:.1f}x, end to end {self.speedup:.1f}x")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def machine_descriptor():
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return f"{cpu} / {platform.system()} / Python {platform.python_version()}"


def _time_phases(steps, repeats, inner):
    """Run ``steps`` (list of (name, fn(prev) -> out)) and record ns per phase."""
    samples = {name: np.empty(repeats, dtype=np.int64) for name, _ in steps}
    clock = time.perf_counter_ns
    for r in range(repeats):
        value = None
        for name, fn in steps:
            start = clock()
            for _ in range(inner):
                out = fn(value)
            samples[name][r] = clock() - start
            value = out
    return samples


def bench(table, model, head, n_points=1024, repeats=50, warmup=5, seed=0, shape="torus"):
    """Time both inference paths on one synthetic cloud, pinned to one thread."""
    if repeats < MIN_REPEATS:
        raise ValueError(f"repeats must be >= {MIN_REPEATS}, got {repeats}")
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    check_compatible(head, m=table.m)
    if model.m != table.m:
        raise ValueError(f"model has m={model.m}, table has m={table.m}")
    model32 = model.astype(np.float32)
    head32 = head.astype(np.float32)
    rng = np.random.default_rng(seed)
    raw = synthetic_instance(shape, n_points, seed) * rng.uniform(2, 5) + rng.uniform(-3, 3, 3)

    def norm(_):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCloudWarning)
            return normalize(raw)

    lookup_steps = [
        ("normalize", norm),
        ("feature", lambda c: table.dequantize(lookup_levels(table, c))),
        ("head", lambda f: head32.forward(f)[0]),
    ]
    exact_steps = [
        ("normalize", norm),
        ("feature", lambda c: model32.forward(c).max(axis=0)),
        ("head", lambda f: head32.forward(f)[0]),
    ]
    notes = []
    tick_ns = max(time.get_clock_info("perf_counter").resolution * 1e9, 1.0)
    with threadpool_limits(limits=1):
        threads = max([p.get("num_threads", 1) for p in threadpool_info()] or [1])
        inner = 1
        for _ in range(4):
            _time_phases(lookup_steps, warmup, inner)
            _time_phases(exact_steps, warmup, inner)
            lk = _time_phases(lookup_steps, repeats, inner)
            ex = _time_phases(exact_steps, repeats, inner)
            coarse = min(float(np.median(s)) for s in list(lk.values()) + list(ex.values()))
            if coarse >= MIN_TICKS * tick_ns * inner:
                break
            inner *= 10
            notes.append(f"phase median below {MIN_TICKS} timer ticks; repeating each call {inner}x")
    return BenchReport(
        lookup={p: PhaseStats.from_ns(lk[p], inner) for p in PHASES},
        exact={p: PhaseStats.from_ns(ex[p], inner) for p in PHASES},
        repeats=repeats, warmup=warmup, n_points=n_points, S=table.spec.S, m=table.m, L=table.spec.L,
        threads=threads, machine=machine_descriptor(), notes=notes,
    )
