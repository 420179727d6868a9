"""ECG beat pipeline: ingestion, augmentation, rebalancing, metrics, bench.

Beat files are plain CSV, 188 columns per row: 187 samples normalized to
[0, 1] followed by an integer class label 0..4. All randomized operations
draw from numpy's default PCG64 generator seeded explicitly, so every
transform is a pure function of (input, seed) and byte-reproducible.

Sampling metadata (360 Hz, 11-bit, 10 mV) is carried for provenance only;
nothing here resamples or rescales signals.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .compiler.lower import lower
from .compiler.tiling import compile_format
from .errors import DataError, ShapeError
from .nnir.execute import execute_float
from .nnir.qexecute import execute_quant
from .nnir.shapes import infer_shapes
from .tcusim import run

BEAT_SAMPLES = 187
N_CLASSES = 5

SAMPLING_RATE_HZ = 360
SAMPLING_RESOLUTION_BITS = 11
SAMPLING_RANGE_MV = 10


@dataclass
class Dataset:
    """Immutable beat collection: [n, 187] samples in [0,1], labels 0..4."""

    samples: np.ndarray
    labels: np.ndarray
    provenance: str = ""
    rate_hz: int = SAMPLING_RATE_HZ
    resolution_bits: int = SAMPLING_RESOLUTION_BITS
    range_mv: int = SAMPLING_RANGE_MV

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[1] != BEAT_SAMPLES:
            raise DataError(f"samples must be [n, {BEAT_SAMPLES}], got "
                            f"{self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise DataError("labels must align with samples")
        self.samples.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self):
        return self.samples.shape[0]

    def class_counts(self):
        return np.bincount(self.labels, minlength=N_CLASSES)


def load_csv(path):
    """Parse a beat CSV; errors carry 1-based row numbers."""
    samples = []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != BEAT_SAMPLES + 1:
                raise DataError(f"row {row_no}: expected {BEAT_SAMPLES + 1} "
                                f"columns, got {len(cells)}")
            try:
                values = [float(cell) for cell in cells[:-1]]
            except ValueError as exc:
                raise DataError(f"row {row_no}: non-numeric sample: {exc}")
            try:
                label = int(cells[-1])
            except ValueError:
                raise DataError(f"row {row_no}: non-integer label "
                                f"{cells[-1]!r}")
            if not 0 <= label < N_CLASSES:
                raise DataError(f"row {row_no}: label {label} outside "
                                f"0..{N_CLASSES - 1}")
            arr = np.array(values, dtype=np.float64)
            if np.any(~np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
                raise DataError(f"row {row_no}: samples must lie in [0, 1]")
            samples.append(arr)
            labels.append(label)
    if not samples:
        raise DataError(f"{path}: no beat rows")
    return Dataset(np.stack(samples), np.array(labels),
                   provenance=f"load_csv({path})")


def save_csv(ds, path):
    """Write a dataset in the 188-column layout load_csv reads.

    Floats use shortest round-trip formatting, so save(load(x)) == x for
    files this writer produced.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(ds.samples, ds.labels):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write(f",{int(label)}\n")


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise DataError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def add_gaussian_noise(ds, cfg):
    """samples' = clamp01(samples + N(0, sigma^2)); labels unchanged."""
    if cfg.noise_sigma == 0:
        return replace(ds, samples=ds.samples.copy())
    rng = np.random.default_rng(cfg.seed)
    noisy = ds.samples + rng.normal(0.0, cfg.noise_sigma, ds.samples.shape)
    np.clip(noisy, 0.0, 1.0, out=noisy)
    return replace(
        ds, samples=noisy,
        provenance=ds.provenance
        + f" | noise(sigma={cfg.noise_sigma}, seed={cfg.seed})")


def smote_resample(ds, k=5, seed=0):
    """Oversample every class to the majority count with SMOTE.

    Synthetic beat: x + u * (x_nn - x), u ~ U[0,1), x_nn drawn uniformly
    from x's k nearest same-class neighbors (Euclidean; k capped at n-1).
    Originals are kept verbatim; synthetics append in class order.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    counts = ds.class_counts()
    target = int(counts.max())
    parts_x = [ds.samples]
    parts_y = [ds.labels]
    for cls in range(N_CLASSES):
        n = int(counts[cls])
        need = target - n
        if n == 0 or need == 0:
            continue
        if n < 2:
            raise DataError(
                f"class {cls}: SMOTE needs at least 2 records, got {n}")
        x = ds.samples[ds.labels == cls]
        k_eff = min(k, n - 1)
        d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]
        synth = np.empty((need, BEAT_SAMPLES), dtype=np.float64)
        for j in range(need):
            i = int(rng.integers(0, n))
            nb = int(neighbors[i, rng.integers(0, k_eff)])
            u = rng.random()
            synth[j] = x[i] + u * (x[nb] - x[i])
        parts_x.append(synth)
        parts_y.append(np.full(need, cls, dtype=np.int64))
    return Dataset(np.concatenate(parts_x), np.concatenate(parts_y),
                   provenance=ds.provenance + f" | smote(k={k}, seed={seed})")


def stratified_split(ds, train_frac=0.8, seed=0):
    """Per-class round(frac * count) to train, rest to val; seeded shuffle."""
    if not 0.0 < train_frac < 1.0:
        raise DataError(f"train_frac must be in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    train_idx = []
    val_idx = []
    for cls in range(N_CLASSES):
        idx = np.flatnonzero(ds.labels == cls)
        if idx.size == 0:
            continue
        perm = idx[rng.permutation(idx.size)]
        n_train = round(train_frac * idx.size)
        train_idx.append(perm[:n_train])
        val_idx.append(perm[n_train:])
    train_idx = np.concatenate(train_idx) if train_idx else np.empty(0, int)
    val_idx = np.concatenate(val_idx) if val_idx else np.empty(0, int)
    train_idx = train_idx[rng.permutation(train_idx.size)]
    val_idx = val_idx[rng.permutation(val_idx.size)]

    def take(idx, tag):
        return Dataset(ds.samples[idx], ds.labels[idx],
                       provenance=ds.provenance
                       + f" | split({tag}, frac={train_frac}, seed={seed})")

    return take(train_idx, "train"), take(val_idx, "val")


# ------------------------------------------------------------------ metrics

@dataclass
class MetricsReport:
    confusion: np.ndarray    # [true, predicted], 5x5 integers
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    per_class: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "precision_macro": self.precision_macro,
            "recall_macro": self.recall_macro,
            "f1_macro": self.f1_macro,
            "per_class": self.per_class,
        }


def confusion_matrix(true_labels, predicted):
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        conf[int(t), int(p)] += 1
    return conf


def metrics_from_confusion(conf):
    """Accuracy plus macro P/R/F1; zero denominators score zero."""
    conf = np.asarray(conf, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise DataError("empty confusion matrix")
    accuracy = float(np.trace(conf)) / total
    per_class = {}
    precisions = []
    recalls = []
    f1s = []
    for c in range(N_CLASSES):
        tp = int(conf[c, c])
        fp = int(conf[:, c].sum()) - tp
        fn = int(conf[c, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_class[c] = {"precision": p, "recall": r, "f1": f1,
                        "support": tp + fn}
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)
    return MetricsReport(
        confusion=conf, accuracy=accuracy,
        precision_macro=float(np.mean(precisions)),
        recall_macro=float(np.mean(recalls)),
        f1_macro=float(np.mean(f1s)),
        per_class=per_class)


# ---------------------------------------------------------------- inference

_MODES = ("float", "quant", "compiled")


def _check_classifier(g):
    shapes = infer_shapes(g)
    out = shapes[g.output]
    if out != (N_CLASSES,):
        raise ShapeError(f"classifier must emit {(N_CLASSES,)} logits, "
                         f"model {g.name!r} emits {out}")
    if tuple(g.input_shape) != (BEAT_SAMPLES, 1):
        raise ShapeError(f"beat models take input ({BEAT_SAMPLES}, 1), "
                         f"model {g.name!r} takes {tuple(g.input_shape)}")


def _beat_input(ds, i):
    return ds.samples[i].reshape(BEAT_SAMPLES, 1)


def evaluate(g, ds, cfg, mode="quant"):
    """Confusion metrics of a model over a dataset in the chosen mode.

    float/quant use the reference executors; compiled lowers once and runs
    every beat through the simulator (bit-identical to quant by contract).
    """
    if mode not in _MODES:
        raise DataError(f"mode must be one of {_MODES}, got {mode!r}")
    _check_classifier(g)
    predicted = np.empty(len(ds), dtype=np.int64)
    if mode == "compiled":
        prog = lower(g, cfg)
        for i in range(len(ds)):
            out, _ = run(prog, _beat_input(ds, i))
            predicted[i] = int(np.argmax(out.raw))
    elif mode == "quant":
        fmt = compile_format(cfg)
        for i in range(len(ds)):
            out = execute_quant(g, _beat_input(ds, i), fmt)
            predicted[i] = int(np.argmax(out.raw))
    else:
        for i in range(len(ds)):
            logits = execute_float(g, _beat_input(ds, i))
            predicted[i] = int(np.argmax(logits))
    return metrics_from_confusion(confusion_matrix(ds.labels, predicted))


@dataclass
class BenchReport:
    model_name: str
    beats: int
    workers: int
    cycles_per_beat: float        # simulated, mean
    latency_ms: float             # simulated, mean per beat
    throughput_gops: float        # from the cycle model
    host_ms_per_beat: float       # wall clock, whole-run mean
    macs_graph: int
    clock_mhz: int

    def as_dict(self):
        return {
            "model": self.model_name,
            "beats": self.beats,
            "workers": self.workers,
            "cycles_per_beat": self.cycles_per_beat,
            "latency_ms": self.latency_ms,
            "throughput_gops": self.throughput_gops,
            "host_ms_per_beat": self.host_ms_per_beat,
            "macs_graph": self.macs_graph,
            "clock_mhz": self.clock_mhz,
        }


def benchmark(g, ds, cfg, n_beats=None, workers=1):
    """Compiled-path benchmark over the first n_beats beats.

    Simulated figures come from the cycle model and are independent of
    workers and host speed; host wall clock is reported separately.
    """
    _check_classifier(g)
    n = len(ds) if n_beats is None else min(n_beats, len(ds))
    if n < 1:
        raise DataError("benchmark needs at least one beat")
    if workers < 1:
        raise DataError(f"workers must be >= 1, got {workers}")
    prog = lower(g, cfg)

    def one(i):
        _, report = run(prog, _beat_input(ds, i))
        return report.total_cycles

    start = time.perf_counter()
    if workers == 1:
        cycles = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cycles = list(pool.map(one, range(n)))
    host_seconds = time.perf_counter() - start

    mean_cycles = float(np.mean(cycles))
    latency_ms = mean_cycles / (cfg.clock_mhz * 1000.0)
    seconds = mean_cycles / (cfg.clock_mhz * 1e6)
    gops = 2.0 * prog.macs_graph / seconds / 1e9
    return BenchReport(
        model_name=g.name, beats=n, workers=workers,
        cycles_per_beat=mean_cycles, latency_ms=latency_ms,
        throughput_gops=gops, host_ms_per_beat=host_seconds * 1000.0 / n,
        macs_graph=prog.macs_graph, clock_mhz=cfg.clock_mhz)
