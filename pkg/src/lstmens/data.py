"""Dataset ingestion, normalization, splits, and the synthetic generator.

Sequences are stored channels-first: X has shape (D, T) with one
double-precision row per sensor channel, and z holds one class index per
sample. CSV files are the transpose of that: one row per sample, with the
label in a configurable column (default 0) and every other column a channel.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import Rng

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


@dataclass
class LabeledSequence:
    X: np.ndarray  # (D, T)
    z: np.ndarray  # (T,) int
    num_classes: int
    channel_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.int64)
        if self.X.ndim != 2 or self.z.ndim != 1 or self.X.shape[1] != self.z.shape[0]:
            raise ValueError(
                f"inconsistent sequence shapes: X {self.X.shape}, z {self.z.shape}"
            )
        if self.z.shape[0] < 1:
            raise ValueError("sequence must contain at least one sample")
        if self.z.min() < 0 or self.z.max() >= self.num_classes:
            raise ValueError(
                f"labels out of range [0, {self.num_classes}): "
                f"found [{self.z.min()}, {self.z.max()}]"
            )

    @property
    def num_channels(self) -> int:
        return self.X.shape[0]

    @property
    def num_samples(self) -> int:
        return self.X.shape[1]

    def slice(self, lo: int, hi: int) -> "LabeledSequence":
        return LabeledSequence(self.X[:, lo:hi], self.z[lo:hi], self.num_classes,
                               self.channel_names)


@dataclass
class CsvSchema:
    num_classes: int
    label_col: int = 0


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_label(cell: str, row_no: int, k: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"row {row_no}: unparseable label {cell!r}") from None
    if math.isnan(value) or not value.is_integer():
        raise ValueError(f"row {row_no}: label {cell!r} is not an integer")
    label = int(value)
    if not 0 <= label < k:
        raise ValueError(f"row {row_no}: label {label} outside [0, {k})")
    return label


def _interpolate_nans(X: np.ndarray, names: list[str]) -> dict[str, int]:
    """Linear interpolation of NaN runs per channel, in place.

    Boundary NaNs copy the nearest valid value. A channel with no valid
    value at all is an error. Returns per-channel interpolation counts.
    """
    counts: dict[str, int] = {}
    for d in range(X.shape[0]):
        nan = np.isnan(X[d])
        if not nan.any():
            continue
        if nan.all():
            raise ValueError(f"channel {names[d]!r} contains no valid values")
        valid = np.flatnonzero(~nan)
        X[d, nan] = np.interp(np.flatnonzero(nan), valid, X[d, valid])
        counts[names[d]] = int(nan.sum())
    return counts


def load_csv(path, schema: CsvSchema) -> LabeledSequence:
    """Parse a dataset CSV. Header row is optional and detected by content.

    Literal NaN cells in feature columns are linearly interpolated per
    channel; interpolation counts are logged.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")

    def looks_numeric(cells):
        try:
            [float(c) for c in cells]
            return True
        except ValueError:
            return False

    names = None
    start_row = 0
    if not looks_numeric(rows[0]):
        names = [c.strip() for i, c in enumerate(rows[0]) if i != schema.label_col]
        start_row = 1
    data_rows = rows[start_row:]
    if not data_rows:
        raise ValueError(f"{path}: no data rows")
    width = len(data_rows[0])
    if schema.label_col >= width:
        raise ValueError(f"label column {schema.label_col} outside row width {width}")
    if names is None:
        names = [f"ch{i}" for i in range(width - 1)]

    T = len(data_rows)
    D = width - 1
    X = np.empty((D, T))
    z = np.empty(T, dtype=np.int64)
    feature_cols = [i for i in range(width) if i != schema.label_col]
    for t, row in enumerate(data_rows):
        row_no = start_row + t + 1
        if len(row) != width:
            raise ValueError(f"row {row_no}: expected {width} cells, got {len(row)}")
        z[t] = _parse_label(row[schema.label_col], row_no, schema.num_classes)
        for d, col in enumerate(feature_cols):
            try:
                X[d, t] = float(row[col])
            except ValueError:
                raise ValueError(
                    f"row {row_no}: unparseable value {row[col]!r} in column {col}"
                ) from None
    counts = _interpolate_nans(X, names)
    if counts:
        total = sum(counts.values())
        log.info("interpolated %d missing values (%s)", total,
                 ", ".join(f"{k}: {v}" for k, v in counts.items()))
    return LabeledSequence(X, z, schema.num_classes, names)


def save_csv(seq: LabeledSequence, path) -> None:
    """Write a sequence in the load_csv layout: label first, then channels."""
    names = seq.channel_names or [f"ch{i}" for i in range(seq.num_channels)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + list(names))
        for t in range(seq.num_samples):
            writer.writerow([int(seq.z[t])] + [repr(float(v)) for v in seq.X[:, t]])


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    mean: np.ndarray  # (D,)
    std: np.ndarray  # (D,)


def fit_normalizer(train: LabeledSequence) -> NormStats:
    """Per-channel mean/std from the training split only.

    Channels with (near-)zero spread are floored at SIGMA_FLOOR with a
    warning rather than rejected; dead channels are common in real dumps.
    """
    mean = train.X.mean(axis=1)
    std = train.X.std(axis=1)
    low = std < SIGMA_FLOOR
    if low.any():
        names = train.channel_names or [f"ch{i}" for i in range(train.num_channels)]
        flagged = [names[i] for i in np.flatnonzero(low)]
        warnings.warn(
            f"near-constant channel(s) {flagged}: std floored at {SIGMA_FLOOR}",
            RuntimeWarning,
            stacklevel=2,
        )
        std = np.where(low, SIGMA_FLOOR, std)
    return NormStats(mean, std)


def apply_normalizer(stats: NormStats, seq: LabeledSequence) -> LabeledSequence:
    """(x - mean) / std per channel; never recomputes statistics."""
    X = (seq.X - stats.mean[:, None]) / stats.std[:, None]
    return LabeledSequence(X, seq.z.copy(), seq.num_classes, seq.channel_names)


def invert_normalizer(stats: NormStats, seq: LabeledSequence) -> LabeledSequence:
    """Inverse transform of apply_normalizer."""
    X = seq.X * stats.std[:, None] + stats.mean[:, None]
    return LabeledSequence(X, seq.z.copy(), seq.num_classes, seq.channel_names)


def save_norm_stats(stats: NormStats, path, names: list[str] | None = None) -> None:
    names = names or [f"ch{i}" for i in range(stats.mean.shape[0])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "mean", "std"])
        for name, m, s in zip(names, stats.mean, stats.std):
            writer.writerow([name, repr(float(m)), repr(float(s))])


def load_norm_stats(path) -> NormStats:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    mean = np.array([float(r["mean"]) for r in rows])
    std = np.array([float(r["std"]) for r in rows])
    return NormStats(mean, std)


# ---------------------------------------------------------------------------
# splits


def holdout_split(seq: LabeledSequence, train_range, val_range, test_range):
    """Slice three disjoint contiguous [lo, hi) ranges out of one stream."""
    ranges = [tuple(train_range), tuple(val_range), tuple(test_range)]
    for lo, hi in ranges:
        if not 0 <= lo < hi <= seq.num_samples:
            raise ValueError(f"range [{lo}, {hi}) invalid for T={seq.num_samples}")
    for i in range(3):
        for j in range(i + 1, 3):
            (a0, a1), (b0, b1) = ranges[i], ranges[j]
            if a0 < b1 and b0 < a1:
                raise ValueError(f"overlapping ranges [{a0},{a1}) and [{b0},{b1})")
    return tuple(seq.slice(lo, hi) for lo, hi in ranges)


def fraction_ranges(num_samples: int, fractions=(0.8, 0.1, 0.1)):
    """Contiguous train/val/test ranges from split fractions."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"bad split fractions {fractions}")
    a = int(num_samples * fractions[0])
    b = a + int(num_samples * fractions[1])
    c = min(num_samples, b + int(round(num_samples * fractions[2])))
    return (0, a), (a, b), (b, c)


def classwise_split(seq: LabeledSequence, train_frac: float = 0.8, val_frac: float = 0.1):
    """Per-class temporal split: first train_frac of each class's samples go
    to train, the next val_frac to validation, the remainder to test.

    Selected indices keep their original temporal order, so per-class
    ordering is preserved in every split.
    """
    if not (0 < train_frac and 0 < val_frac and train_frac + val_frac < 1):
        raise ValueError(f"bad class-wise fractions {train_frac}, {val_frac}")
    parts: list[list[int]] = [[], [], []]
    for k in range(seq.num_classes):
        idx = np.flatnonzero(seq.z == k)
        a = int(len(idx) * train_frac)
        b = a + int(len(idx) * val_frac)
        parts[0].extend(idx[:a])
        parts[1].extend(idx[a:b])
        parts[2].extend(idx[b:])
    out = []
    for chosen in parts:
        order = np.sort(np.asarray(chosen, dtype=np.int64))
        out.append(
            LabeledSequence(seq.X[:, order], seq.z[order], seq.num_classes,
                            seq.channel_names)
        )
    return tuple(out)


def class_distribution(seq: LabeledSequence):
    """(counts, fractions) per class; counts sum to the number of samples."""
    counts = np.bincount(seq.z, minlength=seq.num_classes)
    return counts, counts / seq.num_samples


# ---------------------------------------------------------------------------
# synthetic activity streams


BURST_FRACTION = 0.15  # share of runs carrying burst sensor noise
BURST_GAIN = 3.0  # burst noise std relative to the base noise
BLEND_MAX = 0.3  # strongest per-run lean of one class's offsets toward another


def synth_har(num_channels: int, num_classes: int, length: int,
              regime: str = "balanced", snr: float = 4.0, seed: int = 0) -> LabeledSequence:
    """Synthetic multichannel activity stream for desk-scale experiments.

    Each class gets a distinct per-channel signature: an offset level plus a
    sinusoid with class-specific base frequency and per-channel phase.
    Activities occur in runs with lognormal durations, and every run varies
    around its class signature the way repeated executions of one activity
    differ: random amplitude/frequency factors, fresh phases, and a random
    lean of the offset pattern toward one other class (up to BLEND_MAX), so
    some instances are genuinely ambiguous. White Gaussian noise of standard
    deviation 1/snr covers the stream (snr=inf means noiseless), and a
    fraction of runs additionally carries stronger burst noise on a random
    subset of channels, mimicking the intermittent sensor faults that make
    parts of a real recording scarcely usable for training.

    regime "balanced" cycles the classes round-robin, so class fractions
    concentrate near 1/K. regime "imbalanced" alternates background (class
    0) runs with activity runs and draws every background run strictly
    longer than the activity run that follows, so class 0 holds at least
    half the samples for every seed and truncation point.
    """
    if num_channels < 2 or num_classes < 2:
        raise ValueError("synth_har needs num_channels >= 2 and num_classes >= 2")
    if regime not in ("balanced", "imbalanced"):
        raise ValueError(f"unknown regime {regime!r}")
    if length < 2:
        raise ValueError("length must be >= 2")
    rng = Rng(seed)

    # class/channel signatures
    channel_phase = rng.uniform_block(num_channels) * 2.0 * np.pi
    offsets = 0.8 * np.cos(
        2.0 * np.pi
        * np.outer(np.arange(num_classes), np.arange(1, num_channels + 1))
        / num_classes
        + channel_phase[None, :]
    )  # (K, D)
    # evenly spaced base frequencies (cycles/sample); the per-run +/-15%
    # jitter below never bridges adjacent classes' bands
    freqs = 0.03 + 0.12 * np.arange(num_classes) / max(1, num_classes - 1)
    noise_std = 0.0 if math.isinf(snr) else 1.0 / snr

    def run_length(median: float) -> int:
        return max(8, int(round(median * math.exp(0.35 * rng.normal()))))

    z = np.empty(length, dtype=np.int64)
    X = np.empty((num_channels, length))
    burst_mask = np.zeros((num_channels, length))
    t = 0
    activity = 0
    pending = 0  # length of the preceding background run (imbalanced regime)
    while t < length:
        if regime == "balanced":
            k = activity % num_classes
            run = run_length(90.0)
        elif activity % 2 == 0:
            # background run, built to strictly exceed the activity run
            # that follows so class 0 keeps a majority under any truncation
            k = 0
            run = run_length(70.0) + run_length(35.0)
            pending = run
        else:
            k = 1 + (activity // 2) % (num_classes - 1)
            run = min(pending - 1, run_length(70.0))
        end = min(t + run, length)
        span = end - t
        z[t:end] = k
        # per-run execution variability around the class signature
        amp = 0.7 * (0.6 + 0.8 * rng.uniform())
        freq = freqs[k] * (0.85 + 0.3 * rng.uniform())
        phases = (rng.uniform_block(num_channels) * 2.0 * np.pi)[:, None]
        other = (k + 1 + rng.uniform_int(0, num_classes - 2)) % num_classes
        lean = BLEND_MAX * rng.uniform()
        level = (1.0 - lean) * offsets[k] + lean * offsets[other]
        local = np.arange(span, dtype=np.float64)[None, :]
        X[:, t:end] = level[:, None] + amp * np.sin(
            2.0 * np.pi * freq * local + phases
        )
        # occasional burst faults on a random subset of channels
        burst_gate = rng.uniform() < BURST_FRACTION
        channel_gate = rng.uniform_block(num_channels) < 0.5
        if burst_gate:
            burst_mask[channel_gate, t:end] = 1.0
        t = end
        activity += 1

    base = rng.normal_block(num_channels * length).reshape(num_channels, length)
    burst = rng.normal_block(num_channels * length).reshape(num_channels, length)
    X = X + noise_std * base + (BURST_GAIN * noise_std) * burst_mask * burst
    names = [f"ch{i}" for i in range(num_channels)]
    return LabeledSequence(X, z, num_classes, names)
