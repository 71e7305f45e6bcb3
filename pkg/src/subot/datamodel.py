"""Dataset containers, CSV ingestion, signal features, toy data and splits."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import stats as sps
from scipy.special import xlogy

from .errors import (
    DegenerateSplit,
    MissingFile,
    NonFiniteValue,
    NonNumericCell,
    RaggedRows,
    WindowTooShort,
)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with optional dense integer class labels.

    ``class_count`` is the number of classes C; labels, when present, are in
    ``{0..C-1}`` and every class occurs at least once.  ``label_values``
    records the original label value behind each dense id when the dataset
    was remapped at load time.
    """

    features: FloatArray
    labels: IntArray | None = None
    class_count: int = 0
    label_values: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", features)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError(f"features must be n x d with n,d >= 1, got {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite entries")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", labels)
            if labels.shape != (features.shape[0],):
                raise ValueError("labels length must match row count")
            if self.class_count < 1:
                raise ValueError("labeled dataset needs class_count >= 1")
            present = np.unique(labels)
            expected = np.arange(self.class_count)
            if not np.array_equal(present, expected):
                raise ValueError(
                    f"labels must cover exactly {{0..{self.class_count - 1}}}, "
                    f"found {present.tolist()}"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: IntArray) -> "LabeledDataset":
        labels = None if self.labels is None else self.labels[rows]
        return LabeledDataset(
            features=self.features[rows],
            labels=labels,
            class_count=self.class_count,
            label_values=self.label_values,
        )

    def without_labels(self) -> "LabeledDataset":
        return LabeledDataset(features=self.features)


@dataclass(frozen=True)
class RawSignalWindow:
    """One window of 3-axial raw sensor readings (w time steps)."""

    samples: FloatArray
    sensor_kind: str

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise ValueError(f"samples must be w x 3, got {samples.shape}")
        if samples.shape[0] < 2:
            raise WindowTooShort(samples.shape[0])
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite entries")
        if self.sensor_kind not in ("accelerometer", "gyroscope"):
            raise ValueError(f"unknown sensor_kind: {self.sensor_kind!r}")


@dataclass(frozen=True)
class ToyComponentSpec:
    """One diagonal Gaussian blob of a synthetic domain."""

    mean: tuple[float, ...]
    cov_diag: tuple[float, ...]
    count: int
    class_label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "cov_diag", tuple(float(v) for v in self.cov_diag))
        if len(self.mean) != len(self.cov_diag):
            raise ValueError("mean and cov_diag must share a dimension")
        if any(v <= 0 for v in self.cov_diag):
            raise ValueError("cov_diag entries must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.class_label < 0:
            raise ValueError("class_label must be >= 0")


@dataclass(frozen=True)
class ToyConfig:
    """Synthetic two-domain generator config: blobs per domain plus a seed."""

    source: tuple[ToyComponentSpec, ...]
    target: tuple[ToyComponentSpec, ...]
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.source or not self.target:
            raise ValueError("both domains need at least one component")
        src_classes = {c.class_label for c in self.source}
        tgt_classes = {c.class_label for c in self.target}
        if src_classes != tgt_classes:
            raise ValueError(
                f"domains declare different class sets: {src_classes} vs {tgt_classes}"
            )
        if src_classes != set(range(len(src_classes))):
            raise ValueError("class labels must be dense 0..C-1")
        dims = {len(c.mean) for c in self.source + self.target}
        if len(dims) != 1:
            raise ValueError(f"mixed component dimensions: {dims}")

    @property
    def class_count(self) -> int:
        return len({c.class_label for c in self.source})

    def to_dict(self) -> dict:
        def enc(specs):
            return [
                {
                    "mean": list(s.mean),
                    "cov_diag": list(s.cov_diag),
                    "count": s.count,
                    "class_label": s.class_label,
                }
                for s in specs
            ]

        return {
            "rng_seed": self.rng_seed,
            "source": enc(self.source),
            "target": enc(self.target),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ToyConfig":
        def dec(specs):
            return tuple(
                ToyComponentSpec(
                    mean=tuple(s["mean"]),
                    cov_diag=tuple(s["cov_diag"]),
                    count=int(s["count"]),
                    class_label=int(s["class_label"]),
                )
                for s in specs
            )

        return cls(
            source=dec(doc["source"]),
            target=dec(doc["target"]),
            rng_seed=int(doc.get("rng_seed", 0)),
        )


def load_dataset_csv(
    path: str | os.PathLike,
    has_labels: bool,
    has_header: bool = False,
) -> LabeledDataset:
    """Load a plain numeric CSV, label column last when ``has_labels``.

    Labels are remapped to a dense 0..C-1 range (ascending original value);
    the mapping is kept on ``label_values``.  Row order is preserved.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    rows: list[list[float]] = []
    raw_labels: list[int] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, cells in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                width = len(cells)
                continue
            if not cells:
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise RaggedRows(line_no, width, len(cells))
            parsed = []
            for col, text in enumerate(cells, start=1):
                try:
                    value = float(text)
                except ValueError:
                    raise NonNumericCell(line_no, col, text) from None
                if not math.isfinite(value):
                    raise NonFiniteValue(line_no, col)
                parsed.append(value)
            if has_labels:
                label = parsed.pop()
                if label != int(label):
                    raise NonNumericCell(line_no, width, cells[-1])
                raw_labels.append(int(label))
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    if not has_labels:
        return LabeledDataset(features=features)
    values = sorted(set(raw_labels))
    remap = {v: i for i, v in enumerate(values)}
    labels = np.asarray([remap[v] for v in raw_labels], dtype=np.int64)
    return LabeledDataset(
        features=features,
        labels=labels,
        class_count=len(values),
        label_values=tuple(values),
    )


def save_dataset_csv(dataset: LabeledDataset, path: str | os.PathLike) -> None:
    """Write features (and labels, last column) as a header-less CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


def combine_axes(window: RawSignalWindow) -> FloatArray:
    """Per-time-step magnitude sqrt(x^2 + y^2 + z^2) of a 3-axial window."""
    return np.linalg.norm(window.samples, axis=1)


FEATURE_NAMES: tuple[str, ...] = (
    "mean",
    "std",
    "min",
    "max",
    "median",
    "q25",
    "q75",
    "iqr",
    "skewness",
    "kurtosis",
    "zero_crossing_rate",
    "mean_crossing_rate",
    "signal_magnitude_area",
    "rms",
    "spectral_energy",
    "spectral_entropy",
    "dominant_frequency",
    "dominant_magnitude",
    "spectral_centroid",
)


def _crossing_rate(x: FloatArray) -> float:
    s = np.sign(x)
    return float(np.count_nonzero(s[:-1] * s[1:] < 0)) / (x.size - 1)


def extract_features(window_magnitudes: FloatArray, sampling_rate: float) -> FloatArray:
    """Fixed-order vector of the 19 per-window features in FEATURE_NAMES.

    Time-domain statistics use the population convention (ddof=0); skewness
    and excess kurtosis are defined as 0 for a zero-variance window.  The
    spectral block comes from the real FFT of the window: energy is the
    total spectral power divided by the window length, entropy is the
    Shannon entropy (natural log) of the normalized power over bins, and the
    dominant frequency is taken over the non-DC bins with its magnitude
    reported on the single-sided amplitude scale 2|X_k|/w.
    """
    x = np.asarray(window_magnitudes, dtype=np.float64).ravel()
    if x.size < 2:
        raise WindowTooShort(x.size)
    if sampling_rate <= 0:
        raise ValueError(f"sampling_rate must be > 0, got {sampling_rate}")
    w = x.size

    mean = float(x.mean())
    std = float(x.std())
    q25, median, q75 = (float(v) for v in np.percentile(x, [25.0, 50.0, 75.0]))
    if std > 0:
        skewness = float(sps.skew(x))
        kurtosis = float(sps.kurtosis(x))
    else:
        skewness = 0.0
        kurtosis = 0.0

    spectrum = np.fft.rfft(x)
    power = np.abs(spectrum) ** 2
    total_power = float(power.sum())
    freqs = np.fft.rfftfreq(w, d=1.0 / sampling_rate)
    energy = total_power / w
    if total_power > 0:
        p = power / total_power
        entropy = float(-xlogy(p, p).sum())
        centroid = float(np.sum(freqs * p))
    else:
        entropy = 0.0
        centroid = 0.0
    dom_bin = 1 + int(np.argmax(power[1:]))
    dom_freq = float(freqs[dom_bin])
    dom_mag = 2.0 * float(np.abs(spectrum[dom_bin])) / w

    return np.asarray(
        [
            mean,
            std,
            float(x.min()),
            float(x.max()),
            median,
            q25,
            q75,
            q75 - q25,
            skewness,
            kurtosis,
            _crossing_rate(x),
            _crossing_rate(x - mean),
            float(np.abs(x).mean()),
            float(np.sqrt(np.mean(x**2))),
            energy,
            entropy,
            dom_freq,
            dom_mag,
            centroid,
        ],
        dtype=np.float64,
    )


def sliding_window_features(
    samples: FloatArray,
    sampling_rate: float,
    window: int = 128,
    overlap: float = 0.5,
    labels: IntArray | None = None,
) -> tuple[FloatArray, IntArray | None]:
    """Cut a 3-axial signal into overlapping windows and featurize each one.

    Returns the per-window 19-feature matrix plus, when per-sample labels are
    given, the majority label of each window.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise ValueError(f"samples must be n x 3, got {samples.shape}")
    if window < 2 or window > samples.shape[0]:
        raise WindowTooShort(min(window, samples.shape[0]))
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    step = max(1, int(round(window * (1.0 - overlap))))
    starts = range(0, samples.shape[0] - window + 1, step)
    rows = []
    window_labels = []
    for start in starts:
        chunk = RawSignalWindow(samples[start : start + window], "accelerometer")
        rows.append(extract_features(combine_axes(chunk), sampling_rate))
        if labels is not None:
            ids, counts = np.unique(labels[start : start + window], return_counts=True)
            window_labels.append(int(ids[np.argmax(counts)]))
    features = np.stack(rows)
    out_labels = None if labels is None else np.asarray(window_labels, dtype=np.int64)
    return features, out_labels


def generate_toy(config: ToyConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Sample both domains of a ToyConfig; deterministic per rng_seed.

    Target labels are generated too: they are evaluation-only ground truth,
    never consumed by the adaptation itself.
    """
    rng = np.random.default_rng(config.rng_seed)
    class_count = config.class_count

    def sample(specs: tuple[ToyComponentSpec, ...]) -> LabeledDataset:
        blocks = []
        labels = []
        for spec in specs:
            mean = np.asarray(spec.mean)
            sd = np.sqrt(np.asarray(spec.cov_diag))
            blocks.append(rng.normal(mean, sd, size=(spec.count, mean.size)))
            labels.extend([spec.class_label] * spec.count)
        return LabeledDataset(
            features=np.vstack(blocks),
            labels=np.asarray(labels, dtype=np.int64),
            class_count=class_count,
        )

    return sample(config.source), sample(config.target)


def default_toy_config(rng_seed: int = 0) -> ToyConfig:
    """Two-class, three-blob toy pair: one class owns two blobs.

    The target repeats the source blobs shifted by a fixed offset with
    covariances scaled by 1.5 and different blob sizes, so the class
    proportions disagree between the domains.  Sample-level matching with
    uniform masses is then forced to ship surplus mass across the class
    boundary, while blob-level matching with adaptive source weights is not.
    """
    offset = (1.2, 0.8)
    scale = 1.5
    base = (
        ToyComponentSpec(mean=(0.0, 0.0), cov_diag=(0.5, 0.5), count=90, class_label=0),
        ToyComponentSpec(mean=(0.0, 6.0), cov_diag=(0.6, 0.6), count=90, class_label=0),
        ToyComponentSpec(mean=(6.0, 3.0), cov_diag=(0.6, 0.6), count=90, class_label=1),
    )
    target_counts = (40, 50, 90)
    shifted = tuple(
        ToyComponentSpec(
            mean=tuple(m + o for m, o in zip(s.mean, offset)),
            cov_diag=tuple(v * scale for v in s.cov_diag),
            count=count,
            class_label=s.class_label,
        )
        for s, count in zip(base, target_counts)
    )
    return ToyConfig(source=base, target=shifted, rng_seed=rng_seed)


def split_target(
    target: LabeledDataset, fraction: float, rng_seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified validation/test partition of a labeled target domain.

    The validation side gets round(fraction * n) rows, allocated per class
    by largest remainder so every class proportion is within one sample of
    the overall fraction.  Raises DegenerateSplit when a side would end up
    empty or lose a class entirely.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if target.labels is None:
        raise ValueError("split_target needs ground-truth labels")
    n = target.n
    n_val = int(round(fraction * n))
    if n_val == 0 or n_val == n:
        raise DegenerateSplit(f"validation side would hold {n_val} of {n} rows")

    class_counts = np.bincount(target.labels, minlength=target.class_count)
    quotas = fraction * class_counts
    base = np.floor(quotas).astype(np.int64)
    remainder = n_val - int(base.sum())
    if remainder > 0:
        # ties broken toward the lower class id (stable argsort on -frac)
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
    elif remainder < 0:
        order = np.argsort(quotas - base, kind="stable")
        take = 0
        for c in order:
            if take == -remainder:
                break
            if base[c] > 0:
                base[c] -= 1
                take += 1
    for c in range(target.class_count):
        if base[c] < 1 or class_counts[c] - base[c] < 1:
            raise DegenerateSplit(
                f"class {c} ({class_counts[c]} rows) cannot give both sides a sample"
            )

    rng = np.random.default_rng(rng_seed)
    val_idx = []
    for c in range(target.class_count):
        rows = np.flatnonzero(target.labels == c)
        rng.shuffle(rows)
        val_idx.append(rows[: base[c]])
    val_mask = np.zeros(n, dtype=bool)
    val_mask[np.concatenate(val_idx)] = True
    validation = target.subset(np.flatnonzero(val_mask))
    test = target.subset(np.flatnonzero(~val_mask))
    return validation, test
