"""Accelerometer data pipeline.

Raw recordings (one per user) are split by user, downsampled to 50 Hz,
cut into 2 s windows with 50% overlap, and z-scored per channel with
train-split statistics. Gaussian sensor noise can be injected into the
test split. A synthetic generator produces small, class-separable
datasets for end-to-end runs without any real corpus.

CSV format: header ``timestamp,ax,ay,az,label``, one file per user.
A JSON manifest ties the files together:

    {"sample_rate_hz": 100.0,
     "class_names": ["walk", "sit"],
     "users": [{"user_id": "u01", "path": "u01.csv"}, ...]}
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TARGET_RATE_HZ = 50.0
WINDOW_LEN = 100
WINDOW_STRIDE = 50
NOISE_VARIANCES = (0.0, 0.001, 0.01, 0.05, 0.5)


@dataclass
class RawRecording:
    user_id: str
    sample_rate_hz: float
    samples: np.ndarray          # [N, 3] float64
    labels: np.ndarray           # [N] int
    timestamps: np.ndarray | None = None   # [N] seconds; uniform grid if None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError(f"samples must be [N, 3], got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("labels must align 1:1 with samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
            if self.timestamps.shape != (self.samples.shape[0],):
                raise ValueError("timestamps must align 1:1 with samples")

    def time_axis(self) -> np.ndarray:
        if self.timestamps is not None:
            return self.timestamps
        return np.arange(self.samples.shape[0], dtype=np.float64) / self.sample_rate_hz


@dataclass
class WindowedDataset:
    windows: np.ndarray          # [N, 3, 100] float64
    labels: np.ndarray           # [N] int
    user_ids: list[str]
    split: str                   # train | val | test
    class_names: list[str] | None = None

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3 or self.windows.shape[1:] != (3, WINDOW_LEN):
            raise ValueError(f"windows must be [N, 3, {WINDOW_LEN}], got {self.windows.shape}")
        if self.labels.shape != (self.windows.shape[0],):
            raise ValueError("labels must align with windows")
        if len(self.user_ids) != self.windows.shape[0]:
            raise ValueError("user_ids must align with windows")

    def __len__(self) -> int:
        return self.windows.shape[0]


def split_by_users(recordings: list[RawRecording], rng_seed: int) -> dict[str, list[str]]:
    """Partition user ids into test (20%, rounded up), val (20% of the
    remainder, rounded up), and train (the rest)."""
    users = sorted({r.user_id for r in recordings})
    if len(users) < 3:
        raise ValueError(f"need at least 3 distinct users, got {len(users)}")
    rng = np.random.default_rng(rng_seed)
    order = [users[i] for i in rng.permutation(len(users))]
    n_test = math.ceil(0.2 * len(order))
    remainder = order[n_test:]
    n_val = math.ceil(0.2 * len(remainder))
    return {
        "test": sorted(order[:n_test]),
        "val": sorted(remainder[:n_val]),
        "train": sorted(remainder[n_val:]),
    }


def resample_to_50hz(recording: RawRecording) -> RawRecording:
    """Linear-interpolate samples onto a uniform 50 Hz grid; labels come
    from the nearest original sample. Rates at or below 50 Hz pass
    through unchanged (with a warning when strictly below)."""
    if recording.samples.shape[0] == 0:
        raise ValueError("cannot resample an empty recording")
    if recording.sample_rate_hz < TARGET_RATE_HZ:
        warnings.warn(
            f"user {recording.user_id}: rate {recording.sample_rate_hz} Hz below "
            f"{TARGET_RATE_HZ} Hz, passing through without upsampling")
        return recording
    if recording.sample_rate_hz == TARGET_RATE_HZ and recording.timestamps is None:
        return recording
    t_old = recording.time_axis()
    n_new = int(math.floor((t_old[-1] - t_old[0]) * TARGET_RATE_HZ)) + 1
    t_new = t_old[0] + np.arange(n_new, dtype=np.float64) / TARGET_RATE_HZ
    samples = np.empty((n_new, 3), dtype=np.float64)
    for ch in range(3):
        samples[:, ch] = np.interp(t_new, t_old, recording.samples[:, ch])
    # nearest original sample for each resampled instant
    idx = np.searchsorted(t_old, t_new)
    idx = np.clip(idx, 1, len(t_old) - 1)
    left_closer = (t_new - t_old[idx - 1]) <= (t_old[idx] - t_new)
    nearest = np.where(left_closer, idx - 1, idx)
    labels = recording.labels[nearest]
    return RawRecording(recording.user_id, TARGET_RATE_HZ, samples, labels, None)


def window(recording: RawRecording) -> list[tuple[np.ndarray, int]]:
    """Slice a 50 Hz recording into [3, 100] windows with stride 50.

    Window label is the majority label inside the window; ties go to the
    smallest class id. A partial trailing window is dropped.
    """
    n = recording.samples.shape[0]
    if n < WINDOW_LEN:
        raise ValueError(f"recording has {n} samples, need at least {WINDOW_LEN}")
    out = []
    for start in range(0, n - WINDOW_LEN + 1, WINDOW_STRIDE):
        seg = recording.samples[start:start + WINDOW_LEN]
        lab = recording.labels[start:start + WINDOW_LEN]
        label = int(np.bincount(lab).argmax())
        out.append((seg.T.copy(), label))
    return out


def add_gaussian_noise(dataset: WindowedDataset, variance: float,
                       rng_seed: int) -> WindowedDataset:
    """Return a copy of the test split with Normal(0, variance) noise
    added elementwise. Variance 0 returns bit-identical windows."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    if dataset.split != "test":
        raise ValueError("noise injection is restricted to the test split")
    windows = dataset.windows.copy()
    if variance > 0:
        rng = np.random.default_rng(rng_seed)
        windows = windows + rng.normal(0.0, math.sqrt(variance), size=windows.shape)
    return WindowedDataset(windows, dataset.labels.copy(), list(dataset.user_ids),
                           dataset.split, dataset.class_names)


def generate_synthetic(k_classes: int, n_users: int, duration_s: float,
                       rng_seed: int, jitter: float = 0.05) -> list[RawRecording]:
    """Per-user 50 Hz recordings with one contiguous segment per class.

    Class c carries a sinusoid mixture with dominant frequency
    1 + c Hz, a class-specific harmonic, and a small constant bias, so
    classes separate both in the spectrum and in mean activation. Each
    user gets a random amplitude scale and DC offset; jitter adds white
    Gaussian noise on top.
    """
    if k_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_users < 1:
        raise ValueError("need at least 1 user")
    rng = np.random.default_rng(rng_seed)
    recordings = []
    n_total = int(round(duration_s * TARGET_RATE_HZ))
    seg_len = n_total // k_classes
    if seg_len < WINDOW_LEN:
        raise ValueError(
            f"duration {duration_s}s gives {seg_len} samples per class, "
            f"need at least {WINDOW_LEN}")
    for u in range(n_users):
        scale = 1.0 + 0.05 * rng.standard_normal()
        dc = 0.05 * rng.standard_normal(3)
        class_order = rng.permutation(k_classes)
        samples = np.zeros((seg_len * k_classes, 3), dtype=np.float64)
        labels = np.zeros(seg_len * k_classes, dtype=np.int64)
        for seg_i, c in enumerate(class_order):
            c = int(c)
            freq = 1.0 + float(c)
            amp = 1.0 + 0.15 * c
            phase = rng.uniform(0, 2 * np.pi)
            t = np.arange(seg_len, dtype=np.float64) / TARGET_RATE_HZ
            ax = amp * np.sin(2 * np.pi * freq * t + phase)
            ay = 0.6 * np.sin(2 * np.pi * freq * t + phase + np.pi / 3) \
                + 0.3 * np.sin(2 * np.pi * 2 * freq * t + phase)
            az = 0.5 * np.cos(2 * np.pi * freq * t + phase) + 0.2 * c
            seg = np.stack([ax, ay, az], axis=1)
            seg = scale * seg + dc
            if jitter > 0:
                seg = seg + jitter * rng.standard_normal(seg.shape)
            lo = seg_i * seg_len
            samples[lo:lo + seg_len] = seg
            labels[lo:lo + seg_len] = c
        recordings.append(RawRecording(f"user{u:02d}", TARGET_RATE_HZ, samples, labels))
    return recordings


@dataclass
class NormalizationStats:
    mean: np.ndarray   # [3]
    std: np.ndarray    # [3]


def build_datasets(recordings: list[RawRecording], rng_seed: int,
                   class_names: list[str] | None = None,
                   ) -> tuple[dict[str, WindowedDataset], NormalizationStats]:
    """Full pipeline: user split, resample, window, then per-channel
    z-score with train-split statistics applied to every split."""
    partitions = split_by_users(recordings, rng_seed)
    by_user = {}
    for rec in recordings:
        by_user.setdefault(rec.user_id, []).append(rec)

    def collect(users):
        wins, labs, uids = [], [], []
        for uid in users:
            for rec in by_user[uid]:
                for w, lab in window(resample_to_50hz(rec)):
                    wins.append(w)
                    labs.append(lab)
                    uids.append(uid)
        if not wins:
            raise ValueError("a split produced zero windows")
        return np.stack(wins), np.asarray(labs, dtype=np.int64), uids

    raw = {split: collect(users) for split, users in partitions.items()}
    train_w = raw["train"][0]
    mean = train_w.mean(axis=(0, 2))
    std = train_w.std(axis=(0, 2))
    std = np.where(std == 0.0, 1.0, std)
    stats = NormalizationStats(mean, std)

    datasets = {}
    for split, (wins, labs, uids) in raw.items():
        wins = (wins - mean[None, :, None]) / std[None, :, None]
        datasets[split] = WindowedDataset(wins, labs, uids, split, class_names)
    return datasets, stats


def write_recording_csv(recording: RawRecording, path: str | Path) -> None:
    t = recording.time_axis()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "ax", "ay", "az", "label"])
        for i in range(recording.samples.shape[0]):
            writer.writerow([repr(float(t[i])),
                             repr(float(recording.samples[i, 0])),
                             repr(float(recording.samples[i, 1])),
                             repr(float(recording.samples[i, 2])),
                             int(recording.labels[i])])


def load_recording_csv(path: str | Path, user_id: str,
                       sample_rate_hz: float) -> RawRecording:
    timestamps, rows, labels = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "ax", "ay", "az", "label"]:
            raise ValueError(f"{path}: expected header timestamp,ax,ay,az,label, got {header}")
        prev_t = -math.inf
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            t = float(row[0])
            if t <= prev_t:
                raise ValueError(f"{path}:{lineno}: timestamps must be strictly increasing")
            prev_t = t
            timestamps.append(t)
            rows.append((float(row[1]), float(row[2]), float(row[3])))
            labels.append(int(row[4]))
    if not rows:
        raise ValueError(f"{path}: no samples")
    return RawRecording(user_id, sample_rate_hz,
                        np.asarray(rows, dtype=np.float64),
                        np.asarray(labels, dtype=np.int64),
                        np.asarray(timestamps, dtype=np.float64))


def write_manifest(path: str | Path, sample_rate_hz: float,
                   class_names: list[str], users: list[dict]) -> None:
    with open(path, "w") as fh:
        json.dump({"sample_rate_hz": sample_rate_hz,
                   "class_names": class_names,
                   "users": users}, fh, indent=2)
        fh.write("\n")


def load_manifest(path: str | Path) -> list[RawRecording]:
    """Read a dataset manifest and all user CSVs it references."""
    path = Path(path)
    with open(path) as fh:
        manifest = json.load(fh)
    for key in ("sample_rate_hz", "class_names", "users"):
        if key not in manifest:
            raise ValueError(f"{path}: manifest missing key {key!r}")
    rate = float(manifest["sample_rate_hz"])
    recordings = []
    for entry in manifest["users"]:
        csv_path = Path(entry["path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        recordings.append(load_recording_csv(csv_path, entry["user_id"], rate))
    return recordings


def manifest_class_names(path: str | Path) -> list[str]:
    with open(path) as fh:
        return list(json.load(fh)["class_names"])
