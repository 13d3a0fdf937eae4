"""Sequential splitting, sliding windows, dataset assembly and on-disk formats."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")
CACHE_MAGIC = b"CSIW"
CACHE_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass
class DatasetConfig:
    window_len: int = 100
    overlap: float = 0.5
    on_reduced: bool = True
    fractions: tuple = (0.7, 0.1, 0.2)
    normalize: bool = False
    shuffle: bool = False
    seed: int = 0

    def rows_per_window(self, reduced):
        """Window length in matrix rows; halved when windows are counted in raw packets."""
        if reduced and not self.on_reduced:
            return self.window_len // 2
        return self.window_len

    def stride(self, rows):
        step = int(round(rows * (1.0 - self.overlap)))
        if not 0.0 <= self.overlap < 1.0 or step < 1:
            raise DatasetError(f"overlap {self.overlap} gives no forward stride for window {rows}")
        return step


@dataclass
class WindowSample:
    amplitude: np.ndarray
    phase: np.ndarray
    label: int
    source: tuple  # (session id, start row)


@dataclass
class SplitArrays:
    amplitude: np.ndarray  # (n, W, K)
    phase: np.ndarray
    labels: np.ndarray  # (n,)
    sources: np.ndarray  # (n, 2) session id, start row

    def __len__(self):
        return len(self.labels)


@dataclass
class WindowedDataset:
    train: SplitArrays
    val: SplitArrays
    test: SplitArrays
    classes: int
    window_len: int
    overlap: float
    stats: dict = field(default_factory=dict)

    def split(self, name):
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def arrays(self, name):
        s = self.split(name)
        return s.amplitude, s.phase, s.labels

    def samples(self, name):
        s = self.split(name)
        for i in range(len(s)):
            yield WindowSample(s.amplitude[i], s.phase[i], int(s.labels[i]), tuple(int(v) for v in s.sources[i]))

    @property
    def subcarriers(self):
        return self.train.amplitude.shape[2]


def window_count(length, window_len, stride):
    if length < window_len:
        return 0
    return (length - window_len) // stride + 1


def split_bounds(n_rows, fractions=(0.7, 0.1, 0.2)):
    """Row boundaries ``(train_end, val_end)`` for a sequential split."""
    fr = [Fraction(str(f)) for f in fractions]
    if len(fr) != 3 or any(f <= 0 for f in fr) or sum(fr) != 1:
        raise DatasetError(f"split fractions must be three positive values summing to 1, got {fractions}")
    return math.floor(n_rows * fr[0]), math.floor(n_rows * (fr[0] + fr[1]))


def sequential_split(amplitude, phase, fractions=(0.7, 0.1, 0.2), window_len=1):
    """Contiguous train / val / test segments in temporal order."""
    n = amplitude.shape[0]
    b1, b2 = split_bounds(n, fractions)
    segments = []
    for name, lo, hi in zip(SPLITS, (0, b1, b2), (b1, b2, n)):
        if hi - lo < window_len:
            raise DatasetError(
                f"{name} segment has {hi - lo} rows, fewer than one window of {window_len} "
                f"(series of {n} rows)"
            )
        segments.append((amplitude[lo:hi], phase[lo:hi]))
    return segments


def make_windows(amplitude, phase, window_len=100, overlap=0.5, label=0, session_id=0):
    length = amplitude.shape[0]
    if length < window_len:
        raise DatasetError(f"segment of {length} rows is shorter than the window {window_len}")
    stride = DatasetConfig(window_len=window_len, overlap=overlap).stride(window_len)
    starts = np.arange(window_count(length, window_len, stride)) * stride
    return [
        WindowSample(amplitude[s : s + window_len], phase[s : s + window_len], label, (session_id, int(s)))
        for s in starts
    ]


def _stack(samples, w, k):
    if not samples:
        empty = np.zeros((0, w, k))
        return SplitArrays(empty, empty.copy(), np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64))
    return SplitArrays(
        amplitude=np.stack([s.amplitude for s in samples]),
        phase=np.stack([s.phase for s in samples]),
        labels=np.array([s.label for s in samples], dtype=np.int64),
        sources=np.array([s.source for s in samples], dtype=np.int64),
    )


def build_dataset(sessions, cfg=None, reduced=True):
    """Split each (matrix, label) session sequentially, then window every segment."""
    cfg = cfg or DatasetConfig()
    labels = sorted({int(label) for _, label in sessions})
    if len(labels) < 2:
        raise DatasetError(f"fewer than 2 classes in the dataset (labels {labels})")
    classes = labels[-1] + 1
    if labels != list(range(classes)):
        raise DatasetError(f"labels must cover 0..{classes - 1}, got {labels}")

    rows = cfg.rows_per_window(reduced)
    stride = cfg.stride(rows)
    per_split = {name: [] for name in SPLITS}
    shape = None
    for sid, (m, label) in enumerate(sessions):
        amp, phase = np.asarray(m.amplitude), np.asarray(m.phase)
        if shape is None:
            shape = amp.shape[1]
        elif amp.shape[1] != shape:
            raise DatasetError(f"session {sid} has K={amp.shape[1]}, expected {shape}")
        for name, (a, p) in zip(SPLITS, sequential_split(amp, phase, cfg.fractions, rows)):
            per_split[name].extend(make_windows(a, p, rows, 1.0 - stride / rows, int(label), sid))

    for name in SPLITS:
        present = {s.label for s in per_split[name]}
        missing = set(range(classes)) - present
        if missing:
            raise DatasetError(f"classes {sorted(missing)} missing from the {name} split")

    splits = {name: _stack(per_split[name], rows, shape) for name in SPLITS}
    if cfg.shuffle:
        order = np.random.default_rng(cfg.seed).permutation(len(splits["train"]))
        t = splits["train"]
        splits["train"] = SplitArrays(t.amplitude[order], t.phase[order], t.labels[order], t.sources[order])
    ds = WindowedDataset(**splits, classes=classes, window_len=rows, overlap=1.0 - stride / rows)
    if cfg.normalize:
        normalize(ds)
    return ds


def normalize(ds):
    """Z-score each subcarrier of amplitude and phase using train statistics."""
    stats = {}
    for key in ("amplitude", "phase"):
        ref = getattr(ds.train, key)
        mu = ref.mean(axis=(0, 1))
        sd = ref.std(axis=(0, 1))
        sd = np.where(sd > 0, sd, 1.0)
        for name in SPLITS:
            s = ds.split(name)
            setattr(s, key, (getattr(s, key) - mu) / sd)
        stats[key] = {"mean": mu.tolist(), "std": sd.tolist()}
    ds.stats = stats
    return ds


# ------------------------------------------------------------------ manifest


@dataclass
class ManifestEntry:
    path: Path
    label: int
    orientation_deg: int | None = None


def read_manifest(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise DatasetError(f"{path}:{lineno}: expected 'path,label[,orientation]', got {line!r}")
        try:
            label = int(parts[1])
            orientation = int(parts[2]) if len(parts) == 3 and parts[2] not in ("", "None") else None
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-integer label or orientation in {line!r}") from None
        p = Path(parts[0])
        entries.append(ManifestEntry(p if p.is_absolute() else path.parent / p, label, orientation))
    if not entries:
        raise DatasetError(f"manifest {path} lists no sessions")
    return entries


def write_manifest(path, entries):
    path = Path(path)
    lines = []
    for e in entries:
        p = Path(e.path)
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        lines.append(f"{p},{e.label},{'' if e.orientation_deg is None else e.orientation_deg}")
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------- cache


def write_dataset_cache(path, ds):
    w, k = ds.window_len, ds.subcarriers
    chunks = [CACHE_MAGIC, struct.pack("<HIIId", CACHE_VERSION, ds.classes, w, k, ds.overlap)]
    for name in SPLITS:
        s = ds.split(name)
        chunks.append(struct.pack("<I", len(s)))
        chunks.append(s.labels.astype("<i4").tobytes())
        chunks.append(s.sources.astype("<i4").tobytes())
        chunks.append(s.amplitude.astype("<f4").tobytes())
        chunks.append(s.phase.astype("<f4").tobytes())
    body = b"".join(chunks)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def read_dataset_cache(path):
    blob = Path(path).read_bytes()
    if blob[:4] != CACHE_MAGIC:
        raise DatasetError(f"{path}: not a dataset cache (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise DatasetError(f"{path}: dataset cache checksum mismatch")
    version, classes, w, k, overlap = struct.unpack_from("<HIIId", body, 4)
    if version != CACHE_VERSION:
        raise DatasetError(f"{path}: unsupported cache version {version}")
    off = 4 + struct.calcsize("<HIIId")
    splits = {}
    for name in SPLITS:
        (n,) = struct.unpack_from("<I", body, off)
        off += 4

        def take(dtype, count, shape):
            nonlocal off
            arr = np.frombuffer(body, dtype=dtype, count=count, offset=off).reshape(shape)
            off += arr.nbytes
            return arr.astype(np.int64 if dtype == "<i4" else np.float64)

        labels = take("<i4", n, (n,))
        sources = take("<i4", 2 * n, (n, 2))
        amp = take("<f4", n * w * k, (n, w, k))
        phase = take("<f4", n * w * k, (n, w, k))
        splits[name] = SplitArrays(amp, phase, labels, sources)
    return WindowedDataset(**splits, classes=classes, window_len=w, overlap=overlap)
