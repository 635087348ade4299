"""Datasets: IDX files, binarization, event frames, synthetic generators.

All training inputs are sign-binary (+-1) float64 arrays; labels are int64
class indices. LabeledDataset validates both at construction.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import NS_DATA, RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.inputs.shape[0]} inputs vs {self.labels.shape[0]} labels")
        if not np.all((self.inputs == 1.0) | (self.inputs == -1.0)):
            raise DataError("inputs must be sign-binary (+-1)")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return self.inputs.shape[0]


def _open_maybe_gzip(path: str):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(path: str) -> np.ndarray:
    """Read one IDX file (images uint8 (N,H,W) or labels uint8 (N,)).

    Big-endian headers; gzip-compressed files are detected by magic and
    decompressed transparently. Truncated payloads and unknown magics raise.
    """
    with _open_maybe_gzip(path) as f:
        head = f.read(4)
        if len(head) != 4:
            raise DataError(f"{path}: truncated header")
        (magic,) = struct.unpack(">l", head)
        if magic == IDX_IMAGES_MAGIC:
            dims = struct.unpack(">lll", f.read(12))
            n, h, w = dims
            payload = f.read(n * h * w + 1)
            if len(payload) != n * h * w:
                raise DataError(f"{path}: payload length != {n}x{h}x{w}")
            return np.frombuffer(payload, dtype=np.uint8).reshape(n, h, w)
        if magic == IDX_LABELS_MAGIC:
            (n,) = struct.unpack(">l", f.read(4))
            payload = f.read(n + 1)
            if len(payload) != n:
                raise DataError(f"{path}: payload length != {n}")
            return np.frombuffer(payload, dtype=np.uint8)
        raise DataError(f"{path}: unknown IDX magic 0x{magic:08x}")


def binarize_sign(images: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """uint8 images -> +-1: scale to [0, 1] by /255 and threshold at > 0.5.

    128/255 > 0.5 maps to +1; 127/255 maps to -1.
    """
    scaled = np.asarray(images, dtype=np.float64) / 255.0
    return np.where(scaled > threshold, 1.0, -1.0)


def binarize_unit(values: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Values already in [0, 1] -> +-1 at > threshold."""
    return np.where(np.asarray(values, dtype=np.float64) > threshold, 1.0, -1.0)


def load_mnist_dir(root: str, kind: str = "train", conv: bool = False) -> LabeledDataset:
    """Load an MNIST-layout directory of IDX files.

    Accepts the canonical file names with or without .gz; kind is "train"
    or "t10k". conv=True keeps (N, 1, 28, 28), else flattens to (N, 784).
    """
    def find(stem):
        for name in (stem, stem + ".gz"):
            p = os.path.join(root, name)
            if os.path.exists(p):
                return p
        raise DataError(f"missing {stem}[.gz] under {root}")

    images = load_idx(find(f"{kind}-images-idx3-ubyte"))
    labels = load_idx(find(f"{kind}-labels-idx1-ubyte")).astype(np.int64)
    x = binarize_sign(images)
    x = x[:, None, :, :] if conv else x.reshape(x.shape[0], -1)
    return LabeledDataset(x, labels, 10)


def events_to_frames(events: np.ndarray, num_frames: int = 10,
                     height: int = 34, width: int = 34) -> np.ndarray:
    """Accumulate an event stream into {0, 1} occupancy frames.

    events: (N, 4) rows (t, x, y, polarity). The recording span [0, max_t]
    is cut into num_frames equal slices of length max_t/num_frames; an
    event lands in floor(t / frame_len), with t == max_t assigned to the
    last frame. Only ON events (polarity > 0) are kept. A pixel is 1 in a
    frame if at least one kept event hit it there. Output is independent of
    the ordering of rows. Returns (num_frames, height, width).
    """
    events = np.asarray(events, dtype=np.float64)
    frames = np.zeros((num_frames, height, width), dtype=np.float64)
    if events.size == 0:
        return frames
    if events.ndim != 2 or events.shape[1] != 4:
        raise DataError(f"events must be (N, 4) rows (t, x, y, polarity), got {events.shape}")
    t = events[:, 0]
    if np.any(t < 0):
        raise DataError("negative event timestamp")
    max_t = t.max()
    if max_t == 0:
        idx = np.zeros(len(t), dtype=np.int64)
    else:
        frame_len = max_t / num_frames
        idx = np.minimum((t / frame_len).astype(np.int64), num_frames - 1)
    on = events[:, 3] > 0
    xs = events[:, 1].astype(np.int64)
    ys = events[:, 2].astype(np.int64)
    if np.any((xs < 0) | (xs >= width) | (ys < 0) | (ys >= height)):
        raise DataError("event coordinates outside the sensor")
    frames[idx[on], ys[on], xs[on]] = 1.0
    return frames


def frames_to_signs(frames: np.ndarray) -> np.ndarray:
    """{0, 1} occupancy frames -> the +-1 convention the networks consume."""
    return 2.0 * np.asarray(frames, dtype=np.float64) - 1.0


def load_events_csv(path: str) -> np.ndarray:
    """Event file with columns x,y,t,polarity -> (N, 4) rows (t, x, y, p).

    A first line that fails to parse as numbers is treated as a header.
    """
    rows = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected x,y,t,polarity")
            try:
                x, y, t, p = (float(v) for v in parts)
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"{path}:{lineno}: non-numeric event row")
            rows.append((t, x, y, p))
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def load_events_binary(path: str) -> np.ndarray:
    """Flat little-endian u32 quadruples (x, y, t, polarity) -> (t, x, y, p)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) % 16 != 0:
        raise DataError(f"{path}: length {len(blob)} is not a multiple of 16")
    raw = np.frombuffer(blob, dtype="<u4").reshape(-1, 4).astype(np.float64)
    return raw[:, [2, 0, 1, 3]]


def synthetic_dataset(kind: str, n: int, seed: int, dim: int = 16,
                      for_conv: bool = False) -> LabeledDataset:
    """Seeded synthetic binary classification sets.

    two-gaussians: class means +-3 sigma apart per feature, sign-binarized;
    linearly separable with margin, so tiny models learn it in a few epochs.
    xor-blobs: first two features carry an XOR parity pattern (exact
    corners), the rest are fair coin flips; no linear rule beats chance by
    a wide margin, so solving it requires the hidden layer.
    """
    gen = RngStream(seed).child(NS_DATA).generator()
    labels = gen.integers(0, 2, size=n).astype(np.int64)
    if kind == "two-gaussians":
        means = np.where(labels[:, None] == 1, 1.5, -1.5)
        raw = means + gen.standard_normal((n, dim)) * 0.5
        x = np.where(raw > 0.0, 1.0, -1.0)
    elif kind == "xor-blobs":
        a = gen.integers(0, 2, size=n)
        b = (a ^ labels).astype(np.int64)
        rest = np.where(gen.random((n, dim - 2)) < 0.5, 1.0, -1.0)
        x = np.concatenate([
            np.where(a[:, None] == 1, 1.0, -1.0),
            np.where(b[:, None] == 1, 1.0, -1.0),
            rest], axis=1)
    else:
        raise DataError(f"unknown synthetic dataset {kind!r}")
    if for_conv:
        side = int(np.sqrt(dim))
        if side * side != dim:
            raise DataError(f"dim {dim} is not square, cannot reshape for conv")
        x = x.reshape(n, 1, side, side)
    return LabeledDataset(x, labels, 2)


def load_digits_dataset(seed: int = 0, test_fraction: float = 0.25,
                        conv: bool = False):
    """sklearn's bundled 8x8 digits, binarized, seeded 75/25 split.

    Returns (train, test) LabeledDatasets. Raises DataError if scikit-learn
    is not installed.
    """
    try:
        from sklearn.datasets import load_digits
    except ImportError as e:
        raise DataError("scikit-learn is required for the digits dataset") from e
    bunch = load_digits()
    x = binarize_unit(bunch.images / 16.0)
    y = bunch.target.astype(np.int64)
    n = x.shape[0]
    order = RngStream(seed).child(NS_DATA, 1).generator().permutation(n)
    n_test = int(round(n * test_fraction))
    test_idx, train_idx = order[:n_test], order[n_test:]
    if conv:
        x = x[:, None, :, :]
    else:
        x = x.reshape(n, -1)
    return (LabeledDataset(x[train_idx], y[train_idx], 10),
            LabeledDataset(x[test_idx], y[test_idx], 10))
