"""Image corpora to quantized functions: IDX ingestion, a deterministic
pooling encoder, feature-file caching, and a nearest-centroid classifier
used to judge retrieved objects.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .memory import QuantizedFn

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FEATURES_MAGIC = b"EHFN"

GRID = 8          # arguments form an 8x8 grid
BLOCK = 4         # of 4x4 pixel blocks
PAD = 2           # 28x28 inputs zero-padded to 32x32
N_ARGS = GRID * GRID
N_LEVELS = 16
IMAGE_SIDE = 28

MNIST_CLASSES = tuple("0123456789")
EMNIST_BALANCED_CLASSES = tuple(
    "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabdefghnqrt")


class LabeledSet:
    """Images with class labels and a label->symbol table."""

    def __init__(self, images: np.ndarray, labels: np.ndarray,
                 class_names: Optional[Sequence[str]] = None):
        images = np.ascontiguousarray(images, dtype=np.uint8)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if images.ndim != 3:
            raise ValueError("images must be (count, height, width)")
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise ValueError(
                f"{labels.shape[0] if labels.ndim == 1 else '?'} labels for "
                f"{images.shape[0]} images")
        if class_names is None:
            top = int(labels.max()) if labels.size else -1
            class_names = tuple(str(c) for c in range(top + 1))
        else:
            class_names = tuple(class_names)
        if labels.size and (labels.min() < 0
                            or labels.max() >= len(class_names)):
            raise ValueError("label outside the class-name table")
        self.images = images
        self.labels = labels
        self.class_names = class_names

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_file(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def load_idx(images_path, labels_path, transpose: bool = False) -> LabeledSet:
    """Parse an IDX image/label file pair (gzip accepted, sniffed by magic).

    Layout: images are magic 0x00000803 + count/rows/cols (u32 big-endian)
    + pixel bytes; labels are magic 0x00000801 + count + label bytes.
    ``transpose`` flips each image's axes, correcting EMNIST orientation.
    """
    img_data = _read_file(images_path)
    if len(img_data) < 16:
        raise ValueError(f"{images_path}: truncated header at offset {len(img_data)}")
    magic, count, rows, cols = struct.unpack(">IIII", img_data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(
            f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_IMAGES_MAGIC:08x}")
    need = 16 + count * rows * cols
    if len(img_data) != need:
        raise ValueError(
            f"{images_path}: {len(img_data)} bytes, expected {need}; "
            f"truncated at offset {min(len(img_data), need)}")
    images = np.frombuffer(img_data, dtype=np.uint8, offset=16)
    images = images.reshape(count, rows, cols)

    lbl_data = _read_file(labels_path)
    if len(lbl_data) < 8:
        raise ValueError(f"{labels_path}: truncated header at offset {len(lbl_data)}")
    magic, lbl_count = struct.unpack(">II", lbl_data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(
            f"{labels_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_LABELS_MAGIC:08x}")
    need = 8 + lbl_count
    if len(lbl_data) != need:
        raise ValueError(
            f"{labels_path}: {len(lbl_data)} bytes, expected {need}; "
            f"truncated at offset {min(len(lbl_data), need)}")
    if lbl_count != count:
        raise ValueError(
            f"{labels_path}: {lbl_count} labels for {count} images")
    labels = np.frombuffer(lbl_data, dtype=np.uint8, offset=8).astype(np.int64)
    if transpose:
        images = np.ascontiguousarray(images.transpose(0, 2, 1))
    return LabeledSet(images, labels)


def save_idx(labeled: LabeledSet, images_path, labels_path,
             transpose: bool = False) -> None:
    """Serialize back to the IDX pair; inverse of load_idx with the same
    transpose flag.  Paths ending in .gz are gzip-compressed (mtime 0, so
    output bytes stay deterministic)."""
    images = labeled.images
    if transpose:
        images = images.transpose(0, 2, 1)
    count, rows, cols = images.shape
    img_data = struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols)
    img_data += np.ascontiguousarray(images).tobytes()
    if labeled.labels.size and int(labeled.labels.max()) > 255:
        raise ValueError("labels above 255 do not fit IDX label bytes")
    lbl_data = struct.pack(">II", IDX_LABELS_MAGIC, count)
    lbl_data += labeled.labels.astype(np.uint8).tobytes()
    for path, data in ((images_path, img_data), (labels_path, lbl_data)):
        path = Path(path)
        if path.suffix == ".gz":
            data = gzip.compress(data, mtime=0)
        path.write_bytes(data)


def featurize_values(images: np.ndarray) -> np.ndarray:
    """Value vectors (count, 64) for a batch of 28x28 images: zero-pad to
    32x32, mean-pool 4x4 blocks, quantize each block mean to 16 levels."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    if images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise ValueError(
            f"expected {IMAGE_SIDE}x{IMAGE_SIDE} images, got "
            f"{images.shape[1]}x{images.shape[2]}")
    side = IMAGE_SIDE + 2 * PAD
    padded = np.zeros((images.shape[0], side, side), dtype=np.int64)
    padded[:, PAD:PAD + IMAGE_SIDE, PAD:PAD + IMAGE_SIDE] = images
    sums = padded.reshape(-1, GRID, BLOCK, GRID, BLOCK).sum(axis=(2, 4))
    # floor(mean/16) = floor(sum/(16 pixels * 16 gray per level))
    values = sums // (BLOCK * BLOCK * N_LEVELS)
    return values.reshape(-1, N_ARGS)


def featurize(image) -> QuantizedFn:
    """Encode one 28x28 grayscale image as a 64-argument, 16-level
    function with unit weights."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("expected a single 2-D image")
    return QuantizedFn(featurize_values(image)[0], N_LEVELS)


# ----------------------------------------------------------------------
# nearest-centroid classifier


class CentroidModel:
    """Per-class mean feature vectors; classes kept in ascending id order."""

    def __init__(self, classes: Sequence[int], centroids: np.ndarray):
        classes = np.ascontiguousarray(classes, dtype=np.int64)
        centroids = np.ascontiguousarray(centroids, dtype=np.float64)
        if classes.ndim != 1 or centroids.ndim != 2 \
                or classes.size != centroids.shape[0]:
            raise ValueError("need one centroid row per class")
        if classes.size == 0:
            raise ValueError("model needs at least one class")
        order = np.argsort(classes, kind="stable")
        self.classes = classes[order]
        self.centroids = centroids[order]
        if np.any(np.diff(self.classes) == 0):
            raise ValueError("duplicate class id")

    @property
    def n_args(self) -> int:
        return self.centroids.shape[1]

    def classify_batch(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if values.shape[1] != self.n_args:
            raise ValueError(
                f"{values.shape[1]} args, model expects {self.n_args}")
        d2 = ((values[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        # argmin takes the first minimum; classes ascend, so ties resolve
        # to the lowest class id
        return self.classes[np.argmin(d2, axis=1)]


def fit_centroids(train: Iterable[Tuple[QuantizedFn, int]]) -> CentroidModel:
    """Arithmetic mean of the value vectors per class."""
    samples = list(train)
    if not samples:
        raise ValueError("no training samples")
    values = np.stack([np.asarray(f.values, dtype=np.float64)
                       for f, _ in samples])
    labels = np.asarray([c for _, c in samples], dtype=np.int64)
    classes = np.unique(labels)
    centroids = np.stack([values[labels == c].mean(axis=0) for c in classes])
    return CentroidModel(classes, centroids)


def classify(model: CentroidModel, f: QuantizedFn) -> int:
    """Nearest centroid by Euclidean distance, ties to the lowest class."""
    return int(model.classify_batch(f.values[None, :])[0])


# ----------------------------------------------------------------------
# featurized-corpus cache
#
#   offset  size  field
#   0       4     b"EHFN"
#   4       4     record count (u32 BE)
#   8       4     n_args (u32 BE)
#   12      4     n_levels (u32 BE)
#   16      ...   records: u16 BE label + n_args value bytes


def save_features(path, values: np.ndarray, labels: np.ndarray,
                  n_levels: int = N_LEVELS) -> None:
    values = np.ascontiguousarray(values, dtype=np.int64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if values.ndim != 2 or labels.ndim != 1 \
            or values.shape[0] != labels.shape[0]:
        raise ValueError("need one label per value row")
    if not 1 <= n_levels <= 256:
        raise ValueError("n_levels must fit a value byte")
    if values.size and (values.min() < 0 or values.max() >= n_levels):
        raise ValueError(f"values must lie in [0, {n_levels})")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("labels must fit u16")
    count, n_args = values.shape
    out = bytearray(FEATURES_MAGIC)
    out += struct.pack(">III", count, n_args, n_levels)
    byte_values = values.astype(np.uint8)
    for i in range(count):
        out += struct.pack(">H", int(labels[i]))
        out += byte_values[i].tobytes()
    Path(path).write_bytes(bytes(out))


def load_features(path):
    """Returns (values (count, n_args) int64, labels (count,) int64,
    n_levels)."""
    data = _read_file(path)
    if len(data) < 16:
        raise ValueError(f"{path}: truncated header at offset {len(data)}")
    if data[:4] != FEATURES_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r} at offset 0, "
                         f"expected {FEATURES_MAGIC!r}")
    count, n_args, n_levels = struct.unpack(">III", data[4:16])
    record = 2 + n_args
    need = 16 + count * record
    if len(data) != need:
        raise ValueError(
            f"{path}: {len(data)} bytes, expected {need}; truncated at "
            f"offset {min(len(data), need)}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=16)
    raw = raw.reshape(count, record) if count else raw.reshape(0, record)
    labels = (raw[:, 0].astype(np.int64) << 8) | raw[:, 1]
    values = raw[:, 2:].astype(np.int64)
    if values.size and values.max() >= n_levels:
        raise ValueError(f"{path}: value above n_levels {n_levels}")
    return values, labels, n_levels


def write_pgm(path, values, n_levels: int = N_LEVELS) -> None:
    """Render a 64-argument function as an 8x8 binary PGM, levels scaled
    onto 0..255 for eyeballing."""
    values = np.asarray(values, dtype=np.int64).ravel()
    if values.size != N_ARGS:
        raise ValueError(f"expected {N_ARGS} values, got {values.size}")
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    scale = 255 // (n_levels - 1)
    grid = (values * scale).astype(np.uint8).reshape(GRID, GRID)
    header = f"P5\n{GRID} {GRID}\n255\n".encode()
    Path(path).write_bytes(header + grid.tobytes())
