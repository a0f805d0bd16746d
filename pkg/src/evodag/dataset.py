"""
IDX image/label loading, train/validation splitting and mini-batching.

IDX files (the MNIST distribution format) are big-endian: a magic number
(2051 for images, 2049 for labels), the item count, and for images the row and
column counts, followed by unsigned bytes. Gzip-compressed files are read
transparently.
"""

import gzip
import hashlib
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

DEFAULT_TRAIN_COUNT = 50_000
PADDED_SIZE = (32, 32)


@dataclass(frozen=True, eq=False)
class ImageSet:
    """
    Images normalized to [0, 1] with integer labels.

    Attributes:
        images (numpy.ndarray): float32 array of shape (N, H, W).
        labels (numpy.ndarray): int64 array of shape (N,), values in [0, num_classes).
        num_classes (int): Number of classes.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int = 10

    def __post_init__(self):
        if self.images.ndim != 3:
            raise DatasetError(f"images must have shape (N, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self):
        return len(self.labels)

    @property
    def image_dims(self):
        return (self.images.shape[1], self.images.shape[2])

    def take(self, indices):
        return ImageSet(self.images[indices], self.labels[indices], self.num_classes)


def _open(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def _read_header(f, path, magic, dims):
    header = f.read(4 * (1 + dims))
    if len(header) != 4 * (1 + dims):
        raise DatasetError(f"{path}: truncated IDX header")
    values = struct.unpack(f">{1 + dims}I", header)
    if values[0] != magic:
        raise DatasetError(f"{path}: bad magic number {values[0]}, expected {magic}")
    return values[1:]


def read_idx_images(path):
    """Reads an IDX image file into a uint8 array of shape (N, rows, cols)."""
    with _open(path) as f:
        count, rows, cols = _read_header(f, path, IMAGE_MAGIC, 3)
        data = f.read()
    if len(data) != count * rows * cols:
        raise DatasetError(f"{path}: expected {count * rows * cols} pixel bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path):
    """Reads an IDX label file into a uint8 array of shape (N,)."""
    with _open(path) as f:
        (count,) = _read_header(f, path, LABEL_MAGIC, 1)
        data = f.read()
    if len(data) != count:
        raise DatasetError(f"{path}: expected {count} label bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8)


def pad_images(images, size=PADDED_SIZE):
    """Zero-pads images to `size`, keeping them centered."""
    rows, cols = images.shape[1:]
    if rows > size[0] or cols > size[1]:
        raise DatasetError(f"cannot pad {rows}x{cols} images to {size[0]}x{size[1]}")
    top, left = (size[0] - rows) // 2, (size[1] - cols) // 2
    return np.pad(images, ((0, 0), (top, size[0] - rows - top), (left, size[1] - cols - left)))


def load_idx(images_path, labels_path, num_classes=10, pad=False):
    """
    Loads an IDX image/label pair.

    Args:
        images_path (str): IDX image file (optionally .gz).
        labels_path (str): IDX label file (optionally .gz).
        num_classes (int): Labels must be smaller than this.
        pad (bool): Zero-pad images to 32x32.

    Returns:
        ImageSet: Pixels scaled by 1/255.

    Raises:
        DatasetError: On missing files, bad magic numbers, count mismatches or out-of-range labels.
    """
    try:
        images = read_idx_images(images_path)
        labels = read_idx_labels(labels_path)
    except OSError as e:
        raise DatasetError(f"cannot read dataset: {e}") from e
    if len(images) != len(labels):
        raise DatasetError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    if len(labels) and labels.max() >= num_classes:
        raise DatasetError(f"{labels_path}: label {labels.max()} out of range for {num_classes} classes")
    if pad:
        images = pad_images(images)

    logger.info("Loaded %s images of %sx%s from %s.", len(images), images.shape[1], images.shape[2], images_path)
    return ImageSet((images / 255.0).astype(np.float32), labels.astype(np.int64), num_classes)


def split(image_set, train_count=DEFAULT_TRAIN_COUNT, seed=0):
    """Seeded uniform partition into (train, validation); disjoint and exhaustive."""
    if not 0 < train_count < len(image_set):
        raise DatasetError(f"train count {train_count} must lie strictly between 0 and {len(image_set)}")
    permutation = np.random.default_rng(seed).permutation(len(image_set))
    return image_set.take(np.sort(permutation[:train_count])), image_set.take(np.sort(permutation[train_count:]))


def subset(image_set, count, seed=0):
    """Seeded random subset of `count` samples (the whole set if count >= N)."""
    if count >= len(image_set):
        return image_set
    indices = np.random.default_rng(seed).choice(len(image_set), size=count, replace=False)
    return image_set.take(np.sort(indices))


def batches(image_set, batch_size, epoch_seed):
    """
    Yields (images, labels) mini-batches of one epoch in a seeded random order.

    The final ragged batch is dropped, so every batch has exactly `batch_size` samples.
    """
    if not 0 < batch_size <= len(image_set):
        raise DatasetError(f"batch size {batch_size} does not fit {len(image_set)} samples")
    order = np.random.default_rng(epoch_seed).permutation(len(image_set))
    for start in range(0, len(order) - batch_size + 1, batch_size):
        indices = order[start:start + batch_size]
        yield image_set.images[indices], image_set.labels[indices]


def fingerprint(*image_sets):
    """SHA-256 over shapes, pixels and labels; identifies a dataset in the worker handshake."""
    digest = hashlib.sha256()
    for image_set in image_sets:
        digest.update(repr((image_set.images.shape, image_set.num_classes)).encode("ascii"))
        digest.update(np.ascontiguousarray(image_set.images).tobytes())
        digest.update(np.ascontiguousarray(image_set.labels, dtype="<i8").tobytes())
    return digest.hexdigest()
