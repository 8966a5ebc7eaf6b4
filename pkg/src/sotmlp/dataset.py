"""MNIST IDX files: parsing, writing and conversion to input voltages."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # 784 floats in [0, 1]
    label: int

    def __post_init__(self):
        if np.shape(self.pixels) != (784,):
            raise ValueError(f"expected 784 pixels, got shape {np.shape(self.pixels)}")
        if not 0 <= int(self.label) <= 9:
            raise ValueError(f"label {self.label} out of range")


def _header(data: bytes, n_words: int, magic: int, what: str) -> tuple[int, ...]:
    size = 4 * n_words
    if len(data) < size:
        raise IdxFormatError(f"{what}: truncated header ({len(data)} bytes)")
    words = struct.unpack(f">{n_words}I", data[:size])
    if words[0] != magic:
        raise IdxFormatError(f"{what}: bad magic 0x{words[0]:08x}, expected 0x{magic:08x}")
    return words[1:]


def parse_idx_images(data: bytes, mnist: bool = True) -> np.ndarray:
    """Images as a (count, rows, cols) uint8 array."""
    count, rows, cols = _header(data, 4, IMAGE_MAGIC, "image file")
    if mnist and (rows, cols) != (28, 28):
        raise IdxFormatError(f"image file: MNIST images are 28x28, got {rows}x{cols}")
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise IdxFormatError(f"image file: truncated payload, {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise IdxFormatError(f"image file: {len(data) - expected} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def parse_idx_labels(data: bytes) -> np.ndarray:
    (count,) = _header(data, 2, LABEL_MAGIC, "label file")
    expected = 8 + count
    if len(data) < expected:
        raise IdxFormatError(f"label file: truncated payload, {len(data)} of {expected} bytes")
    if len(data) > expected:
        raise IdxFormatError(f"label file: {len(data) - expected} trailing bytes")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label file: label {labels.max()} out of range 0-9")
    return labels


def encode_idx_images(images) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    return struct.pack(">4I", IMAGE_MAGIC, count, rows, cols) + images.tobytes()


def encode_idx_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    return struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.tobytes()


def read_bytes(path) -> bytes:
    """File contents, transparently gunzipped when the name ends in .gz."""
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def resolve(directory, stem: str) -> Path:
    directory = Path(directory)
    for candidate in (directory / stem, directory / (stem + ".gz")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def normalize(images) -> np.ndarray:
    """uint8 images -> (count, 784) floats in [0, 1]."""
    images = np.asarray(images)
    return images.reshape(len(images), -1).astype(float) / 255.0


def load_split(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = parse_idx_images(read_bytes(images_path))
    labels = parse_idx_labels(read_bytes(labels_path))
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels")
    return normalize(images), labels.astype(np.int64)


def load_mnist(directory, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    return load_split(
        resolve(directory, MNIST_FILES[f"{split}_images"]),
        resolve(directory, MNIST_FILES[f"{split}_labels"]),
    )


def labeled_images(pixels, labels) -> list[LabeledImage]:
    if len(pixels) != len(labels):
        raise ValueError(f"{len(pixels)} images but {len(labels)} labels")
    return [LabeledImage(np.asarray(p), int(lab)) for p, lab in zip(pixels, labels)]


def to_voltages(image, v_read: float = 0.1) -> np.ndarray:
    pixels = np.asarray(getattr(image, "pixels", image), dtype=float)
    if pixels.size and (pixels.min() < 0 or pixels.max() > 1):
        raise ValueError("pixels must lie within [0, 1]")
    return pixels * v_read
