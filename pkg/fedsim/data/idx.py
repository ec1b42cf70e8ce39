"""Reader for the IDX image/label container format (MNIST, EMNIST)."""
import gzip
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from fedsim.autodiff.tensor import Tensor
from fedsim.data.dataset import Dataset
from fedsim.errors import IdxFormatError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as handle:
            return handle.read()
    return path.read_bytes()


def parse_idx(payload: bytes, expected_magic: int, source: str = "<bytes>") -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of its declared dimensions.

    Args:
        payload: Raw file contents.
        expected_magic: 0x803 for image files, 0x801 for label files.
        source: Name used in error messages.

    Returns:
        uint8 array shaped by the header's dimension sizes.
    """
    if len(payload) < 4:
        raise IdxFormatError(f"{source}: truncated file ({len(payload)} bytes, header needs 4)")
    magic = int.from_bytes(payload[:4], "big")
    if magic != expected_magic:
        raise IdxFormatError(f"{source}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(payload) < header:
        raise IdxFormatError(f"{source}: truncated header")
    dims = tuple(int.from_bytes(payload[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim))
    expected = int(np.prod(dims, dtype=np.int64))
    body = payload[header:]
    if len(body) < expected:
        raise IdxFormatError(f"{source}: truncated data ({len(body)} of {expected} bytes)")
    if len(body) > expected:
        raise IdxFormatError(f"{source}: {len(body) - expected} trailing bytes after data")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path: PathLike, labels_path: PathLike, limit: Optional[int] = None,
             class_count: Optional[int] = None) -> Dataset:
    """Load an image/label IDX pair as a Dataset with pixels scaled to [0, 1].

    Args:
        images_path: IDX3 image file, optionally gzip-compressed (``.gz``).
        labels_path: IDX1 label file, optionally gzip-compressed.
        limit: Keep only the first ``limit`` examples.
        class_count: Number of classes; defaults to max(label) + 1.

    Returns:
        Dataset of shape [N, rows, cols].
    """
    images = parse_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    labels = parse_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if images.ndim < 2:
        raise IdxFormatError(f"{images_path}: image file needs at least 2 dimensions")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: label file must be 1-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images in {images_path} vs {labels.shape[0]} labels in {labels_path}"
        )
    if images.shape[0] == 0:
        raise IdxFormatError(f"{images_path}: no examples")
    if limit is not None:
        if limit < 1:
            raise IdxFormatError(f"limit must be positive, got {limit}")
        images, labels = images[:limit], labels[:limit]
    classes = class_count if class_count is not None else int(labels.max()) + 1
    logger.info(f"Loaded {images.shape[0]} IDX examples of shape {images.shape[1:]} from {images_path}")
    return Dataset(Tensor.wrap(images.astype(np.float64) / 255.0), labels.astype(np.int64), classes)


def encode_idx(array: np.ndarray) -> bytes:
    """Serialise a uint8 array as IDX bytes; used to write fixtures."""
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = magic.to_bytes(4, "big") + b"".join(int(d).to_bytes(4, "big") for d in array.shape)
    return header + array.tobytes()
