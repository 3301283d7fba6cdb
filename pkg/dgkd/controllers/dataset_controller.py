"""
File: dgkd/controllers/dataset_controller.py
Description: Dataset generation, loading and preprocessing: synthetic spiral and blob
             datasets, IDX (MNIST-style) and CIFAR binary readers, per-channel
             normalization, and crop/flip augmentation for image batches.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from dgkd.models.dataset import LabeledDataset
from dgkd.utils.errors import (
    BadMagicError,
    CountMismatchError,
    DatasetError,
    LabelRangeError,
    RecordSizeError,
    TruncatedFileError,
)

logger = logging.getLogger("dgkd.datasets")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CIFAR_IMAGE_BYTES = 3 * 32 * 32
AUGMENT_PADDING = 4

SYNTHETIC_DEFAULTS = {
    "spiral": {"classes": 10, "train_per_class": 500, "test_per_class": 200, "noise": 0.1, "turns": 1.0},
    "blobs": {"classes": 2, "train_per_class": 200, "test_per_class": 100, "noise": 0.1, "spread": 2.0},
}


def _split_tags(per_class_total, train_per_class, rng):
    """Random train/test assignment inside one class block."""
    tags = np.array(["train"] * train_per_class + ["test"] * (per_class_total - train_per_class), dtype="<U5")
    return tags[rng.permutation(per_class_total)]


class DatasetController:
    """
    Controller for datasets.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def generate_synthetic_dataset(kind, params=None, seed=0):
        """
        Generate a 2-D synthetic classification dataset.

        ``spiral``: K interleaved arms, arm j at angle 2*pi*(turns*r + j/K) plus
        Gaussian angle noise, radius r evenly spaced in (0, 1].
        ``blobs``: K Gaussian clouds around centroids evenly spaced on a circle
        of radius ``spread``; with noise 0 every point sits on its centroid.

        Args:
            kind (str): "spiral" or "blobs"
            params (dict, optional): classes, train_per_class, test_per_class, noise,
                and turns (spiral) or spread (blobs)
            seed (int): Generator seed

        Returns:
            LabeledDataset: Class-major examples with train/test tags

        Raises:
            DatasetError: On an unknown kind or invalid parameters
        """
        if kind not in SYNTHETIC_DEFAULTS:
            raise DatasetError(f"unknown synthetic dataset kind {kind!r}")
        resolved = dict(SYNTHETIC_DEFAULTS[kind])
        unknown = set(params or {}) - set(resolved)
        if unknown:
            raise DatasetError(f"unknown {kind} parameters: {sorted(unknown)}")
        resolved.update(params or {})

        classes = int(resolved["classes"])
        train_per_class = int(resolved["train_per_class"])
        test_per_class = int(resolved["test_per_class"])
        noise = float(resolved["noise"])
        if classes < 2:
            raise DatasetError(f"classes must be >= 2, got {classes}")
        if train_per_class < 1 or test_per_class < 0:
            raise DatasetError("train_per_class must be >= 1 and test_per_class >= 0")
        if noise < 0:
            raise DatasetError(f"noise must be >= 0, got {noise}")

        rng = np.random.default_rng(int(seed))
        per_class = train_per_class + test_per_class
        inputs, labels, splits = [], [], []
        for label in range(classes):
            if kind == "spiral":
                radius = np.linspace(1.0 / per_class, 1.0, per_class)
                angle = 2 * np.pi * (float(resolved["turns"]) * radius + label / classes)
                angle = angle + rng.standard_normal(per_class) * noise
                points = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
            else:
                theta = 2 * np.pi * label / classes
                centroid = float(resolved["spread"]) * np.array([np.cos(theta), np.sin(theta)])
                points = centroid + rng.standard_normal((per_class, 2)) * noise
            inputs.append(points)
            labels.append(np.full(per_class, label))
            splits.append(_split_tags(per_class, train_per_class, rng))

        dataset = LabeledDataset(
            name=f"{kind}-{classes}",
            inputs=np.concatenate(inputs),
            labels=np.concatenate(labels),
            splits=np.concatenate(splits),
            num_classes=classes,
            metadata={"source": "synthetic", "kind": kind, "params": resolved, "seed": int(seed)},
        )
        logger.info("dataset_generated | kind=%s | examples=%d | classes=%d", kind, len(dataset), classes)
        return dataset

    @staticmethod
    def load_idx_dataset(images_path, labels_path, num_classes=None, split="train", name=None):
        """
        Read an IDX image file (magic 0x00000803) and label file (magic 0x00000801).

        Args:
            images_path (str | Path): Big-endian IDX rank-3 u8 images
            labels_path (str | Path): Big-endian IDX rank-1 u8 labels
            num_classes (int, optional): K; defaults to max(label) + 1 (at least 2)
            split (str): Split tag given to every example
            name (str, optional): Dataset identifier

        Returns:
            LabeledDataset: Inputs (N, 1, rows, cols) scaled to [0, 1]

        Raises:
            BadMagicError, TruncatedFileError, CountMismatchError, LabelRangeError
        """
        images = _read_idx(images_path, IDX_IMAGES_MAGIC)
        labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
        if images.shape[0] != labels.shape[0]:
            raise CountMismatchError(
                f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
            )
        labels = labels.astype(np.int64)
        if num_classes is None:
            num_classes = max(int(labels.max()) + 1 if labels.size else 2, 2)
        if labels.size and labels.max() >= num_classes:
            raise LabelRangeError(f"{labels_path}: label {int(labels.max())} >= num_classes {num_classes}")
        logger.info("idx_loaded | images=%s | count=%d", images_path, labels.shape[0])
        return LabeledDataset(
            name=name or Path(images_path).stem,
            inputs=images[:, None, :, :].astype(np.float64) / 255.0,
            labels=labels,
            splits=np.full(labels.shape[0], split),
            num_classes=int(num_classes),
            metadata={"source": "idx", "images": str(images_path), "labels": str(labels_path)},
        )

    @staticmethod
    def load_cifar_binary(paths, num_classes, split="train", name=None):
        """
        Read CIFAR binary batches.

        A record is one label byte (two for the 100-class layout, coarse then
        fine; the fine label is used) followed by 3072 channel-major pixel bytes.

        Args:
            paths (str | Path | list): One or more batch files
            num_classes (int): 10 or 100 (or any K; 100 selects the two-byte layout)
            split (str): Split tag given to every example
            name (str, optional): Dataset identifier

        Returns:
            LabeledDataset: Inputs (N, 3, 32, 32) scaled to [0, 1]

        Raises:
            RecordSizeError: If a file length is not a multiple of the record size
            LabelRangeError: If a label byte is >= num_classes
        """
        if isinstance(paths, (str, Path)):
            paths = [paths]
        label_bytes = 2 if num_classes == 100 else 1
        record_size = label_bytes + CIFAR_IMAGE_BYTES

        all_pixels, all_labels = [], []
        for path in paths:
            raw = Path(path).read_bytes()
            if len(raw) % record_size:
                raise RecordSizeError(f"{path}: {len(raw)} bytes is not a multiple of the {record_size}-byte record")
            records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record_size)
            labels = records[:, label_bytes - 1].astype(np.int64)
            if labels.size and labels.max() >= num_classes:
                raise LabelRangeError(f"{path}: label {int(labels.max())} >= num_classes {num_classes}")
            all_labels.append(labels)
            all_pixels.append(records[:, label_bytes:].reshape(-1, 3, 32, 32))

        labels = np.concatenate(all_labels) if all_labels else np.zeros(0, dtype=np.int64)
        pixels = np.concatenate(all_pixels) if all_pixels else np.zeros((0, 3, 32, 32), dtype=np.uint8)
        logger.info("cifar_loaded | files=%d | count=%d", len(paths), labels.shape[0])
        return LabeledDataset(
            name=name or f"cifar{num_classes}",
            inputs=pixels.astype(np.float64) / 255.0,
            labels=labels,
            splits=np.full(labels.shape[0], split),
            num_classes=int(num_classes),
            metadata={"source": "cifar_binary", "files": [str(p) for p in paths]},
        )

    @staticmethod
    def combine_splits(train, test):
        """Join a train-tagged and a test-tagged dataset into one."""
        if train.input_shape != test.input_shape or train.num_classes != test.num_classes:
            raise DatasetError("train and test parts disagree on input shape or class count")
        return LabeledDataset(
            name=train.name,
            inputs=np.concatenate([train.inputs, test.inputs]),
            labels=np.concatenate([train.labels, test.labels]),
            splits=np.concatenate([np.full(len(train), "train"), np.full(len(test), "test")]),
            num_classes=train.num_classes,
            metadata={"train": train.metadata, "test": test.metadata},
        )

    @staticmethod
    def normalize_dataset(dataset):
        """
        Standardize each channel (images) or feature (vectors) with train-split statistics.

        Returns:
            LabeledDataset: New dataset; mean and std are recorded under metadata["normalization"]
        """
        train_inputs = dataset.inputs[dataset.splits == "train"]
        axes = (0, 2, 3) if dataset.is_image else (0,)
        mean = train_inputs.mean(axis=axes)
        std = train_inputs.std(axis=axes)
        std = np.where(std > 0, std, 1.0)
        shape = (1, -1, 1, 1) if dataset.is_image else (1, -1)
        metadata = dict(dataset.metadata)
        metadata["normalization"] = {"mean": mean.tolist(), "std": std.tolist()}
        return LabeledDataset(
            name=dataset.name,
            inputs=(dataset.inputs - mean.reshape(shape)) / std.reshape(shape),
            labels=dataset.labels,
            splits=dataset.splits,
            num_classes=dataset.num_classes,
            metadata=metadata,
        )

    @staticmethod
    def augment_batch(inputs, rng):
        """
        Random crop after 4-pixel zero padding, then a horizontal flip with probability 1/2.

        Args:
            inputs (numpy.ndarray): Image batch (B, C, H, W)
            rng (numpy.random.Generator): Augmentation stream

        Returns:
            numpy.ndarray: Augmented copy, same shape
        """
        batch, _, height, width = inputs.shape
        pad = AUGMENT_PADDING
        padded = np.pad(inputs, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        offsets = rng.integers(0, 2 * pad + 1, size=(batch, 2))
        flips = rng.random(batch) < 0.5
        out = np.empty_like(inputs)
        for i in range(batch):
            dy, dx = offsets[i]
            crop = padded[i, :, dy:dy + height, dx:dx + width]
            out[i] = crop[:, :, ::-1] if flips[i] else crop
        return out


def _read_idx(path, expected_magic):
    """Parse one big-endian IDX file of unsigned bytes, reading nothing past its declared extent."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    rank = magic & 0xFF
    header_size = 4 + 4 * rank
    if len(raw) < header_size:
        raise TruncatedFileError(f"{path}: header declares rank {rank} but the file ends after {len(raw)} bytes")
    dims = struct.unpack(f">{rank}I", raw[4:header_size])
    payload = int(np.prod(dims))
    available = len(raw) - header_size
    if available < payload:
        raise TruncatedFileError(f"{path}: header declares {payload} data bytes, file holds {available}")
    if available > payload:
        raise DatasetError(f"{path}: {available - payload} trailing bytes after the declared data")
    return np.frombuffer(raw, dtype=np.uint8, count=payload, offset=header_size).reshape(dims)
