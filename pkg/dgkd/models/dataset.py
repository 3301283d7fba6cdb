"""
File: dgkd/models/dataset.py
Description: LabeledDataset, the in-memory container every loader and generator produces.
"""

from dataclasses import dataclass, field

import numpy as np

from dgkd.utils.errors import DatasetError, LabelRangeError

SPLITS = ("train", "test")


@dataclass
class LabeledDataset:
    """
    Inputs, integer labels and a split tag per example.

    Attributes:
        name: Dataset identifier carried into error sets.
        inputs: float64 array (N, features) or (N, channels, height, width).
        labels: int64 array (N,).
        splits: "train" / "test" tag per example.
        num_classes: Number of classes K; every label is below K.
        metadata: Provenance and normalization statistics.
    """

    name: str
    inputs: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = np.asarray(self.splits, dtype="<U5")
        count = self.inputs.shape[0]
        if self.labels.shape != (count,) or self.splits.shape != (count,):
            raise DatasetError(
                f"dataset {self.name!r}: {count} inputs, {self.labels.shape[0]} labels, {self.splits.shape[0]} split tags"
            )
        if self.num_classes < 2:
            raise DatasetError(f"dataset {self.name!r} needs at least 2 classes, got {self.num_classes}")
        if count and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"dataset {self.name!r} has labels outside [0, {self.num_classes})")
        unknown = set(np.unique(self.splits)) - set(SPLITS)
        if unknown:
            raise DatasetError(f"dataset {self.name!r} has unknown split tags {sorted(unknown)}")

    def __len__(self):
        return int(self.inputs.shape[0])

    @property
    def input_shape(self):
        return tuple(self.inputs.shape[1:])

    @property
    def is_image(self):
        return self.inputs.ndim == 4

    def subset(self, split):
        """Examples of one split, in their original order."""
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}")
        mask = self.splits == split
        return LabeledDataset(
            name=self.name,
            inputs=self.inputs[mask],
            labels=self.labels[mask],
            splits=self.splits[mask],
            num_classes=self.num_classes,
            metadata=dict(self.metadata),
        )

    def train(self):
        return self.subset("train")

    def test(self):
        return self.subset("test")

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)
