"""
File: dgkd/controllers/checkpoint_controller.py
Description: Binary checkpoint files.

Layout (little-endian):
    b"DGKD"                         magic
    u32                             format version
    u32 + UTF-8 JSON                {"spec": ..., "meta": ..., "seed": ...}
    u32                             tensor count
    per tensor:
        u32 + UTF-8                 name
        u8                          dtype tag (1 = float64)
        u32                         rank
        u32 * rank                  extents
        f64 * prod(extents)         payload
"""

import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from dgkd.controllers.zoo_controller import layer_shapes
from dgkd.models.checkpoint import Checkpoint, CheckpointMeta
from dgkd.models.model_spec import ModelSpec, ParameterSet
from dgkd.models.tensor import Tensor
from dgkd.utils.errors import CheckpointError, CheckpointVersionError, CorruptCheckpointError

logger = logging.getLogger("dgkd.checkpoints")

MAGIC = b"DGKD"
FORMAT_VERSION = 1
DTYPE_FLOAT64 = 1


class _Reader:
    """Cursor over checkpoint bytes that refuses to read past the end."""

    def __init__(self, raw, path):
        self.raw = raw
        self.offset = 0
        self.path = path

    def take(self, count):
        end = self.offset + count
        if end > len(self.raw):
            raise CorruptCheckpointError(f"{self.path}: truncated at byte {self.offset}, needed {count} more")
        chunk = self.raw[self.offset:end]
        self.offset = end
        return chunk

    def u8(self):
        return self.take(1)[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def text(self):
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpointError(f"{self.path}: invalid UTF-8 at byte {self.offset}") from exc


def _pack_text(value):
    encoded = value.encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded


class CheckpointController:
    """
    Controller for saving and loading trained models.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def save_checkpoint(checkpoint, path):
        """
        Write a checkpoint atomically (temporary file, then rename).

        Args:
            checkpoint (Checkpoint): Spec, parameters and metadata
            path (str | Path): Destination file

        Returns:
            Path: The written file
        """
        path = Path(path)
        header = json.dumps(
            {"spec": checkpoint.spec.to_dict(), "meta": checkpoint.meta.to_dict(), "seed": checkpoint.params.seed},
            sort_keys=True,
        )
        chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_text(header), struct.pack("<I", len(checkpoint.params))]
        for name, tensor in checkpoint.params.items():
            chunks.append(_pack_text(name))
            chunks.append(struct.pack("<BI", DTYPE_FLOAT64, tensor.ndim))
            chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())

        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_bytes(b"".join(chunks))
            os.replace(tmp, path)
        except OSError as exc:
            raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
        logger.debug("checkpoint_saved | path=%s | tensors=%d", path, len(checkpoint.params))
        return path

    @staticmethod
    def load_checkpoint(path):
        """
        Read a checkpoint written by save_checkpoint.

        Nothing is returned unless the whole file parses; parameters come back
        frozen (no gradient tracking).

        Args:
            path (str | Path): Checkpoint file

        Returns:
            Checkpoint: Bit-identical parameters and metadata

        Raises:
            CorruptCheckpointError: Bad magic, truncation, trailing bytes, or tensors that do not fit the spec
            CheckpointVersionError: Unsupported format version
            CheckpointError: The file cannot be read
        """
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

        reader = _Reader(raw, path)
        if reader.take(4) != MAGIC:
            raise CorruptCheckpointError(f"{path}: not a DGKD checkpoint")
        version = reader.u32()
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")

        try:
            header = json.loads(reader.text())
            spec = ModelSpec.from_dict(header["spec"])
            meta = CheckpointMeta.from_dict(header["meta"])
            seed = int(header.get("seed", 0))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from exc

        tensors = {}
        for _ in range(reader.u32()):
            name = reader.text()
            tag = reader.u8()
            if tag != DTYPE_FLOAT64:
                raise CorruptCheckpointError(f"{path}: tensor {name!r} has unknown dtype tag {tag}")
            rank = reader.u32()
            shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
            tensors[name] = Tensor(values, requires_grad=False, name=name)
        if reader.offset != len(raw):
            raise CorruptCheckpointError(f"{path}: {len(raw) - reader.offset} trailing bytes")

        expected = {name: shape for name, shape, _ in layer_shapes(spec)}
        found = {name: tensor.shape for name, tensor in tensors.items()}
        if found != expected:
            raise CorruptCheckpointError(f"{path}: tensors do not match {spec.family}(depth={spec.depth})")

        logger.debug("checkpoint_loaded | path=%s | tensors=%d", path, len(tensors))
        return Checkpoint(spec=spec, params=ParameterSet(tensors, seed), meta=meta)
