"""
File: dgkd/models/tensor.py
Description: Dense float64 tensors and the tape that records differentiable operations.
             Implements reverse-mode differentiation by replaying the tape backwards.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from dgkd.utils.errors import NumericError, StructuralError


class Tensor:
    """
    Dense array of 64-bit floats with an optional gradient slot.

    Tensors are treated as values: operations return new tensors and never
    write into their inputs. Only ``grad`` is filled in, by ``backward``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad=False, name=None):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            label = f" {name!r}" if name else ""
            raise NumericError(f"tensor{label} holds non-finite values")
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return int(self.data.size)

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        """Return the value of a one-element tensor as a Python float."""
        if self.data.size != 1:
            raise StructuralError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"


@dataclass
class TapeNode:
    """One recorded primitive: its inputs, its output and the vector-Jacobian product."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tape:
    """
    Ordered record of primitive operations.

    Nodes are appended as operations run, so every node's inputs were
    produced by earlier nodes or are leaves. A tape belongs to one thread.
    """

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def append(self, node):
        self.nodes.append(node)
        node.output._tape = self

    @contextmanager
    def recording(self):
        """Make this tape the target for operations on leaf tensors inside the block."""
        stack = _active_tapes()
        stack.append(self)
        try:
            yield self
        finally:
            stack.pop()

    def leaves(self):
        """Return the gradient-tracking tensors that enter the tape without being produced on it."""
        produced = {id(node.output) for node in self.nodes}
        seen = set()
        leaves = []
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in produced and id(tensor) not in seen:
                    seen.add(id(tensor))
                    leaves.append(tensor)
        return leaves


_local = threading.local()


def _active_tapes():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def record(op, inputs, output_data, vjp):
    """
    Wrap an operation result in a Tensor and put it on the right tape.

    The tape is the one carried by any input; failing that, the innermost
    tape opened with ``Tape.recording()`` when some input tracks gradients.
    Operations with no such tape are evaluated but not recorded.

    Args:
        op (str): Primitive name
        inputs (tuple[Tensor, ...]): Operands, in the order vjp returns gradients for
        output_data (numpy.ndarray): Computed result
        vjp (callable): Maps the output gradient to one gradient (or None) per input

    Returns:
        Tensor: The result tensor

    Raises:
        NumericError: If the result holds non-finite values
        StructuralError: If inputs come from two different tapes
    """
    if not np.all(np.isfinite(output_data)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(output_data, dtype=np.float64)
    out.grad = None
    out.name = None
    out._tape = None

    tape = None
    for tensor in inputs:
        if tensor._tape is not None:
            if tape is not None and tensor._tape is not tape:
                raise StructuralError(f"{op} mixes tensors recorded on different tapes")
            tape = tensor._tape
    if tape is None and any(t.requires_grad for t in inputs):
        stack = _active_tapes()
        if stack:
            tape = stack[-1]

    out.requires_grad = tape is not None
    if tape is not None:
        tape.append(TapeNode(op=op, inputs=tuple(inputs), output=out, vjp=vjp))
    return out


def backward(tape, loss):
    """
    Populate gradients of a scalar loss for every gradient-tracking leaf on the tape.

    Args:
        tape (Tape): Tape the loss was recorded on
        loss (Tensor): Scalar (shape ``()``) tensor produced on ``tape``

    Returns:
        dict[Tensor, numpy.ndarray]: Gradient per leaf; leaves off the loss's path get zeros

    Raises:
        StructuralError: If the loss is not a scalar or was not recorded on this tape
    """
    if loss.shape != ():
        raise StructuralError(f"loss must be a scalar, got shape {loss.shape}")
    if loss._tape is not tape:
        raise StructuralError("loss is not reachable from the given tape")

    grads = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.vjp(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad

    result = {}
    for leaf in tape.leaves():
        grad = grads.get(id(leaf))
        leaf.grad = np.zeros_like(leaf.data) if grad is None else np.asarray(grad, dtype=np.float64).reshape(leaf.shape)
        result[leaf] = leaf.grad
    return result
