"""
File: dgkd/models/ops.py
Description: Differentiable primitives recorded on a Tape.
             Forward layers: affine, 3x3 "same" convolution, 2x2 max-pool, ReLU, flatten.
             Loss building blocks: temperature softmax / log-softmax, sums and scalings.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dgkd.models.tensor import Tensor, record
from dgkd.utils.errors import ParameterError, StructuralError


def as_tensor(value):
    """Return ``value`` unchanged if it is a Tensor, otherwise wrap it as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _check_temperature(temperature):
    if not temperature > 0 or not np.isfinite(temperature):
        raise ParameterError(f"temperature must be a positive finite number, got {temperature}")
    return float(temperature)


# ---------------------------------------------------------------------------
# Plain array helpers (no tape); used for frozen trainer outputs.
# ---------------------------------------------------------------------------

def log_softmax_array(z, temperature=1.0):
    """Row-wise log(softmax(z / T)) on a numpy array, log-sum-exp stabilized."""
    scaled = np.asarray(z, dtype=np.float64) / _check_temperature(temperature)
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_array(z, temperature=1.0):
    """Row-wise softmax(z / T) on a numpy array with max-subtraction."""
    scaled = np.asarray(z, dtype=np.float64) / _check_temperature(temperature)
    shifted = np.exp(scaled - scaled.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------

def affine(x, weight, bias=None):
    """
    Compute ``x @ weight + bias``.

    Args:
        x (Tensor): Batch of shape (B, in)
        weight (Tensor): Shape (in, out)
        bias (Tensor, optional): Shape (out,)

    Returns:
        Tensor: Shape (B, out)
    """
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise StructuralError(f"affine cannot combine input {x.shape} with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise StructuralError(f"affine bias {bias.shape} does not match weight {weight.shape}")

    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def vjp(g):
        grads = (g @ weight.data.T, x.data.T @ g)
        if bias is not None:
            grads = grads + (g.sum(axis=0),)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("affine", inputs, out, vjp)


def conv2d(x, weight, bias=None):
    """
    3x3 convolution, stride 1, zero padding so the output keeps the input's height and width.

    Args:
        x (Tensor): Shape (B, C_in, H, W)
        weight (Tensor): Shape (C_out, C_in, 3, 3)
        bias (Tensor, optional): Shape (C_out,)

    Returns:
        Tensor: Shape (B, C_out, H, W)
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (3, 3) or weight.shape[1] != x.shape[1]:
        raise StructuralError(f"conv2d cannot combine input {x.shape} with kernel {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise StructuralError(f"conv2d bias {bias.shape} does not match kernel {weight.shape}")

    height, width = x.shape[2], x.shape[3]
    padded = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", windows, weight.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g):
        grad_weight = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True)
        grad_padded = np.zeros_like(padded)
        for i in range(3):
            for j in range(3):
                grad_padded[:, :, i:i + height, j:j + width] += np.einsum(
                    "bohw,oc->bchw", g, weight.data[:, :, i, j], optimize=True
                )
        grads = (grad_padded[:, :, 1:height + 1, 1:width + 1], grad_weight)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out, vjp)


def max_pool2d(x):
    """
    2x2 max-pool with stride 2. An odd trailing row or column is dropped.
    Ties go to the first element of the window in row-major order.
    """
    if x.ndim != 4:
        raise StructuralError(f"max_pool2d expects (B, C, H, W), got {x.shape}")
    batch, channels, height, width = x.shape
    out_h, out_w = height // 2, width // 2
    if out_h == 0 or out_w == 0:
        raise StructuralError(f"max_pool2d cannot pool spatial extent {height}x{width}")

    cropped = x.data[:, :, :2 * out_h, :2 * out_w]
    blocks = (
        cropped.reshape(batch, channels, out_h, 2, out_w, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, out_h, out_w, 4)
    )
    winners = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, winners, axis=-1)[..., 0]

    def vjp(g):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, winners, g[..., None], axis=-1)
        grad_cropped = (
            grad_blocks.reshape(batch, channels, out_h, out_w, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, 2 * out_h, 2 * out_w)
        )
        grad = np.zeros_like(x.data)
        grad[:, :, :2 * out_h, :2 * out_w] = grad_cropped
        return (grad,)

    return record("max_pool2d", (x,), out, vjp)


def relu(x):
    mask = x.data > 0
    return record("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def flatten(x):
    """Collapse every axis after the batch axis."""
    shape = x.shape
    return record("flatten", (x,), x.data.reshape(shape[0], -1), lambda g: (g.reshape(shape),))


# ---------------------------------------------------------------------------
# Probability primitives
# ---------------------------------------------------------------------------

def softmax_with_temperature(z, temperature):
    """
    Row-wise softmax(z / T), stabilized by subtracting the row maximum.

    Args:
        z (Tensor | array-like): Logits of shape (batch, classes)
        temperature (float): Softening temperature T > 0

    Returns:
        Tensor: Rows are probability vectors

    Raises:
        ParameterError: If T is not positive
        NumericError: If z holds non-finite values
    """
    z = as_tensor(z)
    temperature = _check_temperature(temperature)
    probs = softmax_array(z.data, temperature)

    def vjp(g):
        inner = (g * probs).sum(axis=-1, keepdims=True)
        return (probs * (g - inner) / temperature,)

    return record("softmax", (z,), probs, vjp)


def log_softmax_with_temperature(z, temperature):
    """Row-wise log(softmax(z / T)) in log-sum-exp form."""
    z = as_tensor(z)
    temperature = _check_temperature(temperature)
    log_probs = log_softmax_array(z.data, temperature)

    def vjp(g):
        probs = np.exp(log_probs)
        return ((g - probs * g.sum(axis=-1, keepdims=True)) / temperature,)

    return record("log_softmax", (z,), log_probs, vjp)


# ---------------------------------------------------------------------------
# Reductions and arithmetic used to assemble losses
# ---------------------------------------------------------------------------

def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise StructuralError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def add(a, b):
    _same_shape("add", a, b)
    return record("add", (a, b), a.data + b.data, lambda g: (g, g))


def mul(a, b):
    _same_shape("mul", a, b)
    return record("mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def scale(x, factor):
    factor = float(factor)
    return record("scale", (x,), x.data * factor, lambda g: (g * factor,))


def add_const(x, constant):
    return record("add_const", (x,), x.data + float(constant), lambda g: (g,))


def sum_all(x):
    shape = x.shape
    return record("sum", (x,), np.asarray(x.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))


def weighted_sum(x, weights):
    """
    Scalar ``sum(x * weights)`` with ``weights`` a constant array of x's shape.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != x.shape:
        raise StructuralError(f"weighted_sum weights {weights.shape} do not match {x.shape}")
    return record("weighted_sum", (x,), np.asarray((x.data * weights).sum()), lambda g: (g * weights,))
