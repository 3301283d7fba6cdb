"""
File: dgkd/controllers/zoo_controller.py
Description: Model zoo for the distillation ladders: deterministic construction, parameter
             counting, capacity ordering, forward evaluation, and ladder expansion.
"""

import numpy as np

from dgkd.models import ops
from dgkd.models.model_spec import CNN_TARGET_SPATIAL, ModelSpec, ParameterSet
from dgkd.models.tensor import Tape, Tensor
from dgkd.utils.errors import LadderError, StructuralError


def _cnn_geometry(spec):
    """
    Walk the plain_cnn layer stack.

    Returns:
        tuple: (list of booleans, one per conv layer, True when a pool follows it;
                number of trailing pools; classifier input features)
    """
    channels, height, width = spec.input_shape
    pools_after = []
    for index, out_channels in enumerate(spec.layer_widths()):
        channels = out_channels
        pool = (index + 1) % 2 == 0 and height >= 2 and width >= 2
        if pool:
            height, width = height // 2, width // 2
        pools_after.append(pool)
    trailing = 0
    while height // 2 >= CNN_TARGET_SPATIAL and width // 2 >= CNN_TARGET_SPATIAL:
        height, width = height // 2, width // 2
        trailing += 1
    return pools_after, trailing, channels * height * width


def layer_shapes(spec):
    """
    Enumerate (name, shape, fan_in) for every trainable tensor of a spec, in layer order.
    """
    shapes = []
    if spec.family == "mlp":
        dims = [spec.input_shape[0], *spec.layer_widths(), spec.num_classes]
        for i in range(spec.depth):
            shapes.append((f"fc{i}.weight", (dims[i], dims[i + 1]), dims[i]))
            shapes.append((f"fc{i}.bias", (dims[i + 1],), dims[i]))
        return shapes

    in_channels = spec.input_shape[0]
    for i, out_channels in enumerate(spec.layer_widths()):
        fan_in = in_channels * 9
        shapes.append((f"conv{i}.weight", (out_channels, in_channels, 3, 3), fan_in))
        shapes.append((f"conv{i}.bias", (out_channels,), fan_in))
        in_channels = out_channels
    _, _, features = _cnn_geometry(spec)
    shapes.append(("fc.weight", (features, spec.num_classes), features))
    shapes.append(("fc.bias", (spec.num_classes,), features))
    return shapes


class ZooController:
    """
    Controller for model construction and evaluation.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def build_model(spec, seed):
        """
        Build He-uniform initialized parameters with zero biases.

        Same (spec, seed) always yields bit-identical parameters.

        Args:
            spec (ModelSpec): Model to build
            seed (int): 64-bit seed

        Returns:
            ParameterSet: Fresh parameters with gradient tracking on
        """
        if not isinstance(spec, ModelSpec):
            raise StructuralError(f"build_model needs a ModelSpec, got {type(spec).__name__}")
        rng = np.random.default_rng(int(seed))
        tensors = {}
        for name, shape, fan_in in layer_shapes(spec):
            if name.endswith(".bias"):
                values = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / fan_in)
                values = rng.uniform(-limit, limit, size=shape)
            tensors[name] = Tensor(values, requires_grad=True, name=name)
        return ParameterSet(tensors, int(seed))

    @staticmethod
    def parameter_count(spec):
        """Exact number of trainable scalars of a spec."""
        return int(sum(int(np.prod(shape)) for _, shape, _ in layer_shapes(spec)))

    @staticmethod
    def capacity_order(specs):
        """
        Order specs by strictly decreasing parameter count (teacher first, student last).

        Args:
            specs (list[ModelSpec]): Candidate ladder members

        Returns:
            list[ModelSpec]: Descending ladder

        Raises:
            LadderError: On an empty list or two members with equal parameter count
        """
        specs = list(specs)
        if not specs:
            raise LadderError("a ladder needs at least one model")
        counted = sorted(
            ((ZooController.parameter_count(s), i, s) for i, s in enumerate(specs)),
            key=lambda item: (-item[0], item[1]),
        )
        for (count_a, _, spec_a), (count_b, _, spec_b) in zip(counted, counted[1:]):
            if count_a == count_b:
                raise LadderError(
                    f"ambiguous ladder ranks: {describe_spec(spec_a)} and {describe_spec(spec_b)} "
                    f"both have {count_a} parameters"
                )
        return [s for _, _, s in counted]

    @staticmethod
    def check_ladder(specs):
        """
        Require a ladder to be given already in strictly decreasing capacity order.

        Raises:
            LadderError: Naming the first adjacent pair that is out of order
        """
        specs = list(specs)
        ZooController.capacity_order(specs)
        for upper, lower in zip(specs, specs[1:]):
            upper_count = ZooController.parameter_count(upper)
            lower_count = ZooController.parameter_count(lower)
            if upper_count <= lower_count:
                raise LadderError(
                    f"ladder out of order: {describe_spec(upper)} ({upper_count} parameters) "
                    f"precedes {describe_spec(lower)} ({lower_count} parameters)"
                )
        return specs

    @staticmethod
    def forward(params, spec, batch, record=True):
        """
        Evaluate a model on a batch.

        Args:
            params (ParameterSet): Parameters built for ``spec``
            spec (ModelSpec): Architecture
            batch (Tensor | numpy.ndarray): Inputs of shape (B, *spec.input_shape)
            record (bool): Record primitives on a new tape for backward; False evaluates only

        Returns:
            tuple[Tensor, Tape]: Logits of shape (B, num_classes) and the tape (empty when not recording)

        Raises:
            StructuralError: If the batch does not match the input signature
        """
        batch = ops.as_tensor(batch)
        if batch.ndim != len(spec.input_shape) + 1 or batch.shape[1:] != spec.input_shape:
            raise StructuralError(f"batch shape {batch.shape} does not match input signature {spec.input_shape}")
        expected = {name: shape for name, shape, _ in layer_shapes(spec)}
        if params.shapes() != expected:
            raise StructuralError(f"parameters do not match {describe_spec(spec)}")

        tape = Tape()
        if record:
            with tape.recording():
                logits = _run_layers(params, spec, batch)
        else:
            logits = _run_layers(params, spec, batch)
        return logits, tape

    @staticmethod
    def expand_ladder(ladder):
        """
        Insert every intermediate depth between consecutive ladder members.

        An inserted model is its upper neighbour with trailing layers removed,
        so 10, 8, 6, 4, 2 becomes 10, 9, 8, 7, 6, 5, 4, 3, 2.

        Raises:
            LadderError: If neighbours differ in family, classes or input, or the result is not descending
        """
        ladder = list(ladder)
        if not ladder:
            raise LadderError("a ladder needs at least one model")
        expanded = [ladder[0]]
        for upper, lower in zip(ladder, ladder[1:]):
            if (upper.family, upper.num_classes, upper.input_shape) != (lower.family, lower.num_classes, lower.input_shape):
                raise LadderError(f"cannot interpolate between {describe_spec(upper)} and {describe_spec(lower)}")
            for depth in range(upper.depth - 1, lower.depth, -1):
                expanded.append(upper.with_depth(depth))
            expanded.append(lower)
        return ZooController.check_ladder(expanded)


def _run_layers(params, spec, x):
    if spec.family == "mlp":
        for i in range(spec.depth):
            x = ops.affine(x, params[f"fc{i}.weight"], params[f"fc{i}.bias"])
            if i < spec.depth - 1:
                x = ops.relu(x)
        return x

    pools_after, trailing, _ = _cnn_geometry(spec)
    for i, pool in enumerate(pools_after):
        x = ops.relu(ops.conv2d(x, params[f"conv{i}.weight"], params[f"conv{i}.bias"]))
        if pool:
            x = ops.max_pool2d(x)
    for _ in range(trailing):
        x = ops.max_pool2d(x)
    return ops.affine(ops.flatten(x), params["fc.weight"], params["fc.bias"])


def describe_spec(spec):
    """Short human-readable identifier, e.g. ``plain_cnn(depth=8)``."""
    return f"{spec.family}(depth={spec.depth})"

