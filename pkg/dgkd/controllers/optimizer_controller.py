"""
File: dgkd/controllers/optimizer_controller.py
Description: Parameter updates (SGD with Nesterov momentum) and the central finite-difference
             gradient oracle used to check every backward rule.
"""

from collections.abc import Mapping

import numpy as np

from dgkd.models.model_spec import ParameterSet
from dgkd.models.tensor import Tensor
from dgkd.utils.errors import ParameterError, StructuralError


class OptimizerController:
    """
    Controller for optimization steps and gradient checking.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def sgd_momentum_step(params, grads, state):
        """
        Apply one SGD step with weight decay and (Nesterov) momentum.

        Weight decay is added to the gradient before the momentum update:
            g <- g + wd * p
            v <- mu * v + g
            p <- p - lr * (g + mu * v)      (Nesterov)
            p <- p - lr * v                 (classical, when state.nesterov is False)

        Args:
            params (ParameterSet): Current parameters; left untouched
            grads (Mapping[str, numpy.ndarray] | None): Gradient per parameter name;
                None reads each tensor's ``grad`` slot
            state (OptimizerState): Hyperparameters and velocity buffers, updated in place

        Returns:
            ParameterSet: New parameters (fresh tensors, gradient tracking preserved)

        Raises:
            StructuralError: If a gradient or velocity shape does not match its parameter
        """
        updated = {}
        for name, param in params.items():
            grad = param.grad if grads is None else grads.get(name)
            if grad is None:
                raise StructuralError(f"no gradient for parameter {name!r}")
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != param.shape:
                raise StructuralError(f"gradient for {name!r} has shape {grad.shape}, expected {param.shape}")

            if state.weight_decay:
                grad = grad + state.weight_decay * param.data

            velocity = state.velocity.get(name)
            if velocity is None:
                velocity = np.zeros_like(param.data)
                state.velocity[name] = velocity
            elif velocity.shape != param.shape:
                raise StructuralError(f"velocity for {name!r} has shape {velocity.shape}, expected {param.shape}")

            velocity *= state.momentum
            velocity += grad
            step = grad + state.momentum * velocity if state.nesterov else velocity
            updated[name] = Tensor(param.data - state.lr * step, requires_grad=param.requires_grad, name=name)

        return ParameterSet(updated, params.seed)

    @staticmethod
    def finite_difference_gradient(f, params, eps=1e-5):
        """
        Central-difference gradient of a scalar function of tensors.

        Each coordinate is nudged in place by +/- eps and restored bit-exactly
        afterwards, so ``f`` must read the tensors it is given.

        Args:
            f (callable): Maps ``params`` to a float (or scalar Tensor)
            params (ParameterSet | Mapping[str, Tensor] | Sequence[Tensor]): Points of evaluation
            eps (float): Step size, > 0

        Returns:
            dict[str, numpy.ndarray] | list[numpy.ndarray]: Gradient per tensor, keyed like ``params``

        Raises:
            ParameterError: If eps is not positive
        """
        if not eps > 0:
            raise ParameterError(f"eps must be > 0, got {eps}")

        if isinstance(params, (ParameterSet, Mapping)):
            keyed = list(params.items())
        else:
            keyed = list(enumerate(params))

        def evaluate():
            value = f(params)
            return value.item() if isinstance(value, Tensor) else float(value)

        gradients = []
        for _, tensor in keyed:
            flat = tensor.data.reshape(-1)
            grad = np.zeros(flat.shape, dtype=np.float64)
            for i in range(flat.size):
                original = flat[i]
                try:
                    flat[i] = original + eps
                    upper = evaluate()
                    flat[i] = original - eps
                    lower = evaluate()
                finally:
                    flat[i] = original
                grad[i] = (upper - lower) / (2.0 * eps)
            gradients.append(grad.reshape(tensor.shape))

        if isinstance(params, (ParameterSet, Mapping)):
            return {key: grad for (key, _), grad in zip(keyed, gradients)}
        return gradients
