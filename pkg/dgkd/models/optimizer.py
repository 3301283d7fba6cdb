"""
File: dgkd/models/optimizer.py
Description: Optimizer state for SGD with Nesterov momentum and weight decay.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from dgkd.utils.errors import ParameterError


@dataclass
class OptimizerState:
    """
    Hyperparameters plus one velocity buffer per parameter name.

    Buffers are created lazily at the parameter's shape on the first step.
    """

    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    nesterov: bool = True
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0:
            raise ParameterError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")
