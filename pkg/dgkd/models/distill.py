"""
File: dgkd/models/distill.py
Description: Distillation hyperparameters (DistillConfig) and per-mini-batch source gates (GateMask).
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

from dgkd.utils.errors import ParameterError

GATE_GRANULARITIES = ("batch", "sample")


@dataclass(frozen=True)
class DistillConfig:
    """
    Temperature, balancing weight and source count for one distillation stage.

    Attributes:
        temperature: Softening temperature T > 0.
        lambda_weight: Balancing weight shared by every source, in [0, 1].
        source_lambdas: Optional per-source weights (teacher first); when set, the
            per-source form sum_i [(1 - l_i) CE + l_i b_i KD_i] is used.
        n_sources: Number of trainer logit sources (teacher + assistants).
        drop_trials: t, sources dropped per gate draw in stochastic mode.
        normalize: Divide the whole dense loss by n_sources.
        gate_granularity: "batch" draws one gate per mini-batch, "sample" one per example.
    """

    temperature: float = 4.0
    lambda_weight: float = 0.5
    source_lambdas: Optional[Tuple[float, ...]] = None
    n_sources: int = 1
    drop_trials: int = 1
    normalize: bool = False
    gate_granularity: str = "batch"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ParameterError(f"lambda must be in [0, 1], got {self.lambda_weight}")
        if self.n_sources < 1:
            raise ParameterError(f"n_sources must be >= 1, got {self.n_sources}")
        if self.drop_trials < 0:
            raise ParameterError(f"drop_trials must be >= 0, got {self.drop_trials}")
        if self.gate_granularity not in GATE_GRANULARITIES:
            raise ParameterError(f"gate_granularity must be one of {GATE_GRANULARITIES}, got {self.gate_granularity!r}")
        if self.source_lambdas is not None:
            lambdas = tuple(float(v) for v in self.source_lambdas)
            object.__setattr__(self, "source_lambdas", lambdas)
            if len(lambdas) != self.n_sources:
                raise ParameterError(f"{len(lambdas)} source lambdas given for {self.n_sources} sources")
            if any(not 0.0 <= v <= 1.0 for v in lambdas):
                raise ParameterError(f"source lambdas must lie in [0, 1], got {lambdas}")

    def for_sources(self, n_sources):
        """Copy of this config for a stage with ``n_sources`` trainers; per-source lambdas must already fit."""
        return replace(self, n_sources=n_sources)

    def to_dict(self):
        data = asdict(self)
        if self.source_lambdas is not None:
            data["source_lambdas"] = list(self.source_lambdas)
        return data


@dataclass(frozen=True)
class GateMask:
    """Activity bit per trainer source for one draw; ``drop_trials`` zeros, at least one one."""

    bits: Tuple[int, ...]
    drop_trials: int = field(default=0)

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        object.__setattr__(self, "bits", bits)
        if any(b not in (0, 1) for b in bits):
            raise ParameterError(f"gate bits must be 0 or 1, got {bits}")
        if 1 not in bits:
            raise ParameterError("at least one gate must stay active")
        if bits.count(0) != self.drop_trials:
            raise ParameterError(f"gate mask {bits} does not drop exactly {self.drop_trials} sources")

    @classmethod
    def all_on(cls, n_sources):
        return cls(bits=(1,) * n_sources, drop_trials=0)

    def __len__(self):
        return len(self.bits)

    @property
    def active(self):
        """Indices of the active sources."""
        return [i for i, b in enumerate(self.bits) if b]
