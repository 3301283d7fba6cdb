"""
File: dgkd/models/plan.py
Description: Training hyperparameters (TrainHyper) and the DistillationPlan that ties a
             capacity ladder to a guidance mode.
"""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Tuple

from dgkd.models.distill import DistillConfig
from dgkd.models.model_spec import ModelSpec, ladder_labels
from dgkd.utils.errors import ParameterError
from dgkd.utils.seeding import derive_stage_seed

MODES = ("direct_kd", "chain", "dense", "dense_stochastic", "scratch")
LR_SCHEDULES = ("constant", "step")
STEP_MILESTONES = (0.5, 0.75)
STEP_FACTOR = 0.1


@dataclass(frozen=True)
class TrainHyper:
    """SGD hyperparameters shared by every stage of a plan. ``augment`` turns on crop/flip for image data."""

    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    nesterov: bool = True
    epochs: int = 30
    batch_size: int = 64
    lr_schedule: str = "constant"
    trainer_workers: int = 1
    augment: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ParameterError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ParameterError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if self.trainer_workers < 1:
            raise ParameterError(f"trainer_workers must be >= 1, got {self.trainer_workers}")

    def lr_at(self, epoch):
        """
        Learning rate for a 0-based epoch.

        "step" multiplies by 0.1 once half of the epochs and again once three quarters
        of them have completed; a milestone that falls between epochs fires at the next one.
        """
        if self.lr_schedule == "constant":
            return self.lr
        drops = sum(1 for fraction in STEP_MILESTONES if epoch >= math.ceil(fraction * self.epochs))
        return self.lr * STEP_FACTOR ** drops

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DistillationPlan:
    """
    A capacity ladder (teacher first, student last) plus how each stage is guided.

    Modes:
        scratch           every model learns from labels only
        direct_kd         every model below the teacher learns from the teacher alone
        chain             each model learns from the model directly above it
        dense             each model learns from every model above it
        dense_stochastic  dense, with t trainer sources dropped per mini-batch on the
                          student stage (and on assistant stages when stochastic_for_tas)
    """

    name: str
    ladder: Tuple[ModelSpec, ...]
    mode: str = "dense"
    distill: DistillConfig = field(default_factory=DistillConfig)
    stage_distill: Dict[int, DistillConfig] = field(default_factory=dict)
    train: TrainHyper = field(default_factory=TrainHyper)
    seed: int = 0
    stage_seeds: Optional[Tuple[int, ...]] = None
    stochastic_for_tas: bool = False
    cache_trainer_logits: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ladder", tuple(self.ladder))
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.ladder:
            raise ParameterError("a plan needs at least one model")
        if self.stage_seeds is not None and len(self.stage_seeds) != len(self.ladder):
            raise ParameterError(f"{len(self.stage_seeds)} stage seeds for {len(self.ladder)} stages")
        for stage in self.stage_distill:
            if not 1 <= stage < len(self.ladder):
                raise ParameterError(f"stage_distill override for stage {stage}, which has no trainers")
        if self.mode == "dense_stochastic" and len(self.ladder) > 1:
            student = len(self.ladder) - 1
            sources = len(self.trainer_indices(student))
            t = self._base_config(student).drop_trials
            if not 0 <= t <= sources - 1:
                raise ParameterError(
                    f"drop trials t={t} outside [0, {sources - 1}] for a student with {sources} trainer sources"
                )

    @property
    def student_index(self):
        return len(self.ladder) - 1

    @property
    def n_assistants(self):
        return max(len(self.ladder) - 2, 0)

    def trainer_indices(self, stage):
        """Ladder indices of the trainers of a stage (teacher first, then assistants by decreasing capacity)."""
        if stage == 0 or self.mode == "scratch":
            return []
        if self.mode == "direct_kd":
            return [0]
        if self.mode == "chain":
            return [stage - 1]
        return list(range(stage))

    def is_stochastic(self, stage):
        if self.mode != "dense_stochastic" or stage == 0:
            return False
        return stage == self.student_index or self.stochastic_for_tas

    def _base_config(self, stage):
        return self.stage_distill.get(stage, self.distill)

    def stage_config(self, stage):
        """
        DistillConfig of a stage with its source count filled in.

        Per-source lambdas whose length does not match the stage's source count
        fall back to the shared lambda. Non-stochastic stages drop nothing; on a
        stochastic assistant stage t is capped at the stage's sources minus one.
        """
        trainers = self.trainer_indices(stage)
        if not trainers:
            return None
        base = self._base_config(stage)
        sources = len(trainers)
        lambdas = base.source_lambdas
        if lambdas is not None and len(lambdas) != sources:
            lambdas = None
        if self.is_stochastic(stage):
            t = min(base.drop_trials, sources - 1)
        else:
            t = 0
        return replace(base, n_sources=sources, source_lambdas=lambdas, drop_trials=t)

    def stage_seed(self, stage):
        if self.stage_seeds is not None:
            return int(self.stage_seeds[stage])
        return derive_stage_seed(self.seed, stage)

    def labels(self):
        return ladder_labels(self.ladder)

    def path_string(self):
        """Distillation path such as ``T10→A8→A6→A4→S2``."""
        return "→".join(self.labels())

    def to_dict(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "ladder": [spec.to_dict() for spec in self.ladder],
            "distill": self.distill.to_dict(),
            "stage_distill": {str(k): v.to_dict() for k, v in sorted(self.stage_distill.items())},
            "train": self.train.to_dict(),
            "seed": self.seed,
            "stage_seeds": list(self.stage_seeds) if self.stage_seeds is not None else None,
            "stochastic_for_tas": self.stochastic_for_tas,
            "cache_trainer_logits": self.cache_trainer_logits,
        }

    @classmethod
    def from_dict(cls, data):
        def distill_config(raw):
            raw = dict(raw)
            if raw.get("source_lambdas") is not None:
                raw["source_lambdas"] = tuple(raw["source_lambdas"])
            return DistillConfig(**raw)

        stage_seeds = data.get("stage_seeds")
        return cls(
            name=data["name"],
            ladder=tuple(ModelSpec.from_dict(s) for s in data["ladder"]),
            mode=data["mode"],
            distill=distill_config(data["distill"]),
            stage_distill={int(k): distill_config(v) for k, v in data.get("stage_distill", {}).items()},
            train=TrainHyper(**data["train"]),
            seed=int(data["seed"]),
            stage_seeds=tuple(stage_seeds) if stage_seeds is not None else None,
            stochastic_for_tas=bool(data.get("stochastic_for_tas", False)),
            cache_trainer_logits=bool(data.get("cache_trainer_logits", False)),
        )
