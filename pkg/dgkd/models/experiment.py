"""
File: dgkd/models/experiment.py
Description: Resolved experiment configuration: dataset source, plans, seeds and analysis options.
             ``to_dict`` echoes the configuration in the same JSON schema it was parsed from.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from dgkd.models.plan import DistillationPlan

SCHEMA_VERSION = 1
DATASET_KINDS = ("synthetic_spiral", "synthetic_blobs", "idx", "cifar_binary")
DEFAULT_COMPARE_MODES = ("direct_kd", "chain", "dense", "dense_stochastic")


@dataclass(frozen=True)
class DatasetConfig:
    """Where examples come from and how they are preprocessed."""

    kind: str = "synthetic_spiral"
    seed: int = 0
    params: Dict[str, float] = field(default_factory=dict)
    augment: bool = False
    normalize: bool = False
    num_classes: int = 10
    input_shape: Tuple[int, ...] = (2,)
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_files: Tuple[str, ...] = ()
    test_files: Tuple[str, ...] = ()

    @property
    def is_synthetic(self):
        return self.kind.startswith("synthetic_")

    def to_dict(self):
        data = {
            "kind": self.kind,
            "seed": self.seed,
            "augment": self.augment,
            "normalize": self.normalize,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
        }
        if self.is_synthetic:
            data["params"] = dict(self.params)
        elif self.kind == "idx":
            data.update(images=self.images, labels=self.labels,
                        test_images=self.test_images, test_labels=self.test_labels)
        else:
            data.update(train_files=list(self.train_files), test_files=list(self.test_files))
        return data


@dataclass(frozen=True)
class AnalysisConfig:
    overlap_denominator: str = "lower"

    def to_dict(self):
        return {"overlap_denominator": self.overlap_denominator}


@dataclass
class ExperimentConfig:
    """
    Everything a CLI command needs to run and report an experiment.

    Attributes:
        dataset: Dataset source and preprocessing.
        plans: Validated plans (seed 0; each replica gets its seed from ``seeds``).
        seeds: Master seeds, one full plan replica each.
        output_dir: Default artifact directory, or None to use the environment default.
        analysis: Report options.
        expand: Plan name -> whether its ladder was expanded with every intermediate depth.
        sweep_drop_trials: t values for sweep-t, or None for every admissible t.
        compare_modes: Modes for compare-modes.
        version: Schema version.
    """

    dataset: DatasetConfig
    plans: Tuple[DistillationPlan, ...]
    seeds: Tuple[int, ...] = (0,)
    output_dir: Optional[str] = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    expand: Dict[str, bool] = field(default_factory=dict)
    sweep_drop_trials: Optional[Tuple[int, ...]] = None
    compare_modes: Tuple[str, ...] = DEFAULT_COMPARE_MODES
    version: int = SCHEMA_VERSION

    def plan(self, name=None):
        """Plan by name, or the first plan when no name is given."""
        if name is None:
            return self.plans[0]
        for plan in self.plans:
            if plan.name == name:
                return plan
        raise KeyError(name)

    def to_dict(self):
        return {
            "version": self.version,
            "dataset": self.dataset.to_dict(),
            "plans": [_plan_section(plan, self.expand.get(plan.name, False)) for plan in self.plans],
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "analysis": self.analysis.to_dict(),
            "sweep": {"drop_trials": list(self.sweep_drop_trials) if self.sweep_drop_trials is not None else None},
            "compare": {"modes": list(self.compare_modes)},
        }


def _distill_section(cfg):
    data = cfg.to_dict()
    data.pop("n_sources")
    return data


def _plan_section(plan, expand):
    train = plan.train.to_dict()
    train.pop("augment")
    return {
        "name": plan.name,
        "mode": plan.mode,
        "expand": expand,
        "ladder": [{"family": s.family, "depth": s.depth, "widths": list(s.widths)} for s in plan.ladder],
        "distill": _distill_section(plan.distill),
        "stage_distill": {str(k): _distill_section(v) for k, v in sorted(plan.stage_distill.items())},
        "train": train,
        "stochastic_for_tas": plan.stochastic_for_tas,
        "cache_trainer_logits": plan.cache_trainer_logits,
    }
