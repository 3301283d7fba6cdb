"""
File: dgkd/models/checkpoint.py
Description: Checkpoint entity: a trained model plus the metadata needed to resume or audit it.
"""

from dataclasses import dataclass, field

from dgkd.models.model_spec import ModelSpec, ParameterSet


@dataclass
class CheckpointMeta:
    """Training metadata stored next to the parameters."""

    stage_index: int = 0
    label: str = ""
    epochs_completed: int = 0
    rng_state: dict = field(default_factory=dict)
    final_metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "stage_index": self.stage_index,
            "label": self.label,
            "epochs_completed": self.epochs_completed,
            "rng_state": self.rng_state,
            "final_metrics": self.final_metrics,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            stage_index=int(data.get("stage_index", 0)),
            label=data.get("label", ""),
            epochs_completed=int(data.get("epochs_completed", 0)),
            rng_state=data.get("rng_state", {}),
            final_metrics=data.get("final_metrics", {}),
        )


@dataclass
class Checkpoint:
    """A ModelSpec, its trained ParameterSet, and training metadata."""

    spec: ModelSpec
    params: ParameterSet
    meta: CheckpointMeta = field(default_factory=CheckpointMeta)

    def fingerprint(self):
        return self.params.fingerprint()

    def __repr__(self):
        return f"<Checkpoint {self.meta.label or self.spec.family} stage={self.meta.stage_index}>"
