"""
File: dgkd/models/report.py
Description: Result entities: error sets, per-stage reports, per-plan reports and the
             comparison rows that the CSV/JSON tables are built from.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from dgkd.utils.errors import StructuralError

STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class ErrorSet:
    """Sorted, unique indices of misclassified test examples of one model."""

    dataset_id: str
    model_id: str
    indices: Tuple[int, ...]
    dataset_size: int

    def __post_init__(self):
        indices = tuple(sorted({int(i) for i in self.indices}))
        object.__setattr__(self, "indices", indices)
        if indices and (indices[0] < 0 or indices[-1] >= self.dataset_size):
            raise StructuralError(
                f"error indices of {self.model_id!r} fall outside a dataset of {self.dataset_size} examples"
            )

    def __len__(self):
        return len(self.indices)

    def as_set(self):
        return set(self.indices)


@dataclass
class StageReport:
    """
    Outcome of training one ladder member.

    ``final_top1`` is always ``(test_size - len(error_indices)) / test_size`` so the
    error count and the accuracy agree exactly.
    """

    stage_index: int
    label: str
    spec: dict
    trainer_indices: List[int] = field(default_factory=list)
    trainer_labels: List[str] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    epoch_top1: List[float] = field(default_factory=list)
    final_top1: float = 0.0
    test_size: int = 0
    error_indices: List[int] = field(default_factory=list)
    batch_losses: List[float] = field(default_factory=list)
    config: Optional[dict] = None
    seed: int = 0
    parameter_count: int = 0

    def __post_init__(self):
        self.error_indices = sorted(int(i) for i in self.error_indices)
        if not 0.0 <= self.final_top1 <= 1.0:
            raise StructuralError(f"stage {self.stage_index}: top-1 {self.final_top1} outside [0, 1]")
        if self.test_size and len(self.error_indices) + round(self.final_top1 * self.test_size) != self.test_size:
            raise StructuralError(
                f"stage {self.stage_index}: {len(self.error_indices)} errors disagree with top-1 "
                f"{self.final_top1} on {self.test_size} test examples"
            )

    def error_set(self, dataset_id):
        return ErrorSet(dataset_id, self.label, tuple(self.error_indices), self.test_size)

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class PlanReport:
    """Every stage of one plan replica, the pairwise overlap matrix, and run provenance."""

    name: str
    mode: str
    seed: int
    path: str
    plan: dict
    dataset_id: str = ""
    stages: List[StageReport] = field(default_factory=list)
    overlap_matrix: List[List[float]] = field(default_factory=list)
    overlap_denominator: str = "lower"
    status: str = STATUS_COMPLETED
    error: Optional[str] = None
    elapsed_seconds: float = 0.0

    @property
    def n_assistants(self):
        return max(len(self.plan.get("ladder", [])) - 2, 0)

    @property
    def student(self):
        return self.stages[-1] if self.stages else None

    def error_sets(self):
        return [stage.error_set(self.dataset_id) for stage in self.stages]

    def to_dict(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "seed": self.seed,
            "path": self.path,
            "plan": self.plan,
            "dataset_id": self.dataset_id,
            "stages": [stage.to_dict() for stage in self.stages],
            "overlap_matrix": self.overlap_matrix,
            "overlap_denominator": self.overlap_denominator,
            "status": self.status,
            "error": self.error,
            "elapsed_seconds": self.elapsed_seconds,
        }

    @classmethod
    def from_dict(cls, data):
        values = dict(data)
        values["stages"] = [StageReport.from_dict(s) for s in data.get("stages", [])]
        return cls(**values)


@dataclass
class ComparisonRow:
    """
    One row of the comparison table.

    Per-seed rows carry ``kind="seed"``; rows averaged over seeds carry
    ``kind="mean"`` with an empty seed and sample standard deviations.
    """

    plan: str
    mode: str
    path: str
    n_assistants: int
    kind: str = "seed"
    seed: Optional[int] = None
    runs: int = 1
    student_top1: float = 0.0
    student_top1_std: Optional[float] = None
    mean_overlap: float = 0.0
    mean_overlap_std: Optional[float] = None

    def to_dict(self):
        return asdict(self)
