# Domain entities, re-exported for convenience

from .tensor import Tensor, Tape, backward
from .model_spec import ModelSpec, ParameterSet
from .optimizer import OptimizerState
from .distill import DistillConfig, GateMask
from .plan import DistillationPlan, TrainHyper
from .checkpoint import Checkpoint, CheckpointMeta
from .report import ErrorSet, StageReport, PlanReport, ComparisonRow
from .dataset import LabeledDataset
from .experiment import ExperimentConfig, DatasetConfig, AnalysisConfig
