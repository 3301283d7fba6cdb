"""
File: dgkd/controllers/metrics_controller.py
Description: Accuracy, error sets, error-overlap rates, comparison tables, and the
             CSV/JSON serialization of reports.
"""

import csv
import json
from collections import OrderedDict
from dataclasses import fields
from pathlib import Path

import numpy as np

from dgkd.controllers.zoo_controller import ZooController
from dgkd.models.report import ComparisonRow, ErrorSet, PlanReport
from dgkd.utils.errors import DGKDError, ParameterError, StructuralError

DENOMINATORS = ("lower", "upper", "union")
EVAL_BATCH = 512


def predictions(logits):
    """Row-wise argmax; numpy returns the first maximum, so ties go to the lowest class index."""
    values = logits.data if hasattr(logits, "data") else np.asarray(logits)
    return np.argmax(values, axis=1)


def evaluate_logits(checkpoint, inputs, batch_size=EVAL_BATCH):
    """Inference-only logits of a checkpoint over an input array, in batches."""
    chunks = []
    for start in range(0, inputs.shape[0], batch_size):
        logits, _ = ZooController.forward(checkpoint.params, checkpoint.spec, inputs[start:start + batch_size], record=False)
        chunks.append(logits.data)
    if not chunks:
        return np.zeros((0, checkpoint.spec.num_classes))
    return np.concatenate(chunks)


def _sample_std(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsController:
    """
    Controller for evaluation metrics and report tables.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def top1_accuracy(logits, labels):
        """
        Fraction of rows whose argmax equals the label.

        Args:
            logits (Tensor | numpy.ndarray): Shape (B, K)
            labels (array-like of int): Shape (B,)

        Returns:
            float: Accuracy in [0, 1]; 0.0 for an empty batch
        """
        labels = np.asarray(labels)
        predicted = predictions(logits)
        if predicted.shape != labels.shape:
            raise StructuralError(f"{predicted.shape[0]} logit rows for {labels.shape} labels")
        if labels.size == 0:
            return 0.0
        return int(np.sum(predicted == labels)) / labels.size

    @staticmethod
    def error_set(checkpoint, dataset, batch_size=EVAL_BATCH):
        """
        Misclassified examples of the dataset's test split.

        Indices count positions inside the test split.

        Args:
            checkpoint (Checkpoint): Trained model
            dataset (LabeledDataset): Dataset with a test split

        Returns:
            ErrorSet: Indices where argmax != label
        """
        test = dataset.test()
        predicted = predictions(evaluate_logits(checkpoint, test.inputs, batch_size))
        wrong = np.flatnonzero(predicted != test.labels)
        return ErrorSet(dataset.name, checkpoint.meta.label, tuple(wrong.tolist()), len(test))

    @staticmethod
    def error_overlap_rate(upper, lower, denominator="lower"):
        """
        Share of errors two models have in common.

        ``lower``: |E_upper & E_lower| / |E_lower|, the fraction of the smaller model's
        errors that the larger one also makes. ``upper`` divides by |E_upper| and
        ``union`` by |E_upper | E_lower|. An empty denominator gives 0.

        Args:
            upper (ErrorSet): Errors of the higher-capacity model
            lower (ErrorSet): Errors of the lower-capacity model
            denominator (str): "lower", "upper" or "union"

        Returns:
            float: Rate in [0, 1]

        Raises:
            StructuralError: If the sets come from different datasets
            ParameterError: On an unknown denominator
        """
        if denominator not in DENOMINATORS:
            raise ParameterError(f"overlap denominator must be one of {DENOMINATORS}, got {denominator!r}")
        if upper.dataset_id != lower.dataset_id or upper.dataset_size != lower.dataset_size:
            raise StructuralError(
                f"error sets come from different datasets: {upper.dataset_id!r} and {lower.dataset_id!r}"
            )
        upper_set, lower_set = upper.as_set(), lower.as_set()
        if denominator == "lower":
            base = len(lower_set)
        elif denominator == "upper":
            base = len(upper_set)
        else:
            base = len(upper_set | lower_set)
        if base == 0:
            return 0.0
        return len(upper_set & lower_set) / base

    @staticmethod
    def overlap_matrix(error_sets, denominator="lower"):
        """Square matrix with entry [i][j] = error_overlap_rate(error_sets[i], error_sets[j])."""
        return [
            [MetricsController.error_overlap_rate(upper, lower, denominator) for lower in error_sets]
            for upper in error_sets
        ]

    @staticmethod
    def mean_adjacent_overlap(report):
        """Mean overlap between each ladder member and the one directly below it (0 for a single stage)."""
        matrix = report.overlap_matrix
        pairs = [matrix[k][k + 1] for k in range(len(matrix) - 1)]
        return float(np.mean(pairs)) if pairs else 0.0

    @staticmethod
    def summarize_plans(reports):
        """
        One comparison row per plan replica.

        Args:
            reports (list[PlanReport]): Completed reports

        Returns:
            list[ComparisonRow]: Sorted by plan name, then seed

        Raises:
            ParameterError: If no reports are given
        """
        if not reports:
            raise ParameterError("summarize_plans needs at least one report")
        rows = []
        for report in reports:
            student = report.student
            rows.append(ComparisonRow(
                plan=report.name,
                mode=report.mode,
                path=report.path,
                n_assistants=report.n_assistants,
                kind="seed",
                seed=report.seed,
                runs=1,
                student_top1=student.final_top1 if student else 0.0,
                mean_overlap=MetricsController.mean_adjacent_overlap(report),
            ))
        return sorted(rows, key=lambda row: (row.plan, row.seed))

    @staticmethod
    def aggregate_rows(rows):
        """
        Mean and sample standard deviation over seeds, one row per plan.

        A plan seen on a single seed gets a standard deviation of 0.
        """
        groups = OrderedDict()
        for row in rows:
            if row.kind == "seed":
                groups.setdefault((row.plan, row.mode, row.path, row.n_assistants), []).append(row)

        summary = []
        for (plan, mode, path, n_assistants), members in sorted(groups.items(), key=lambda item: item[0][0]):
            top1 = np.array([row.student_top1 for row in members])
            overlap = np.array([row.mean_overlap for row in members])
            summary.append(ComparisonRow(
                plan=plan,
                mode=mode,
                path=path,
                n_assistants=n_assistants,
                kind="mean",
                seed=None,
                runs=len(members),
                student_top1=float(np.mean(top1)),
                student_top1_std=_sample_std(top1),
                mean_overlap=float(np.mean(overlap)),
                mean_overlap_std=_sample_std(overlap),
            ))
        return summary

    @staticmethod
    def stage_rows(reports):
        """Flat per-stage records (one per stage per replica) for stages.csv."""
        rows = []
        for report in sorted(reports, key=lambda r: (r.name, r.seed)):
            for stage in report.stages:
                rows.append(OrderedDict([
                    ("plan", report.name),
                    ("mode", report.mode),
                    ("seed", report.seed),
                    ("stage", stage.stage_index),
                    ("label", stage.label),
                    ("trainers", "+".join(stage.trainer_labels)),
                    ("parameters", stage.parameter_count),
                    ("final_top1", float(stage.final_top1)),
                    ("test_errors", len(stage.error_indices)),
                    ("final_train_loss", stage.final_loss),
                ]))
        return rows

    @staticmethod
    def write_csv(rows, path):
        """
        Write dicts or ComparisonRows as UTF-8 CSV with a header row.

        Floats are written with repr so they read back exactly.
        """
        path = Path(path)
        dicts = [row.to_dict() if isinstance(row, ComparisonRow) else row for row in rows]
        if dicts:
            header = list(dicts[0])
        else:
            header = [f.name for f in fields(ComparisonRow)]
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in dicts:
                writer.writerow([_format_cell(row[key]) for key in header])
        return path

    @staticmethod
    def write_json(payload, path):
        path = Path(path)
        with path.open("w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
            handle.write("\n")
        return path

    @staticmethod
    def save_plan_report(report, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return MetricsController.write_json(report.to_dict(), path)

    @staticmethod
    def load_plan_report(path):
        """
        Read a plan_report.json file.

        Raises:
            DGKDError: If the file is not a readable plan report
        """
        try:
            with Path(path).open("r", encoding="utf-8") as handle:
                return PlanReport.from_dict(json.load(handle))
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise DGKDError(f"cannot read plan report {path}: {exc}") from exc
