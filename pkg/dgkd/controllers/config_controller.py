"""
File: dgkd/controllers/config_controller.py
Description: Experiment configuration: JSON parsing, schema validation through the WTForms
             schema, default resolution, the resolved-config echo, dataset loading, and the
             plan variants used by sweep-t, compare-modes and paths.
"""

import itertools
import json
import logging
from dataclasses import replace
from pathlib import Path

from dgkd.controllers.dataset_controller import SYNTHETIC_DEFAULTS, DatasetController
from dgkd.controllers.zoo_controller import ZooController
from dgkd.forms.config_forms import (
    AnalysisForm,
    CompareForm,
    DatasetForm,
    DistillForm,
    ExperimentForm,
    LadderEntryForm,
    PlanForm,
    SweepForm,
    TrainForm,
    form_keys,
)
from dgkd.models.distill import DistillConfig
from dgkd.models.experiment import AnalysisConfig, DatasetConfig, ExperimentConfig
from dgkd.models.model_spec import ModelSpec
from dgkd.models.plan import DistillationPlan, TrainHyper
from dgkd.utils.errors import ConfigError, DatasetError, DGKDError, LadderError

logger = logging.getLogger("dgkd.config")

SECTIONS = {"dataset", "plans", "analysis", "sweep", "compare"}
PLAN_SECTIONS = {"ladder", "distill", "stage_distill", "train"}
IMAGE_SHAPES = {"idx": (1, 28, 28), "cifar_binary": (3, 32, 32)}


def _check_keys(raw, allowed, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"expected an object, got {type(raw).__name__}", path)
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)


def _validated(form_class, raw, path, extra_keys=()):
    """Reject unknown keys, run the form, and return its data without the section keys."""
    raw = {} if raw is None else raw
    _check_keys(raw, form_keys(form_class) | set(extra_keys), path)
    form = form_class(data={k: v for k, v in raw.items() if k not in extra_keys})
    if not form.validate():
        name, messages = sorted(form.errors.items())[0]
        raise ConfigError("; ".join(str(m) for m in messages), f"{path}.{name}" if path else name)
    return dict(form.data)


def _resolve_path(value, base_dir, key_path):
    if value is None:
        raise ConfigError("a file path is required", key_path)
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ConfigError(f"file not found: {path}", key_path)
    return str(path.resolve())


def _dataset_config(raw, base_dir):
    data = _validated(DatasetForm, raw, "dataset", extra_keys=("params",))
    kind = data["kind"]
    params = (raw or {}).get("params") or {}

    if kind.startswith("synthetic_"):
        generator = kind[len("synthetic_"):]
        if not isinstance(params, dict):
            raise ConfigError("expected an object", "dataset.params")
        _check_keys(params, SYNTHETIC_DEFAULTS[generator], "dataset.params")
        for key, value in params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"expected a number, got {value!r}", f"dataset.params.{key}")
        params = {**SYNTHETIC_DEFAULTS[generator], **params}
        if data["num_classes"] is not None and data["num_classes"] != params["classes"]:
            raise ConfigError("must equal params.classes for synthetic data", "dataset.num_classes")
        if data["augment"]:
            raise ConfigError("augmentation applies to image data only", "dataset.augment")
        return DatasetConfig(kind=kind, seed=data["seed"], params=params, augment=False,
                             normalize=data["normalize"], num_classes=int(params["classes"]), input_shape=(2,))

    if params:
        raise ConfigError("params apply to synthetic datasets only", "dataset.params")
    input_shape = tuple(data["input_shape"] or IMAGE_SHAPES[kind])
    if len(input_shape) != 3:
        raise ConfigError("image input_shape must be [channels, height, width]", "dataset.input_shape")
    common = dict(kind=kind, seed=data["seed"], augment=data["augment"], normalize=data["normalize"],
                  num_classes=data["num_classes"] or 10, input_shape=input_shape)
    if kind == "idx":
        return DatasetConfig(
            images=_resolve_path(data["images"], base_dir, "dataset.images"),
            labels=_resolve_path(data["labels"], base_dir, "dataset.labels"),
            test_images=_resolve_path(data["test_images"], base_dir, "dataset.test_images"),
            test_labels=_resolve_path(data["test_labels"], base_dir, "dataset.test_labels"),
            **common,
        )
    if not data["train_files"] or not data["test_files"]:
        raise ConfigError("cifar_binary needs train_files and test_files", "dataset")
    return DatasetConfig(
        train_files=tuple(_resolve_path(p, base_dir, f"dataset.train_files.{i}") for i, p in enumerate(data["train_files"])),
        test_files=tuple(_resolve_path(p, base_dir, f"dataset.test_files.{i}") for i, p in enumerate(data["test_files"])),
        **common,
    )


def _distill_config(data, path):
    lambdas = data["source_lambdas"]
    try:
        return DistillConfig(
            temperature=data["temperature"],
            lambda_weight=data["lambda_weight"],
            source_lambdas=lambdas,
            n_sources=len(lambdas) if lambdas else 1,
            drop_trials=data["drop_trials"],
            normalize=data["normalize"],
            gate_granularity=data["gate_granularity"],
        )
    except DGKDError as exc:
        raise ConfigError(str(exc), path) from exc


def _plan(raw, index, dataset):
    path = f"plans.{index}"
    data = _validated(PlanForm, raw, path, extra_keys=PLAN_SECTIONS)

    entries = raw.get("ladder")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("a non-empty list of models is required", f"{path}.ladder")
    ladder = []
    for position, entry in enumerate(entries):
        spec = _validated(LadderEntryForm, entry, f"{path}.ladder.{position}")
        if spec["family"] == "mlp" and len(dataset.input_shape) != 1:
            raise ConfigError("mlp models need vector inputs; use plain_cnn for images", f"{path}.ladder.{position}.family")
        try:
            ladder.append(ModelSpec(spec["family"], spec["depth"], dataset.num_classes, dataset.input_shape, spec["widths"]))
        except DGKDError as exc:
            raise ConfigError(str(exc), f"{path}.ladder.{position}") from exc

    try:
        if data["expand"]:
            ladder = ZooController.expand_ladder(ladder)
        else:
            ZooController.check_ladder(ladder)
    except LadderError as exc:
        raise ConfigError(str(exc), f"{path}.ladder") from exc

    distill_raw = raw.get("distill") or {}
    distill = _distill_config(_validated(DistillForm, distill_raw, f"{path}.distill"), f"{path}.distill")

    overrides_raw = raw.get("stage_distill") or {}
    if not isinstance(overrides_raw, dict):
        raise ConfigError("expected an object keyed by stage index", f"{path}.stage_distill")
    overrides = {}
    for key, override in overrides_raw.items():
        key_path = f"{path}.stage_distill.{key}"
        if not str(key).isdigit():
            raise ConfigError("stage keys must be non-negative integers", key_path)
        if not isinstance(override, dict):
            raise ConfigError("expected an object", key_path)
        merged = {**distill_raw, **override}
        overrides[int(key)] = _distill_config(_validated(DistillForm, merged, key_path), key_path)

    train = _validated(TrainForm, raw.get("train"), f"{path}.train")
    try:
        return DistillationPlan(
            name=data["name"],
            ladder=tuple(ladder),
            mode=data["mode"],
            distill=distill,
            stage_distill=overrides,
            train=TrainHyper(augment=dataset.augment, **train),
            seed=0,
            stochastic_for_tas=data["stochastic_for_tas"],
            cache_trainer_logits=data["cache_trainer_logits"],
        ), data["expand"]
    except DGKDError as exc:
        raise ConfigError(str(exc), path) from exc


class ConfigController:
    """
    Controller for experiment configuration and the datasets it names.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def parse_config(path):
        """
        Read and fully validate an experiment configuration file.

        Relative file paths are resolved against the configuration file's directory.

        Args:
            path (str | Path): JSON configuration

        Returns:
            ExperimentConfig: Every default resolved

        Raises:
            ConfigError: Missing file, invalid JSON, unknown key, schema violation or
                invalid ladder, with the dotted key path of the offending entry
        """
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return ConfigController.parse_config_dict(raw, base_dir=path.resolve().parent)

    @staticmethod
    def parse_config_dict(raw, base_dir="."):
        """Validate an already decoded configuration document."""
        base_dir = Path(base_dir)
        top = _validated(ExperimentForm, raw, "", extra_keys=SECTIONS)
        dataset = _dataset_config(raw.get("dataset"), base_dir)

        plans_raw = raw.get("plans")
        if not isinstance(plans_raw, list) or not plans_raw:
            raise ConfigError("at least one plan is required", "plans")
        plans, expand = [], {}
        for index, plan_raw in enumerate(plans_raw):
            if not isinstance(plan_raw, dict):
                raise ConfigError("expected an object", f"plans.{index}")
            plan, expanded = _plan(plan_raw, index, dataset)
            if plan.name in expand:
                raise ConfigError(f"duplicate plan name {plan.name!r}", f"plans.{index}.name")
            plans.append(plan)
            expand[plan.name] = expanded

        analysis = _validated(AnalysisForm, raw.get("analysis"), "analysis")
        sweep = _validated(SweepForm, raw.get("sweep"), "sweep")
        compare = _validated(CompareForm, raw.get("compare"), "compare")

        config = ExperimentConfig(
            dataset=dataset,
            plans=tuple(plans),
            seeds=tuple(top["seeds"]),
            output_dir=top["output_dir"],
            analysis=AnalysisConfig(**analysis),
            expand=expand,
            sweep_drop_trials=sweep["drop_trials"],
            compare_modes=tuple(compare["modes"]),
            version=top["version"],
        )
        logger.info("config_parsed | plans=%d | seeds=%s | dataset=%s", len(plans), list(config.seeds), dataset.kind)
        return config

    @staticmethod
    def resolved_config(config):
        """The resolved configuration as a JSON-ready dict; parsing it again gives the same dict."""
        return config.to_dict()

    @staticmethod
    def write_resolved_config(config, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @staticmethod
    def load_dataset(dataset_config):
        """
        Build the LabeledDataset a DatasetConfig describes.

        Raises:
            DatasetError: If a file is malformed or its contents disagree with the configured shape
        """
        kind = dataset_config.kind
        if dataset_config.is_synthetic:
            dataset = DatasetController.generate_synthetic_dataset(
                kind[len("synthetic_"):], dataset_config.params, dataset_config.seed
            )
        elif kind == "idx":
            dataset = DatasetController.combine_splits(
                DatasetController.load_idx_dataset(dataset_config.images, dataset_config.labels,
                                                   dataset_config.num_classes, "train"),
                DatasetController.load_idx_dataset(dataset_config.test_images, dataset_config.test_labels,
                                                   dataset_config.num_classes, "test"),
            )
        else:
            dataset = DatasetController.combine_splits(
                DatasetController.load_cifar_binary(list(dataset_config.train_files), dataset_config.num_classes, "train"),
                DatasetController.load_cifar_binary(list(dataset_config.test_files), dataset_config.num_classes, "test"),
            )
        if dataset.input_shape != tuple(dataset_config.input_shape):
            raise DatasetError(f"dataset inputs {dataset.input_shape} do not match configured {dataset_config.input_shape}")
        if dataset_config.normalize:
            dataset = DatasetController.normalize_dataset(dataset)
        return dataset

    @staticmethod
    def drop_trial_variants(plan, values=None):
        """
        One dense_stochastic copy of ``plan`` per drop-trial count t.

        Args:
            plan (DistillationPlan): Base plan
            values (Sequence[int], optional): t values; every admissible t of the student when omitted

        Returns:
            list[DistillationPlan]: Named ``<plan>-t<t>``
        """
        sources = len(plan.ladder) - 1
        if sources < 1:
            raise ConfigError("sweep-t needs a ladder with at least two models", f"plan {plan.name}")
        if values is None:
            values = range(sources)
        variants = []
        for t in values:
            if not 0 <= t <= sources - 1:
                raise ConfigError(f"t={t} outside [0, {sources - 1}] for {sources} student sources", "sweep.drop_trials")
            overrides = {stage: replace(cfg, drop_trials=t) for stage, cfg in plan.stage_distill.items()}
            variants.append(replace(plan, name=f"{plan.name}-t{t}", mode="dense_stochastic",
                                    distill=replace(plan.distill, drop_trials=t), stage_distill=overrides))
        return variants

    @staticmethod
    def mode_variants(plan, modes):
        """One copy of ``plan`` per guidance mode, named ``<plan>-<mode>``; t is capped for short ladders."""
        variants = []
        for mode in modes:
            distill = plan.distill
            if mode == "dense_stochastic":
                distill = replace(distill, drop_trials=min(distill.drop_trials, max(len(plan.ladder) - 2, 0)))
            variants.append(replace(plan, name=f"{plan.name}-{mode}", mode=mode, distill=distill))
        return variants

    @staticmethod
    def path_variants(plan):
        """
        Every sub-ladder that keeps the teacher and the student, largest first.

        Returns:
            list[DistillationPlan]: Named ``<plan>-path<k>``
        """
        if len(plan.ladder) < 2:
            raise ConfigError("paths needs a ladder with at least two models", f"plan {plan.name}")
        teacher, *assistants, student = plan.ladder
        subsets = []
        for size in range(len(assistants), -1, -1):
            subsets.extend(itertools.combinations(assistants, size))
        variants = []
        for number, chosen in enumerate(subsets):
            ladder = (teacher, *chosen, student)
            distill = replace(plan.distill, drop_trials=min(plan.distill.drop_trials, len(ladder) - 2))
            if distill.source_lambdas is not None and len(distill.source_lambdas) != len(ladder) - 1:
                distill = replace(distill, source_lambdas=None, n_sources=1)
            variants.append(replace(plan, name=f"{plan.name}-path{number}", ladder=ladder, distill=distill,
                                    stage_distill={}))
        return variants
