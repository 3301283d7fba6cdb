"""
File: dgkd/controllers/training_controller.py
Description: Stage training and plan orchestration. Trains the teacher from labels, then
             every lower ladder member from the already trained members above it, with
             frozen-trainer logit evaluation, stage reuse, checkpointing, and partial-result
             preservation when a stage fails.
"""

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from dgkd.controllers.checkpoint_controller import CheckpointController
from dgkd.controllers.dataset_controller import DatasetController
from dgkd.controllers.loss_controller import LossController
from dgkd.controllers.metrics_controller import MetricsController, evaluate_logits, predictions
from dgkd.controllers.optimizer_controller import OptimizerController
from dgkd.controllers.zoo_controller import ZooController
from dgkd.models.checkpoint import Checkpoint, CheckpointMeta
from dgkd.models.distill import GateMask
from dgkd.models.model_spec import ladder_labels, model_label
from dgkd.models.optimizer import OptimizerState
from dgkd.models.report import STATUS_COMPLETED, STATUS_FAILED, PlanReport, StageReport
from dgkd.models.tensor import backward
from dgkd.utils.errors import DivergenceError, LadderError, NumericError, ParameterError, StructuralError
from dgkd.utils.seeding import (
    PURPOSE_AUGMENT,
    PURPOSE_GATES,
    PURPOSE_INIT,
    PURPOSE_SHUFFLE,
    generator_state,
    stage_generator,
)

logger = logging.getLogger("dgkd.training")

SINGLE_TRAINER_MODES = ("direct_kd", "chain")
DENSE_MODES = ("dense", "dense_stochastic")


def dataset_fingerprint(dataset):
    """SHA-256 over a dataset's inputs, labels and split tags."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(dataset.labels, dtype="<i8").tobytes())
    digest.update("|".join(dataset.splits.tolist()).encode("utf-8"))
    return digest.hexdigest()


class StageCache:
    """
    Trained stages keyed by everything that determines their outcome.

    Two stages with the same spec, trainer fingerprints, effective distillation
    config, hyperparameters, seed, gating flag and dataset train identically,
    so the second one can reuse the first one's checkpoint and report.
    """

    def __init__(self):
        self._entries = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(spec, trainers, cfg, hyper, seed, stochastic, cache_logits, data_fingerprint):
        payload = {
            "spec": spec.to_dict(),
            "trainers": [trainer.fingerprint() for trainer in trainers],
            "cfg": cfg.to_dict() if cfg is not None else None,
            "hyper": hyper.to_dict(),
            "seed": int(seed),
            "stochastic": bool(stochastic),
            "cache_logits": bool(cache_logits),
            "dataset": data_fingerprint,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()

    def get(self, key):
        entry = self._entries.get(key)
        if entry is None:
            self.misses += 1
        else:
            self.hits += 1
        return entry

    def put(self, key, checkpoint, report):
        self._entries[key] = (checkpoint, report)

    def __len__(self):
        return len(self._entries)


class _TrainerPool:
    """Evaluates frozen trainers on a mini-batch, optionally on worker threads or from a logit cache."""

    def __init__(self, trainers, workers, cached=None):
        self.trainers = trainers
        self.cached = cached
        self.executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(trainers) > 1 else None

    def logits(self, inputs, indices):
        if self.cached is not None:
            return [table[indices] for table in self.cached]
        if self.executor is None:
            return [TrainingController.trainer_logits(t, inputs).data for t in self.trainers]
        futures = [self.executor.submit(TrainingController.trainer_logits, t, inputs) for t in self.trainers]
        return [future.result().data for future in futures]

    def close(self):
        if self.executor is not None:
            self.executor.shutdown(wait=True)


def _check_trainers(spec, trainers, mode):
    if not trainers:
        raise LadderError("train_with_trainers needs at least one trainer")
    if mode in SINGLE_TRAINER_MODES and len(trainers) != 1:
        raise LadderError(f"{mode} trains from exactly one trainer, got {len(trainers)}")
    if mode not in SINGLE_TRAINER_MODES + DENSE_MODES:
        raise ParameterError(f"mode {mode!r} does not train from trainers")
    own = ZooController.parameter_count(spec)
    for trainer in trainers:
        count = ZooController.parameter_count(trainer.spec)
        if count <= own:
            raise LadderError(
                f"trainer {trainer.meta.label or trainer.spec.family} ({count} parameters) is not larger "
                f"than the model it trains ({own} parameters)"
            )
        if (trainer.spec.num_classes, trainer.spec.input_shape) != (spec.num_classes, spec.input_shape):
            raise StructuralError("trainer and trainee disagree on classes or input shape")


def _run_stage(spec, dataset, hyper, seed, trainers=(), cfg=None, stochastic=False,
               stage_index=0, label=None, cache_logits=False):
    """
    Shared training loop for supervised and guided stages.

    Streams: parameters come from the init stream, batch order from the shuffle
    stream, gate draws from the gates stream and crops/flips from the augment
    stream, all derived from ``seed``. A supervised stage and a guided stage
    with lambda 0 therefore see the same parameters and the same batches.
    """
    label = label or model_label(spec, "teacher" if not trainers else "student")
    # Check the data fits the model
    train = dataset.train()
    test = dataset.test()
    if len(train) == 0:
        raise StructuralError(f"dataset {dataset.name!r} has no training examples")
    if tuple(train.input_shape) != spec.input_shape:
        raise StructuralError(f"dataset inputs {train.input_shape} do not match {spec.input_shape}")
    if train.num_classes != spec.num_classes:
        raise StructuralError(f"dataset has {train.num_classes} classes, model expects {spec.num_classes}")
    if hyper.augment and not train.is_image:
        raise ParameterError("augmentation needs image data")

    # Derive every random stream of the stage from its seed
    init_seed = int(stage_generator(seed, PURPOSE_INIT).integers(0, 2 ** 63))
    shuffle_rng = stage_generator(seed, PURPOSE_SHUFFLE)
    gate_rng = stage_generator(seed, PURPOSE_GATES)
    augment_rng = stage_generator(seed, PURPOSE_AUGMENT)

    # Fresh parameters and optimizer state
    params = ZooController.build_model(spec, init_seed)
    state = OptimizerState(
        lr=hyper.lr, momentum=hyper.momentum, weight_decay=hyper.weight_decay, nesterov=hyper.nesterov
    )

    # Remember the trainers so we can confirm they stayed frozen
    fingerprints = [trainer.fingerprint() for trainer in trainers]
    cached = None
    if trainers and cache_logits:
        if hyper.augment:
            logger.warning("logit_cache_skipped | stage=%d | reason=augmentation", stage_index)
        else:
            cached = [evaluate_logits(trainer, train.inputs) for trainer in trainers]
    pool = _TrainerPool(list(trainers), hyper.trainer_workers, cached) if trainers else None

    epoch_losses, epoch_top1, batch_losses = [], [], []
    logger.info(
        "stage_started | stage=%d | label=%s | trainers=%d | epochs=%d",
        stage_index, label, len(trainers), hyper.epochs,
    )
    try:
        for epoch in range(hyper.epochs):
            state.lr = hyper.lr_at(epoch)
            # One pass over the train split in shuffled order
            order = shuffle_rng.permutation(len(train))
            losses = []
            for batch, start in enumerate(range(0, len(train), hyper.batch_size)):
                indices = order[start:start + hyper.batch_size]
                inputs = train.inputs[indices]
                labels = train.labels[indices]
                if hyper.augment:
                    inputs = DatasetController.augment_batch(inputs, augment_rng)
                try:
                    value, params = _step(params, spec, inputs, labels, indices, pool, cfg, stochastic, gate_rng, state)
                except NumericError as exc:
                    raise DivergenceError(
                        f"stage {stage_index} ({label}) diverged in epoch {epoch}, batch {batch}: {exc}",
                        stage=stage_index, epoch=epoch, batch=batch,
                    ) from exc
                losses.append(value)
                logger.debug("batch_finished | stage=%d | epoch=%d | batch=%d | loss=%.6f", stage_index, epoch, batch, value)

            # Epoch summary on the test split
            batch_losses.extend(losses)
            epoch_losses.append(float(np.mean(losses)))
            checkpoint = Checkpoint(spec, params)
            epoch_top1.append(MetricsController.top1_accuracy(evaluate_logits(checkpoint, test.inputs), test.labels))
            logger.info(
                "epoch_finished | stage=%d | label=%s | epoch=%d | lr=%g | loss=%.6f | top1=%.4f",
                stage_index, label, epoch, state.lr, epoch_losses[-1], epoch_top1[-1],
            )
    finally:
        if pool is not None:
            pool.close()

    if [trainer.fingerprint() for trainer in trainers] != fingerprints:
        raise StructuralError(f"a frozen trainer changed while training stage {stage_index}")

    # Freeze the result and record its test errors
    frozen = params.copy(requires_grad=False)
    wrong = np.flatnonzero(predictions(evaluate_logits(Checkpoint(spec, frozen), test.inputs)) != test.labels)
    test_size = len(test)
    final_top1 = (test_size - wrong.size) / test_size if test_size else 0.0
    meta = CheckpointMeta(
        stage_index=stage_index,
        label=label,
        epochs_completed=hyper.epochs,
        rng_state={
            "shuffle": generator_state(shuffle_rng),
            "gates": generator_state(gate_rng),
            "augment": generator_state(augment_rng),
        },
        final_metrics={"top1": final_top1, "test_errors": int(wrong.size)},
    )
    report = StageReport(
        stage_index=stage_index,
        label=label,
        spec=spec.to_dict(),
        trainer_labels=[trainer.meta.label for trainer in trainers],
        epoch_losses=epoch_losses,
        epoch_top1=epoch_top1,
        final_top1=final_top1,
        test_size=test_size,
        error_indices=wrong.tolist(),
        batch_losses=batch_losses,
        config=cfg.to_dict() if cfg is not None else None,
        seed=int(seed),
        parameter_count=ZooController.parameter_count(spec),
    )
    logger.info("stage_finished | stage=%d | label=%s | top1=%.4f | errors=%d", stage_index, label, final_top1, wrong.size)
    return Checkpoint(spec, frozen, meta), report


def _step(params, spec, inputs, labels, indices, pool, cfg, stochastic, gate_rng, state):
    """One forward/backward/update; returns the batch loss and the new parameters."""
    trainer_values = pool.logits(inputs, indices) if pool is not None else None
    logits, tape = ZooController.forward(params, spec, inputs)
    if trainer_values is None:
        loss = LossController.cross_entropy_loss(logits, labels)
    else:
        # Pick this batch's active sources
        if not stochastic:
            gates = GateMask.all_on(cfg.n_sources)
        elif cfg.gate_granularity == "sample":
            gates = LossController.sample_gate_rows(cfg.n_sources, cfg.drop_trials, len(labels), gate_rng)
        else:
            gates = LossController.sample_gates(cfg.n_sources, cfg.drop_trials, gate_rng)
        loss = LossController.dgkd_total_loss(logits, trainer_values, labels, cfg, gates)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss {value}")
    backward(tape, loss)
    return value, OptimizerController.sgd_momentum_step(params, None, state)


class TrainingController:
    """
    Controller for training stages and running distillation plans.
    All methods are static and can be called without instantiation.
    """

    @staticmethod
    def train_supervised(spec, dataset, hyper, seed, stage_index=0, label=None):
        """
        Train a model from labels only (cross-entropy).

        Args:
            spec (ModelSpec): Model to train
            dataset (LabeledDataset): Train and test splits
            hyper (TrainHyper): Optimizer and schedule settings
            seed (int): Stage seed; every random stream of the stage derives from it
            stage_index (int): Position in the plan, for reports and diagnostics
            label (str, optional): Ladder label such as "T10"

        Returns:
            tuple[Checkpoint, StageReport]

        Raises:
            DivergenceError: If the loss or the parameters become non-finite
        """
        return _run_stage(spec, dataset, hyper, seed, stage_index=stage_index,
                          label=label or model_label(spec, "teacher"))

    @staticmethod
    def train_with_trainers(spec, trainers, mode, cfg, dataset, hyper, seed, stochastic=None,
                            stage_index=0, label=None, cache_logits=False):
        """
        Train a model against frozen trainers with the dense guidance loss.

        Args:
            spec (ModelSpec): Model to train
            trainers (list[Checkpoint]): Teacher first, then assistants by decreasing capacity
            mode (str): "direct_kd", "chain", "dense" or "dense_stochastic"
            cfg (DistillConfig): Must describe len(trainers) sources
            dataset (LabeledDataset): Train and test splits
            hyper (TrainHyper): Optimizer and schedule settings
            seed (int): Stage seed
            stochastic (bool, optional): Draw gates per mini-batch; defaults to mode == "dense_stochastic"
            stage_index (int): Position in the plan
            label (str, optional): Ladder label
            cache_logits (bool): Evaluate trainers once over the train split instead of per batch

        Returns:
            tuple[Checkpoint, StageReport]

        Raises:
            LadderError: If a trainer is not larger than the trainee, or the trainer count does not fit the mode
            DivergenceError: If training diverges
        """
        trainers = list(trainers)
        _check_trainers(spec, trainers, mode)
        if cfg.n_sources != len(trainers):
            raise StructuralError(f"config describes {cfg.n_sources} sources for {len(trainers)} trainers")
        if stochastic is None:
            stochastic = mode == "dense_stochastic"
        return _run_stage(spec, dataset, hyper, seed, trainers=trainers, cfg=cfg, stochastic=stochastic,
                          stage_index=stage_index, label=label or model_label(spec, "student"),
                          cache_logits=cache_logits)

    @staticmethod
    def trainer_logits(checkpoint, batch):
        """
        Inference-only logits of a frozen model; nothing is recorded or mutated.

        Raises:
            StructuralError: If the batch does not match the model's input signature
        """
        logits, _ = ZooController.forward(checkpoint.params, checkpoint.spec, batch, record=False)
        return logits

    @staticmethod
    def run_plan(plan, dataset, out_dir=None, cache=None, denominator="lower"):
        """
        Train every ladder member in order and collect a PlanReport.

        Stage k reads only the checkpoints of stages < k. With ``out_dir`` each
        stage checkpoint and the plan report are written there; when a stage
        fails the report is written with status "failed" before the error is
        raised again.

        Args:
            plan (DistillationPlan): Ladder, mode and hyperparameters
            dataset (LabeledDataset): Train and test splits
            out_dir (str | Path, optional): Artifact directory
            cache (StageCache, optional): Reuse identical stages across plans
            denominator (str): Overlap-rate denominator for the report matrix

        Returns:
            PlanReport
        """
        ZooController.check_ladder(plan.ladder)
        labels = ladder_labels(plan.ladder)
        out_dir = Path(out_dir) if out_dir is not None else None
        data_fingerprint = dataset_fingerprint(dataset) if cache is not None else None
        started = time.perf_counter()
        report = PlanReport(
            name=plan.name, mode=plan.mode, seed=plan.seed, path=plan.path_string(),
            plan=plan.to_dict(), dataset_id=dataset.name, overlap_denominator=denominator,
        )
        logger.info("plan_started | plan=%s | mode=%s | seed=%d | path=%s", plan.name, plan.mode, plan.seed, report.path)

        checkpoints = []
        try:
            for stage, spec in enumerate(plan.ladder):
                trainer_indices = plan.trainer_indices(stage)
                trainers = [checkpoints[i] for i in trainer_indices]
                cfg = plan.stage_config(stage)
                seed = plan.stage_seed(stage)
                stochastic = plan.is_stochastic(stage)

                # Look up an identical stage trained earlier
                key = hit = None
                if cache is not None:
                    key = StageCache.key(spec, trainers, cfg, plan.train, seed, stochastic,
                                         plan.cache_trainer_logits, data_fingerprint)
                    hit = cache.get(key)

                # Reuse the cached stage, or train it from the trainers above (or from labels alone)
                if hit is not None:
                    checkpoint, stage_report = hit
                    logger.info("stage_reused | stage=%d | label=%s", stage, labels[stage])
                    checkpoint = replace(checkpoint, meta=replace(checkpoint.meta, stage_index=stage, label=labels[stage]))
                    stage_report = replace(stage_report, stage_index=stage, label=labels[stage],
                                           trainer_labels=[labels[i] for i in trainer_indices])
                elif trainers:
                    checkpoint, stage_report = TrainingController.train_with_trainers(
                        spec, trainers, plan.mode, cfg, dataset, plan.train, seed, stochastic=stochastic,
                        stage_index=stage, label=labels[stage], cache_logits=plan.cache_trainer_logits,
                    )
                else:
                    checkpoint, stage_report = TrainingController.train_supervised(
                        spec, dataset, plan.train, seed, stage_index=stage, label=labels[stage]
                    )
                if cache is not None and hit is None:
                    cache.put(key, checkpoint, stage_report)
                # Keep the stage for the ones below it
                stage_report = replace(stage_report, trainer_indices=list(trainer_indices))
                checkpoints.append(checkpoint)
                report.stages.append(stage_report)
                if out_dir is not None:
                    CheckpointController.save_checkpoint(
                        checkpoint, out_dir / "checkpoints" / f"stage-{stage}-{labels[stage]}.dgkd"
                    )
        except Exception as exc:
            # Save what finished before the failure, then re-raise
            report.status = STATUS_FAILED
            report.error = f"{type(exc).__name__}: {exc}"
            report.elapsed_seconds = time.perf_counter() - started
            _fill_overlaps(report, denominator)
            if out_dir is not None:
                MetricsController.save_plan_report(report, out_dir / "plan_report.json")
                logger.warning("partial_results_saved | plan=%s | stages=%d | path=%s",
                               plan.name, len(report.stages), out_dir / "plan_report.json")
            logger.error("plan_failed | plan=%s | seed=%d | error=%s", plan.name, plan.seed, report.error)
            raise

        report.status = STATUS_COMPLETED
        report.elapsed_seconds = time.perf_counter() - started
        _fill_overlaps(report, denominator)
        if out_dir is not None:
            MetricsController.save_plan_report(report, out_dir / "plan_report.json")
        logger.info("plan_finished | plan=%s | seed=%d | student_top1=%.4f", plan.name, plan.seed,
                    report.student.final_top1)
        return report


def _fill_overlaps(report, denominator):
    report.overlap_matrix = MetricsController.overlap_matrix(report.error_sets(), denominator)
