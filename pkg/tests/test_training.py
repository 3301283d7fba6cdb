"""
File: tests/test_training.py
Description: Tests for stage training, guidance modes, plan orchestration, stage reuse and
             partial-result preservation.
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from dgkd.controllers.checkpoint_controller import CheckpointController
from dgkd.controllers.loss_controller import LossController
from dgkd.controllers.training_controller import StageCache, TrainingController
from dgkd.controllers.zoo_controller import ZooController
from dgkd.models.distill import DistillConfig
from dgkd.models.plan import DistillationPlan, TrainHyper
from dgkd.utils.errors import DivergenceError, LadderError, NumericError, ParameterError, StructuralError
from dgkd.utils.seeding import PURPOSE_INIT, derive_stage_seed, stage_generator


def make_plan(ladder, mode="dense", hyper=None, **kwargs):
    return DistillationPlan(
        name=kwargs.pop("name", mode),
        ladder=ladder,
        mode=mode,
        train=hyper or TrainHyper(lr=0.05, epochs=2, batch_size=16),
        **kwargs,
    )


def without_timing(report):
    data = report.to_dict()
    data.pop("elapsed_seconds")
    data.pop("name")
    data.pop("mode")
    data.pop("plan")
    return data


@pytest.fixture
def teacher(tiny_ladder, blobs, quick_hyper):
    checkpoint, _ = TrainingController.train_supervised(tiny_ladder[0], blobs, quick_hyper, seed=1)
    return checkpoint


# ---------------------------------------------------------------------------
# TrainHyper / DistillationPlan
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("epochs, expected", [
    (1, [0.1]),
    (2, [0.1, 0.01]),
    (4, [0.1, 0.1, 0.01, 0.001]),
])
def test_step_schedule_starts_at_base_rate(epochs, expected):
    hyper = TrainHyper(lr=0.1, epochs=epochs, lr_schedule="step")
    assert [hyper.lr_at(epoch) for epoch in range(epochs)] == pytest.approx(expected)


def test_constant_schedule_never_drops():
    hyper = TrainHyper(lr=0.1, epochs=4)
    assert [hyper.lr_at(epoch) for epoch in range(4)] == [0.1] * 4


def test_plan_dict_round_trip(tiny_ladder):
    plan = make_plan(
        tiny_ladder, "dense_stochastic", seed=5, stage_seeds=(11, 12, 13), stochastic_for_tas=True,
        stage_distill={2: DistillConfig(temperature=2.0, source_lambdas=(0.3, 0.6), n_sources=2)},
    )
    restored = DistillationPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert restored == plan
    assert restored.stage_config(2).source_lambdas == (0.3, 0.6)


# ---------------------------------------------------------------------------
# train_supervised / train_with_trainers
# ---------------------------------------------------------------------------

def test_supervised_training_learns_separable_blobs(tiny_ladder, blobs):
    hyper = TrainHyper(lr=0.05, epochs=15, batch_size=16)
    _, report = TrainingController.train_supervised(tiny_ladder[2], blobs, hyper, seed=0)
    assert report.epoch_losses[-1] < report.epoch_losses[0]
    assert report.final_top1 >= 0.8
    assert len(report.epoch_top1) == 15
    assert report.label == "T2"


def test_supervised_training_is_deterministic(tiny_ladder, blobs, quick_hyper):
    first, first_report = TrainingController.train_supervised(tiny_ladder[1], blobs, quick_hyper, seed=5)
    second, second_report = TrainingController.train_supervised(tiny_ladder[1], blobs, quick_hyper, seed=5)
    assert first.fingerprint() == second.fingerprint()
    assert first_report.to_dict() == second_report.to_dict()


def test_top1_and_error_count_agree(tiny_ladder, blobs, quick_hyper):
    checkpoint, report = TrainingController.train_supervised(tiny_ladder[1], blobs, quick_hyper, seed=2)
    test_size = len(blobs.test())
    assert report.test_size == test_size
    assert len(report.error_indices) + round(report.final_top1 * test_size) == test_size
    assert checkpoint.meta.final_metrics["test_errors"] == len(report.error_indices)


def test_zero_epochs_leaves_initial_parameters(tiny_ladder, blobs):
    hyper = TrainHyper(epochs=0)
    checkpoint, report = TrainingController.train_supervised(tiny_ladder[2], blobs, hyper, seed=3)
    init_seed = int(stage_generator(3, PURPOSE_INIT).integers(0, 2 ** 63))
    assert checkpoint.params.identical_to(ZooController.build_model(tiny_ladder[2], init_seed))
    assert report.epoch_losses == []


def test_lambda_zero_guidance_equals_supervised_training(tiny_ladder, blobs, quick_hyper, teacher):
    cfg = DistillConfig(lambda_weight=0.0)
    guided, guided_report = TrainingController.train_with_trainers(
        tiny_ladder[2], [teacher], "direct_kd", cfg, blobs, quick_hyper, seed=9
    )
    plain, plain_report = TrainingController.train_supervised(tiny_ladder[2], blobs, quick_hyper, seed=9)
    assert guided.params.identical_to(plain.params)
    assert guided_report.batch_losses == plain_report.batch_losses


def test_recorded_dense_loss_is_the_term_by_term_sum(tiny_ladder, blobs, quick_hyper, teacher):
    assistant, _ = TrainingController.train_with_trainers(
        tiny_ladder[1], [teacher], "chain", DistillConfig(), blobs, quick_hyper, seed=2
    )
    trainers = [teacher, assistant]
    train = blobs.train()
    cfg = DistillConfig(temperature=3.0, lambda_weight=0.6, n_sources=2)
    one_batch = TrainHyper(lr=0.05, epochs=1, batch_size=len(train))
    _, report = TrainingController.train_with_trainers(tiny_ladder[2], trainers, "dense", cfg, blobs, one_batch, seed=3)

    init_seed = int(stage_generator(3, PURPOSE_INIT).integers(0, 2 ** 63))
    params = ZooController.build_model(tiny_ladder[2], init_seed)
    logits, _ = ZooController.forward(params, tiny_ladder[2], train.inputs, record=False)
    ce = LossController.cross_entropy_loss(logits, train.labels).item()
    kd = sum(
        LossController.distillation_loss(logits, TrainingController.trainer_logits(t, train.inputs), 3.0).item()
        for t in trainers
    )
    assert report.batch_losses[0] == pytest.approx(2 * 0.4 * ce + 0.6 * kd, rel=1e-12)


def test_trainers_stay_frozen(tiny_ladder, blobs, quick_hyper, teacher):
    before = teacher.fingerprint()
    TrainingController.train_with_trainers(tiny_ladder[2], [teacher], "direct_kd", DistillConfig(), blobs,
                                           quick_hyper, seed=4)
    assert teacher.fingerprint() == before


def test_trainer_must_be_larger(tiny_ladder, blobs, quick_hyper):
    small, _ = TrainingController.train_supervised(tiny_ladder[2], blobs, quick_hyper, seed=0)
    with pytest.raises(LadderError):
        TrainingController.train_with_trainers(tiny_ladder[1], [small], "chain", DistillConfig(), blobs,
                                               quick_hyper, seed=0)


def test_single_trainer_modes_reject_several_trainers(tiny_ladder, blobs, quick_hyper, teacher):
    with pytest.raises(LadderError):
        TrainingController.train_with_trainers(tiny_ladder[2], [teacher, teacher], "chain",
                                               DistillConfig(n_sources=2), blobs, quick_hyper, seed=0)


def test_empty_trainer_list_is_rejected(tiny_ladder, blobs, quick_hyper):
    with pytest.raises(LadderError):
        TrainingController.train_with_trainers(tiny_ladder[2], [], "dense", DistillConfig(), blobs, quick_hyper, seed=0)


def test_config_must_match_trainer_count(tiny_ladder, blobs, quick_hyper, teacher):
    with pytest.raises(StructuralError):
        TrainingController.train_with_trainers(tiny_ladder[2], [teacher], "dense", DistillConfig(n_sources=2),
                                               blobs, quick_hyper, seed=0)


def test_divergence_reports_where_it_happened(tiny_ladder, blobs):
    hyper = TrainHyper(lr=1e300, momentum=0.0, epochs=2, batch_size=16)
    with pytest.raises(DivergenceError) as excinfo:
        TrainingController.train_supervised(tiny_ladder[0], blobs, hyper, seed=0, stage_index=4)
    assert excinfo.value.stage == 4
    assert excinfo.value.epoch == 0
    assert isinstance(excinfo.value, NumericError)


def test_augmentation_requires_image_data(tiny_ladder, blobs):
    with pytest.raises(ParameterError):
        TrainingController.train_supervised(tiny_ladder[2], blobs, TrainHyper(epochs=1, augment=True), seed=0)


def test_trainer_logits_do_not_record(teacher, blobs):
    logits = TrainingController.trainer_logits(teacher, blobs.inputs[:4])
    assert logits.shape == (4, 3)
    assert logits.requires_grad is False


# ---------------------------------------------------------------------------
# run_plan
# ---------------------------------------------------------------------------

def test_run_plan_trains_every_stage(tiny_ladder, blobs, tmp_path):
    report = TrainingController.run_plan(make_plan(tiny_ladder), blobs, out_dir=tmp_path)
    assert [stage.label for stage in report.stages] == ["T4", "A3", "S2"]
    assert [stage.trainer_indices for stage in report.stages] == [[], [0], [0, 1]]
    assert [stage.trainer_labels for stage in report.stages] == [[], ["T4"], ["T4", "A3"]]
    assert report.path == "T4→A3→S2"
    assert report.status == "completed"
    assert len(report.overlap_matrix) == 3
    assert (tmp_path / "plan_report.json").is_file()

    saved = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert saved == ["stage-0-T4.dgkd", "stage-1-A3.dgkd", "stage-2-S2.dgkd"]
    student = CheckpointController.load_checkpoint(tmp_path / "checkpoints" / "stage-2-S2.dgkd")
    assert student.meta.label == "S2"


@pytest.mark.parametrize("mode, expected", [
    ("scratch", [[], [], []]),
    ("direct_kd", [[], [0], [0]]),
    ("chain", [[], [0], [1]]),
    ("dense_stochastic", [[], [0], [0, 1]]),
])
def test_run_plan_trainer_sets_per_mode(tiny_ladder, blobs, mode, expected):
    report = TrainingController.run_plan(make_plan(tiny_ladder, mode), blobs)
    assert [stage.trainer_indices for stage in report.stages] == expected


def test_run_plan_under_step_schedule(tiny_ladder, blobs):
    step = TrainHyper(lr=0.05, epochs=4, batch_size=16, lr_schedule="step")
    report = TrainingController.run_plan(make_plan(tiny_ladder, hyper=step), blobs)
    constant = TrainingController.run_plan(make_plan(tiny_ladder, hyper=replace(step, lr_schedule="constant")), blobs)
    assert [len(stage.epoch_losses) for stage in report.stages] == [4, 4, 4]
    assert all(np.isfinite(stage.epoch_losses).all() for stage in report.stages)
    # The first epochs share a rate, the later ones do not
    first = report.stages[0]
    assert first.epoch_losses[:2] == constant.stages[0].epoch_losses[:2]
    assert first.epoch_losses[2:] != constant.stages[0].epoch_losses[2:]


def test_run_plan_is_deterministic(tiny_ladder, blobs):
    plan = make_plan(tiny_ladder, "dense_stochastic", seed=3)
    first = TrainingController.run_plan(plan, blobs)
    second = TrainingController.run_plan(plan, blobs)
    assert without_timing(first) == without_timing(second)


def test_dense_equals_chain_on_two_model_ladder(tiny_ladder, blobs):
    ladder = (tiny_ladder[0], tiny_ladder[2])
    dense = TrainingController.run_plan(make_plan(ladder, "dense"), blobs)
    chain = TrainingController.run_plan(make_plan(ladder, "chain"), blobs)
    assert [s.to_dict() for s in dense.stages] == [s.to_dict() for s in chain.stages]


def test_stochastic_with_no_drops_equals_dense(tiny_ladder, blobs):
    stochastic = make_plan(tiny_ladder, "dense_stochastic", distill=DistillConfig(drop_trials=0))
    dense = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs)
    assert without_timing(TrainingController.run_plan(stochastic, blobs)) == without_timing(dense)


def test_adding_a_stage_keeps_earlier_streams(tiny_ladder, blobs):
    short = TrainingController.run_plan(make_plan((tiny_ladder[0], tiny_ladder[2]), "dense"), blobs)
    full = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs)
    assert short.stages[0].to_dict() == full.stages[0].to_dict()
    assert derive_stage_seed(0, 0) == short.stages[0].seed


def test_per_sample_gates_run(tiny_ladder, blobs):
    plan = make_plan(tiny_ladder, "dense_stochastic", distill=DistillConfig(drop_trials=1, gate_granularity="sample"))
    report = TrainingController.run_plan(plan, blobs)
    assert report.stages[2].config["gate_granularity"] == "sample"


def test_trainer_threads_do_not_change_results(tiny_ladder, blobs):
    serial = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs)
    threaded = TrainingController.run_plan(
        make_plan(tiny_ladder, "dense", hyper=TrainHyper(lr=0.05, epochs=2, batch_size=16, trainer_workers=3)), blobs
    )
    assert [s.batch_losses for s in serial.stages] == [s.batch_losses for s in threaded.stages]


def test_cached_trainer_logits_match_live_evaluation(tiny_ladder, blobs):
    live = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs)
    cached = TrainingController.run_plan(make_plan(tiny_ladder, "dense", cache_trainer_logits=True), blobs)
    for live_stage, cached_stage in zip(live.stages, cached.stages):
        np.testing.assert_allclose(cached_stage.batch_losses, live_stage.batch_losses, rtol=1e-8)


def test_stage_cache_reuses_identical_stages(tiny_ladder, blobs):
    cache = StageCache()
    TrainingController.run_plan(make_plan(tiny_ladder, "direct_kd"), blobs, cache=cache)
    assert cache.hits == 0
    reused = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs, cache=cache)
    assert cache.hits == 2

    fresh = TrainingController.run_plan(make_plan(tiny_ladder, "dense"), blobs)
    assert without_timing(reused) == without_timing(fresh)


def test_failed_stage_leaves_partial_report(tiny_ladder, blobs, tmp_path, monkeypatch):
    def diverge(*args, **kwargs):
        raise DivergenceError("loss became nan", stage=1, epoch=0, batch=0)

    monkeypatch.setattr(TrainingController, "train_with_trainers", staticmethod(diverge))
    with pytest.raises(DivergenceError):
        TrainingController.run_plan(make_plan(tiny_ladder), blobs, out_dir=tmp_path)

    saved = json.loads((tmp_path / "plan_report.json").read_text(encoding="utf-8"))
    assert saved["status"] == "failed"
    assert "DivergenceError" in saved["error"]
    assert len(saved["stages"]) == 1


def test_run_plan_rejects_misordered_ladder(tiny_ladder, blobs):
    plan = make_plan((tiny_ladder[2], tiny_ladder[0]), "scratch")
    with pytest.raises(LadderError):
        TrainingController.run_plan(plan, blobs)
