"""
File: tests/test_config.py
Description: Tests for configuration parsing, validation errors with key paths, the resolved
             echo, dataset loading and the plan variants behind sweep-t, compare-modes and paths.
"""

import copy
import json
from pathlib import Path

import pytest

from dgkd.controllers.config_controller import ConfigController
from dgkd.utils.errors import ConfigError


def minimal_document():
    return {
        "dataset": {"kind": "synthetic_spiral"},
        "plans": [{"name": "p", "ladder": [{"family": "mlp", "depth": 3}, {"family": "mlp", "depth": 2}]}],
    }


def key_path_of(document, base_dir="."):
    with pytest.raises(ConfigError) as excinfo:
        ConfigController.parse_config_dict(document, base_dir=base_dir)
    return excinfo.value.key_path


def idx_document(images="train-images", labels="train-labels"):
    return {
        "dataset": {
            "kind": "idx",
            "images": images,
            "labels": labels,
            "test_images": "test-images",
            "test_labels": "test-labels",
        },
        "plans": [{"name": "cnn", "ladder": [{"family": "plain_cnn", "depth": 3}, {"family": "plain_cnn", "depth": 2}]}],
    }


@pytest.fixture
def idx_dir(tmp_path):
    for name in ("train-images", "train-labels", "test-images", "test-labels"):
        (tmp_path / name).write_bytes(b"")
    return tmp_path


# ---------------------------------------------------------------------------
# parse_config_dict
# ---------------------------------------------------------------------------

def test_defaults_are_resolved():
    config = ConfigController.parse_config_dict(minimal_document())
    plan = config.plans[0]
    assert plan.mode == "dense"
    assert plan.distill.temperature == 4.0
    assert plan.distill.lambda_weight == 0.5
    assert plan.distill.drop_trials == 1
    assert plan.train.epochs == 30
    assert plan.train.lr == 0.1
    assert plan.train.nesterov is True
    assert config.seeds == (0,)
    assert config.analysis.overlap_denominator == "lower"
    assert config.compare_modes == ("direct_kd", "chain", "dense", "dense_stochastic")
    assert config.dataset.params["classes"] == 10
    assert config.dataset.params["train_per_class"] == 500
    assert [spec.num_classes for spec in plan.ladder] == [10, 10]


def test_smoke_document_parses(smoke_config):
    config = ConfigController.parse_config_dict(smoke_config)
    plan = config.plan("smoke")
    assert [spec.depth for spec in plan.ladder] == [4, 3, 2]
    assert plan.train.batch_size == 12
    assert config.dataset.num_classes == 3


@pytest.mark.parametrize("mutate, expected", [
    (lambda d: d["plans"][0]["distill"].update(temprature=2.0), "plans.0.distill.temprature"),
    (lambda d: d["plans"][0].update(teacher="big"), "plans.0.teacher"),
    (lambda d: d.update(seed=3), "seed"),
    (lambda d: d["dataset"]["params"].update(arms=2), "dataset.params.arms"),
])
def test_unknown_keys_are_rejected_with_their_path(smoke_config, mutate, expected):
    document = copy.deepcopy(smoke_config)
    document["plans"][0].setdefault("distill", {})
    mutate(document)
    assert key_path_of(document) == expected


@pytest.mark.parametrize("section, key, value", [
    ("train", "epochs", "ten"),
    ("train", "epochs", 2.5),
    ("train", "nesterov", 1),
    ("train", "batch_size", 0),
    ("train", "lr_schedule", "cosine"),
    ("distill", "lambda_weight", 1.5),
    ("distill", "temperature", 0.0),
    ("distill", "drop_trials", True),
    ("distill", "gate_granularity", "row"),
])
def test_bad_values_report_their_path(smoke_config, section, key, value):
    document = copy.deepcopy(smoke_config)
    document["plans"][0].setdefault(section, {})[key] = value
    assert key_path_of(document) == f"plans.0.{section}.{key}"


def test_error_message_starts_with_key_path(smoke_config):
    smoke_config["plans"][0]["mode"] = "ensemble"
    with pytest.raises(ConfigError, match=r"^plans\.0\.mode: "):
        ConfigController.parse_config_dict(smoke_config)


def test_empty_seed_list_is_rejected(smoke_config):
    smoke_config["seeds"] = []
    assert key_path_of(smoke_config) == "seeds"


def test_plans_are_required(smoke_config):
    smoke_config["plans"] = []
    assert key_path_of(smoke_config) == "plans"


def test_duplicate_plan_names_are_rejected(smoke_config):
    smoke_config["plans"].append(copy.deepcopy(smoke_config["plans"][0]))
    assert key_path_of(smoke_config) == "plans.1.name"


def test_ladder_must_descend(smoke_config):
    smoke_config["plans"][0]["ladder"].reverse()
    assert key_path_of(smoke_config) == "plans.0.ladder"


def test_expand_fills_every_intermediate_depth():
    document = minimal_document()
    document["plans"][0]["ladder"] = [{"family": "mlp", "depth": 6, "widths": [8]}, {"family": "mlp", "depth": 2, "widths": [8]}]
    document["plans"][0]["expand"] = True
    config = ConfigController.parse_config_dict(document)
    assert [spec.depth for spec in config.plans[0].ladder] == [6, 5, 4, 3, 2]
    assert config.expand["p"] is True


def test_stochastic_drop_trials_must_fit_the_student(smoke_config):
    smoke_config["plans"][0]["mode"] = "dense_stochastic"
    smoke_config["plans"][0]["distill"] = {"drop_trials": 2}
    assert key_path_of(smoke_config) == "plans.0"


def test_stage_overrides_inherit_plan_distill(smoke_config):
    smoke_config["plans"][0]["distill"] = {"lambda_weight": 0.7}
    smoke_config["plans"][0]["stage_distill"] = {"1": {"temperature": 2.0}}
    plan = ConfigController.parse_config_dict(smoke_config).plans[0]
    assert plan.stage_distill[1].temperature == 2.0
    assert plan.stage_distill[1].lambda_weight == 0.7
    assert plan.stage_config(1).temperature == 2.0
    assert plan.stage_config(2).temperature == 4.0


def test_stage_override_keys_must_be_indices(smoke_config):
    smoke_config["plans"][0]["stage_distill"] = {"student": {"temperature": 2.0}}
    assert key_path_of(smoke_config) == "plans.0.stage_distill.student"


def test_synthetic_class_count_must_agree(smoke_config):
    smoke_config["dataset"]["num_classes"] = 5
    assert key_path_of(smoke_config) == "dataset.num_classes"


def test_synthetic_data_cannot_be_augmented(smoke_config):
    smoke_config["dataset"]["augment"] = True
    assert key_path_of(smoke_config) == "dataset.augment"


def test_mlp_is_rejected_on_images(idx_dir):
    document = idx_document()
    document["plans"][0]["ladder"][0]["family"] = "mlp"
    assert key_path_of(document, base_dir=idx_dir) == "plans.0.ladder.0.family"


def test_image_dataset_paths_resolve_against_base_dir(idx_dir):
    config = ConfigController.parse_config_dict(idx_document(), base_dir=idx_dir)
    assert config.dataset.images == str((idx_dir / "train-images").resolve())
    assert config.dataset.input_shape == (1, 28, 28)
    assert config.plans[0].ladder[0].input_shape == (1, 28, 28)


def test_missing_data_file_reports_its_key(idx_dir):
    assert key_path_of(idx_document(labels="absent"), base_dir=idx_dir) == "dataset.labels"


# ---------------------------------------------------------------------------
# parse_config / resolved echo
# ---------------------------------------------------------------------------

def test_resolved_config_parses_to_itself(smoke_config):
    resolved = ConfigController.resolved_config(ConfigController.parse_config_dict(smoke_config))
    again = ConfigController.resolved_config(ConfigController.parse_config_dict(json.loads(json.dumps(resolved))))
    assert again == resolved


def test_written_resolved_config_round_trips(tmp_path, smoke_config):
    config = ConfigController.parse_config_dict(smoke_config)
    path = ConfigController.write_resolved_config(config, tmp_path / "out" / "config.resolved.json")
    assert ConfigController.resolved_config(ConfigController.parse_config(path)) == ConfigController.resolved_config(config)


def test_config_file_paths_are_relative_to_the_file(idx_dir, write_config):
    path = write_config(idx_document(), name="experiment.json")
    config = ConfigController.parse_config(path)
    assert config.dataset.test_labels == str((idx_dir / "test-labels").resolve())


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        ConfigController.parse_config(tmp_path / "absent.json")


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"plans\": [", encoding="utf-8")
    with pytest.raises(ConfigError):
        ConfigController.parse_config(path)


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parent.parent / "configs"
    for name in ("spiral_mlp.json", "spiral_smoke.json"):
        config = ConfigController.parse_config(root / name)
        assert config.plans


# ---------------------------------------------------------------------------
# load_dataset
# ---------------------------------------------------------------------------

def test_load_synthetic_dataset(smoke_config):
    dataset = ConfigController.load_dataset(ConfigController.parse_config_dict(smoke_config).dataset)
    assert len(dataset.train()) == 36
    assert len(dataset.test()) == 18
    assert dataset.num_classes == 3


# ---------------------------------------------------------------------------
# plan variants
# ---------------------------------------------------------------------------

def test_drop_trial_variants_cover_every_admissible_t(smoke_config):
    plan = ConfigController.parse_config_dict(smoke_config).plans[0]
    variants = ConfigController.drop_trial_variants(plan)
    assert [v.name for v in variants] == ["smoke-t0", "smoke-t1"]
    assert {v.mode for v in variants} == {"dense_stochastic"}
    assert [v.stage_config(2).drop_trials for v in variants] == [0, 1]


def test_drop_trial_variants_reject_inadmissible_t(smoke_config):
    plan = ConfigController.parse_config_dict(smoke_config).plans[0]
    with pytest.raises(ConfigError):
        ConfigController.drop_trial_variants(plan, [2])


def test_mode_variants(smoke_config):
    plan = ConfigController.parse_config_dict(smoke_config).plans[0]
    variants = ConfigController.mode_variants(plan, ("direct_kd", "chain", "dense", "dense_stochastic"))
    assert [v.name for v in variants] == ["smoke-direct_kd", "smoke-chain", "smoke-dense", "smoke-dense_stochastic"]
    assert all(v.ladder == plan.ladder for v in variants)


def test_mode_variants_cap_drop_trials_on_short_ladders(smoke_config):
    smoke_config["plans"][0]["ladder"].pop(1)
    plan = ConfigController.parse_config_dict(smoke_config).plans[0]
    stochastic = ConfigController.mode_variants(plan, ["dense_stochastic"])[0]
    assert stochastic.distill.drop_trials == 0


def test_path_variants_keep_teacher_and_student():
    document = minimal_document()
    document["plans"][0]["ladder"] = [{"family": "mlp", "depth": d, "widths": [4]} for d in (5, 4, 3, 2)]
    document["plans"][0]["stage_distill"] = {"2": {"temperature": 2.0}}
    plan = ConfigController.parse_config_dict(document).plans[0]
    variants = ConfigController.path_variants(plan)
    assert [[spec.depth for spec in v.ladder] for v in variants] == [[5, 4, 3, 2], [5, 4, 2], [5, 3, 2], [5, 2]]
    assert [v.path_string() for v in variants][-1] == "T5→S2"
    assert all(v.stage_distill == {} for v in variants)
