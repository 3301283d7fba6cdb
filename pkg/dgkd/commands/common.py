"""
File: dgkd/commands/common.py
Description: Options and execution helpers shared by the experiment commands.
"""

import logging
from dataclasses import replace
from pathlib import Path

import click

from dgkd.controllers.config_controller import ConfigController
from dgkd.controllers.results_controller import ResultsController, replica_dir
from dgkd.controllers.training_controller import StageCache, TrainingController
from dgkd.utils.errors import ConfigError

logger = logging.getLogger("dgkd.cli")


def parse_seeds(value):
    """Parse ``--seeds 0,1,2`` into a tuple of non-negative integers."""
    try:
        seeds = tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"seeds must be comma-separated integers, got {value!r}", "--seeds") from exc
    if not seeds or any(seed < 0 for seed in seeds):
        raise ConfigError(f"seeds must be non-negative and non-empty, got {value!r}", "--seeds")
    return seeds


def experiment_options(f):
    """Attach --config, --out and --seeds."""
    f = click.option("--seeds", default=None, help="Comma-separated master seeds (overrides the config).")(f)
    f = click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
                     help="Output directory (defaults to the config's output_dir, then DGKD_OUTPUT_DIR).")(f)
    f = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                     help="Experiment configuration (JSON).")(f)
    return f


def load_experiment(ctx, config_path, out_dir, seeds):
    """
    Parse the configuration and resolve the output directory and seeds.

    Returns:
        tuple[ExperimentConfig, Path]
    """
    config = ConfigController.parse_config(config_path)
    if seeds is not None:
        config = replace(config, seeds=parse_seeds(seeds))
    out = Path(out_dir or config.output_dir or ctx.obj["output_dir"])
    return config, out


def select_plan(config, plan_name):
    """Plan named by ``--plan``, or the first plan."""
    try:
        return config.plan(plan_name)
    except KeyError as exc:
        raise ConfigError(f"no plan named {plan_name!r}", "--plan") from exc


def execute_plans(config, plans, out_dir):
    """
    Run every plan on every seed, write per-replica artifacts and the result tables.

    Identical stages (for example the shared teacher of a mode comparison) are
    trained once per seed and reused.

    Returns:
        tuple[list[PlanReport], dict]: Reports and the results manifest
    """
    dataset = ConfigController.load_dataset(config.dataset)
    denominator = config.analysis.overlap_denominator
    reports = []
    reused = 0
    for seed in config.seeds:
        # Stages repeat only within one seed
        cache = StageCache()
        for plan in plans:
            replica = replace(plan, seed=seed)
            reports.append(TrainingController.run_plan(
                replica, dataset, out_dir=replica_dir(out_dir, seed, plan.name), cache=cache, denominator=denominator,
            ))
        reused += cache.hits
    logger.info("plans_executed | reports=%d | stages_reused=%d", len(reports), reused)
    manifest = ResultsController.emit_results(reports, out_dir, config)
    return reports, manifest


def echo_summary(reports):
    """Print the comparison table (per-seed and mean rows) to stdout."""
    _, rows = ResultsController.tables(reports)
    click.echo(f"{'plan':<32} {'mode':<17} {'seed':>5} {'student_top1':>13} {'overlap':>8}  path")
    for row in rows:
        seed = "mean" if row.kind == "mean" else str(row.seed)
        top1 = f"{row.student_top1:.4f}"
        if row.kind == "mean":
            top1 = f"{top1}±{row.student_top1_std:.4f}"
        click.echo(f"{row.plan:<32} {row.mode:<17} {seed:>5} {top1:>13} {row.mean_overlap:>8.4f}  {row.path}")
