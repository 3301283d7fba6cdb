"""
File: dgkd/commands/compare.py
Description: ``compare-modes``: run one ladder under several distillation modes.
"""

import click

from dgkd.commands.common import echo_summary, execute_plans, experiment_options, load_experiment, select_plan
from dgkd.controllers.config_controller import ConfigController
from dgkd.utils.decorators import exit_on_error


@click.command("compare-modes")
@experiment_options
@click.option("--plan", "plan_name", default=None, help="Plan whose ladder is compared (defaults to the first plan).")
@click.pass_context
@exit_on_error
def compare_command(ctx, config_path, out_dir, seeds, plan_name):
    """
    Run the ladder under each configured mode.

    Stages that are identical across modes, such as the teacher, are trained once per seed.
    """
    config, out = load_experiment(ctx, config_path, out_dir, seeds)
    plan = select_plan(config, plan_name)
    variants = ConfigController.mode_variants(plan, config.compare_modes)
    reports, _ = execute_plans(config, variants, out)
    echo_summary(reports)
