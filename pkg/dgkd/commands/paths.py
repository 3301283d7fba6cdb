"""
File: dgkd/commands/paths.py
Description: ``paths``: enumerate every distillation path through the assistant models.
"""

import click

from dgkd.commands.common import echo_summary, execute_plans, experiment_options, load_experiment, select_plan
from dgkd.controllers.config_controller import ConfigController
from dgkd.utils.decorators import exit_on_error


@click.command("paths")
@experiment_options
@click.option("--plan", "plan_name", default=None, help="Plan whose ladder is enumerated (defaults to the first plan).")
@click.pass_context
@exit_on_error
def paths_command(ctx, config_path, out_dir, seeds, plan_name):
    """Run the plan's mode over each subset of assistants between teacher and student."""
    config, out = load_experiment(ctx, config_path, out_dir, seeds)
    plan = select_plan(config, plan_name)
    variants = ConfigController.path_variants(plan)
    reports, _ = execute_plans(config, variants, out)
    echo_summary(reports)
