"""
File: dgkd/commands/sweep.py
Description: ``sweep-t``: vary the number of dropped trainer sources with the plan held fixed.
"""

import click

from dgkd.commands.common import echo_summary, execute_plans, experiment_options, load_experiment, select_plan
from dgkd.controllers.config_controller import ConfigController
from dgkd.utils.decorators import exit_on_error


@click.command("sweep-t")
@experiment_options
@click.option("--plan", "plan_name", default=None, help="Plan to sweep (defaults to the first plan).")
@click.pass_context
@exit_on_error
def sweep_command(ctx, config_path, out_dir, seeds, plan_name):
    """Run one plan in dense_stochastic mode once per drop-trial count t."""
    config, out = load_experiment(ctx, config_path, out_dir, seeds)
    plan = select_plan(config, plan_name)
    variants = ConfigController.drop_trial_variants(plan, config.sweep_drop_trials)
    reports, _ = execute_plans(config, variants, out)
    echo_summary(reports)
