"""
File: dgkd/commands/run.py
Description: ``run``: execute every configured plan over all seeds.
"""

import click

from dgkd.commands.common import echo_summary, execute_plans, experiment_options, load_experiment
from dgkd.utils.decorators import exit_on_error


@click.command("run")
@experiment_options
@click.pass_context
@exit_on_error
def run_command(ctx, config_path, out_dir, seeds):
    """Train every plan of the configuration on every seed."""
    config, out = load_experiment(ctx, config_path, out_dir, seeds)
    reports, _ = execute_plans(config, config.plans, out)
    echo_summary(reports)
