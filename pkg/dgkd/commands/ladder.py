"""
File: dgkd/commands/ladder.py
Description: ``ladder``: print the resolved ladder of each plan without training.
"""

import click

from dgkd.commands.common import load_experiment
from dgkd.controllers.zoo_controller import ZooController
from dgkd.models.model_spec import ladder_labels
from dgkd.utils.decorators import exit_on_error


@click.command("ladder")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="Experiment configuration (JSON).")
@click.pass_context
@exit_on_error
def ladder_command(ctx, config_path):
    """Show every plan's models from teacher to student with their parameter counts."""
    config, _ = load_experiment(ctx, config_path, None, None)
    for plan in config.plans:
        click.echo(f"{plan.name} ({plan.mode})")
        for label, spec in zip(ladder_labels(plan.ladder), plan.ladder):
            click.echo(f"  {label:<6} {spec.family:<10} depth={spec.depth:<3} "
                       f"parameters={ZooController.parameter_count(spec)}")
