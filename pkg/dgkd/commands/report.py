"""
File: dgkd/commands/report.py
Description: ``report``: rebuild the result tables from stored plan reports.
"""

import click

from dgkd.commands.common import echo_summary
from dgkd.controllers.results_controller import REPORT_DIR, ResultsController
from dgkd.utils.decorators import exit_on_error


@click.command("report")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Output directory of earlier runs (defaults to DGKD_OUTPUT_DIR).")
@click.pass_context
@exit_on_error
def report_command(ctx, out_dir):
    """Recompute stages.csv, summary.csv and reports.json without re-training."""
    out_dir = out_dir or ctx.obj["output_dir"]
    ResultsController.recompute_report(out_dir)
    echo_summary(ResultsController.collect_reports(out_dir))
    click.echo(f"tables written to {out_dir}/{REPORT_DIR}")
