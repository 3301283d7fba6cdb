"""
File: dgkd/__init__.py
Description: Command-line application factory, logging setup and environment settings
             for the densely guided distillation toolkit.
"""

import logging
import os

import click
from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def load_settings():
    """
    Read runtime settings from the environment (and a .env file when present).

    Returns:
        dict: log_level and output_dir
    """
    load_dotenv()
    return {
        "log_level": os.environ.get("DGKD_LOG_LEVEL", "INFO").upper(),
        "output_dir": os.environ.get("DGKD_OUTPUT_DIR", "results"),
    }


def configure_logging(level="INFO"):
    """Attach one stderr handler to the ``dgkd`` logger and set its level."""
    logger = logging.getLogger("dgkd")
    if not any(getattr(h, "_dgkd_handler", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._dgkd_handler = True
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger


def create_cli():
    """
    Command-line application factory.
    Creates the click group and registers every command module.
    """
    settings = load_settings()
    configure_logging(settings["log_level"])

    @click.group(name="dgkd", help="Densely guided knowledge distillation experiments.")
    @click.pass_context
    def cli(ctx):
        ctx.obj = settings

    # Register commands
    from dgkd.commands.run import run_command
    cli.add_command(run_command)

    from dgkd.commands.sweep import sweep_command
    cli.add_command(sweep_command)

    from dgkd.commands.compare import compare_command
    cli.add_command(compare_command)

    from dgkd.commands.paths import paths_command
    cli.add_command(paths_command)

    from dgkd.commands.report import report_command
    cli.add_command(report_command)

    from dgkd.commands.ladder import ladder_command
    cli.add_command(ladder_command)

    return cli


def run_cli(argv=None):
    """
    Run the command line and return its exit status instead of exiting.

    Args:
        argv (list[str], optional): Arguments without the program name; defaults to sys.argv[1:]

    Returns:
        int: 0 on success, 2 on usage errors, the error category status otherwise
    """
    cli = create_cli()
    try:
        result = cli.main(args=argv, prog_name="dgkd", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return result if isinstance(result, int) else 0
