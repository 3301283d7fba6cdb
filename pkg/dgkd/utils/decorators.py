"""
File: dgkd/utils/decorators.py
Description: Custom decorators for the command-line surface.
             Turns toolkit errors into a diagnostic line and a category exit status.
"""

import logging
from functools import wraps

import click

from dgkd.utils.errors import DGKDError

logger = logging.getLogger("dgkd.cli")

CATEGORY_NAMES = {
    1: "error",
    3: "config error",
    4: "dataset error",
    5: "numeric error",
    6: "no reports",
    7: "checkpoint error",
}


def exit_on_error(f):
    """
    Decorator that maps a DGKDError raised by a command to its exit status.

    Args:
        f (function): Click command callback

    Returns:
        function: Callback that prints ``<category>: <message>`` to stderr and exits
                  with the error's ``exit_code``

    Usage:
        @click.command("run")
        @exit_on_error
        def run_command(...):
            ...
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except DGKDError as exc:
            category = CATEGORY_NAMES.get(exc.exit_code, "error")
            logger.debug("command_failed | error=%s", type(exc).__name__, exc_info=True)
            click.echo(f"{category}: {exc}", err=True)
            raise click.exceptions.Exit(exc.exit_code) from exc

    return decorated_function
