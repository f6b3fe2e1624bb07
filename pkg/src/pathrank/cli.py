"""CLI interface for pathrank - path-instruction compatibility at desk scale."""

from __future__ import annotations

import sys
from typing import NoReturn

import click
import typer

import pathrank.config.app
import pathrank.logging
from pathrank.autodiff.errors import AutodiffError
from pathrank.commands import ablate, analyze, ensemble, evaluate, generate, mine, train
from pathrank.logic.errors import PathrankError


PROG_NAME = "pathrank"
USAGE_CODE = "usage"


def build_app(config: pathrank.config.app.RunConfig) -> typer.Typer:
    """Build the Typer application after config is loaded."""
    app = typer.Typer(
        help="Train and evaluate path-instruction compatibility models on synthetic houses.",
        no_args_is_help=True,
    )

    @app.callback()
    def main_callback(
        ctx: typer.Context,
        verbose: bool | None = typer.Option(
            None,
            "--verbose",
            "-v",
            help="Enable verbose logging output",
        ),
    ) -> None:
        """Global CLI options."""
        ctx.obj = config
        if verbose is None and not config.verbose:
            return
        pathrank.logging.configure_logging(config.verbose if verbose is None else verbose)

    generate.register(app, config)
    mine.register(app, config)
    train.register(app, config)
    evaluate.register(app, config)
    ensemble.register(app, config)
    analyze.register(app, config)
    ablate.register(app, config)
    return app


def fail(code: str, message: str, exit_code: int) -> NoReturn:
    """Print a one-line error and exit."""
    first_line = message.strip().splitlines()[0] if message.strip() else code
    typer.echo(f"{PROG_NAME}: error: {code}: {first_line}", err=True)
    sys.exit(exit_code)


def main() -> None:
    """Run the CLI entry point."""
    args = sys.argv[1:] or ["--help"]
    try:
        app = build_app(pathrank.config.app.load_cli_config(sys.argv))
        command = typer.main.get_command(app)
        exit_code = command.main(
            args=args,
            prog_name=PROG_NAME,
            standalone_mode=False,
        )
    except (PathrankError, AutodiffError) as err:
        fail(err.code, str(err), 1)
    except click.ClickException as err:
        fail(USAGE_CODE, err.format_message(), err.exit_code)
    except click.Abort:
        fail("aborted", "interrupted", 130)
    if isinstance(exit_code, int) and exit_code != 0:
        sys.exit(exit_code)


if __name__ == "__main__":
    main()
