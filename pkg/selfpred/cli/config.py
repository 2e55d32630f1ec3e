import sys
from typing import Annotated, Optional

from rich.prompt import Confirm
import typer

from selfpred.cli import APP_KWARGS
from selfpred.config import Config, get_config, user_config_path
from selfpred.utils import StrEnum


APP = typer.Typer(**APP_KWARGS)


class ConfigSection(StrEnum):
    """Top-level tables of the config file."""
    tolerance = 'tolerance'
    integrator = 'integrator'
    file = 'file'


def _confirm_write_path() -> bool:
    path = user_config_path()
    if path.exists() and (not Confirm.ask(f'Config file {path} already exists. Overwrite with the default?')):
        return False
    if not path.parent.exists():
        if not Confirm.ask(f'Directory {path.parent} does not exist. Create it?'):
            return False
        path.parent.mkdir(parents=True)
    return True

@APP.command(short_help='create a new config file')
def new(
    stdout: Annotated[bool, typer.Option('--stdout', help='output config file to stdout')] = False,
    yes: Annotated[bool, typer.Option('--yes', '-y', help='overwrite without prompting')] = False,
) -> None:
    """Create a config file holding the default numerical tolerances, integrator settings, and file options."""
    cfg = Config()
    if stdout:
        print('\n' + cfg.to_toml_string())
        return
    path = user_config_path()
    if yes:
        path.parent.mkdir(parents=True, exist_ok=True)
    elif not _confirm_write_path():
        return
    cfg.save(path)
    print(f'Saved default config file to {path}', file=sys.stderr)

@APP.command(short_help='print out path to the configurations')
def path() -> None:
    """Print out path to the configurations."""
    print(user_config_path())

@APP.callback(invoke_without_command=True)
@APP.command(short_help='show the configurations')
def show(
    ctx: typer.Context,
    section: Annotated[Optional[ConfigSection], typer.Option('--section', '-s', help='show only one table')] = None,
) -> None:
    """Show the active configurations (the user's config file if present, otherwise the defaults)."""
    if ctx.invoked_subcommand is None:
        cfg = get_config()
        if section is None:
            print(cfg.to_toml_string())
        else:
            print(f'[{section}]')
            print(getattr(cfg, str(section)).to_toml_string())
