import dataclasses
import json
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from selfpred import logger
from selfpred.config import ExperimentConfig
from selfpred.errors import ConfigFileError
from selfpred.mdp import Mdp, load_mdp


# default settings for typer app
APP_KWARGS: dict[str, Any] = {
    'add_completion': False,
    'context_settings': {
        'help_option_names': ['-h', '--help']
    },
    # if True, display "pretty" (but very verbose) exceptions
    'pretty_exceptions_enable': False
}


@logger.catch_errors(ConfigFileError)
def _load_mdp(mdp_path: Path) -> Mdp:
    logger.info(f'Loading MDP: {mdp_path}')
    return load_mdp(mdp_path)


def load_experiment_config(config_path: Optional[Path] = None, **overrides: Any) -> ExperimentConfig:
    """Loads an experiment configuration from a JSON file (or uses the defaults), then applies any overrides that are not None."""
    if config_path is None:
        config = ExperimentConfig()
    else:
        logger.info(f'Loading experiment config: {config_path}')
        try:
            with open(config_path) as f:
                config = ExperimentConfig.from_dict(json.load(f))
        except (json.JSONDecodeError, OSError, TypeError, ValidationError) as e:
            raise ConfigFileError(f'Invalid experiment config {config_path}: {e}') from e
    kwargs = {key: val for (key, val) in overrides.items() if (val is not None)}
    return dataclasses.replace(config, **kwargs) if kwargs else config
