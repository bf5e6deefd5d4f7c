"""
Experiment configuration files.

A config file is a plain-text INI document with the sections ``[cohort]``,
``[builder]``, ``[model]``, ``[train]`` and ``[report]``; keys are the field
names of the corresponding pydantic models. Command-line overrides use
``section.key=value`` and win over the file. List-valued keys take
comma-separated values.
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import ValidationError

from popgraph.errors import ConfigError, config_error_from
from popgraph.models import ExperimentConfig

logger = logging.getLogger(__name__)

SECTIONS = tuple(ExperimentConfig.model_fields)
LIST_KEYS = {("report", "builders"), ("report", "models"), ("train", "split_fractions")}
NULLABLE_KEYS = {("cohort", "phenotype_snr")}


def parse_override(text: str) -> tuple:
    """
    Split ``section.key=value``.

    Raises:
        ConfigError: If the override is malformed
    """
    target, sep, value = text.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override '{text}' must look like section.key=value")
    return section, key.strip(), value.strip()


def _coerce(section: str, key: str, raw: str) -> Any:
    if (section, key) in LIST_KEYS:
        return [item.strip() for item in raw.split(",") if item.strip()]
    if (section, key) in NULLABLE_KEYS and raw.lower() in ("", "none", "null"):
        return None
    return raw


def read_config_file(path: Union[str, Path]) -> Dict[str, Dict[str, str]]:
    """
    Raw ``{section: {key: value}}`` mapping of an INI config file.

    Raises:
        ConfigError: If the file is unreadable or names an unknown section
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config file '{path}': {e}") from e
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s) {unknown}; expected {list(SECTIONS)}")
    return {section: dict(parser[section]) for section in parser.sections()}


def load_experiment_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
) -> ExperimentConfig:
    """
    Resolve defaults, then the config file, then ``section.key=value`` overrides.

    Raises:
        ConfigError: Naming the offending section and field
    """
    raw: Dict[str, Dict[str, str]] = read_config_file(path) if path else {}
    for text in overrides:
        section, key, value = parse_override(text)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section '{section}' in override '{text}'")
        raw.setdefault(section, {})[key] = value

    data = {
        section: {key: _coerce(section, key, value) for key, value in values.items()}
        for section, values in raw.items()
    }
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise config_error_from(e) from None
    logger.debug(f"[Config] Resolved configuration from {path or 'defaults'} with {len(raw)} section(s)")
    return config


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Copy of ``config`` with every seed set to ``seed``."""
    return config.model_copy(update={
        section: getattr(config, section).model_copy(update={"seed": seed})
        for section in ("cohort", "builder", "model", "train")
    })


def write_config_file(config: ExperimentConfig, path: Union[str, Path]) -> None:
    """Write ``config`` as an INI file that :func:`load_experiment_config` reads back."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, values in config.model_dump(mode="json").items():
        parser[section] = {
            key: ",".join(str(v) for v in value) if isinstance(value, list)
            else ("none" if value is None else str(value).lower() if isinstance(value, bool) else str(value))
            for key, value in values.items()
        }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        parser.write(handle)
