import copy
import hashlib
import itertools
import logging
import os
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from config import config
from errors import ConfigError, Diagnostic, UsageError
from models import RunConfig
from pydantic import ValidationError

logger = logging.getLogger(__name__)

PRESET_SUFFIX = ".yaml"
ENVIRONMENT_KINDS = ("decision", "prisoners-dilemma", "duopoly")


def read_file(file_path: str) -> str:
    """Read a config file as UTF-8 text"""
    with open(file_path, "r", encoding="utf-8") as file:
        return file.read()


def _line_of(text: str, loc: Sequence[Any]) -> Optional[int]:
    """Best-effort 1-based line of the innermost key of a validation error location"""
    lines = text.splitlines()
    line = None
    start = 0
    for key in loc:
        if not isinstance(key, str):
            continue
        pattern = re.compile(rf"^\s*-?\s*{re.escape(key)}\s*:")
        for n in range(start, len(lines)):
            if pattern.match(lines[n]):
                line = n + 1
                start = n + 1
                break
    return line


def _diagnostics(error: ValidationError, text: str) -> List[Diagnostic]:
    diagnostics = []
    for item in error.errors():
        # Drop union-member tags such as "prisoners-dilemma" from the path
        loc = [part for part in item["loc"] if not _is_tag(part)]
        diagnostics.append(
            Diagnostic(
                message=item["msg"],
                field=".".join(str(part) for part in loc) or None,
                line=_line_of(text, loc) if text else None,
            )
        )
    return diagnostics


def _is_tag(part: Any) -> bool:
    return isinstance(part, str) and part in ENVIRONMENT_KINDS


def validate_config(data: Any, source: str, text: str = "") -> RunConfig:
    """Validate a parsed mapping, translating pydantic errors into ConfigError"""
    if not isinstance(data, dict):
        raise ConfigError(source, [Diagnostic("top level must be a mapping")])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(source, _diagnostics(e, text)) from e


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse YAML text into a RunConfig"""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigError(source, [Diagnostic(str(e.problem), line=line)]) from e
    except yaml.YAMLError as e:
        raise ConfigError(source, [Diagnostic(str(e))]) from e
    return validate_config(data, source, text)


def load_config(file_path: str) -> RunConfig:
    """Read and validate a run configuration file"""
    return parse_config(read_file(file_path), source=file_path)


def dump_config(run_config: RunConfig) -> str:
    """Serialize a RunConfig to YAML; parse_config inverts it"""
    return yaml.safe_dump(
        run_config.model_dump(mode="json"), sort_keys=False, default_flow_style=None
    )


def config_hash(run_config: RunConfig) -> str:
    return hashlib.sha256(dump_config(run_config).encode()).hexdigest()


# Presets


def preset_names(preset_dir: Optional[str] = None) -> List[str]:
    preset_dir = preset_dir or config.PRESET_DIR
    if not os.path.isdir(preset_dir):
        logger.warning("Preset directory %s does not exist", preset_dir)
        return []
    return sorted(
        name[: -len(PRESET_SUFFIX)]
        for name in os.listdir(preset_dir)
        if name.endswith(PRESET_SUFFIX)
    )


def preset_path(name: str, preset_dir: Optional[str] = None) -> str:
    preset_dir = preset_dir or config.PRESET_DIR
    path = os.path.join(preset_dir, name + PRESET_SUFFIX)
    if not os.path.isfile(path):
        raise UsageError(
            f"Unknown preset '{name}'. Available: {', '.join(preset_names(preset_dir))}"
        )
    return path


def preset(name: str, preset_dir: Optional[str] = None) -> RunConfig:
    """The full run configuration of a named preset"""
    return load_config(preset_path(name, preset_dir))


def preset_catalog(preset_dir: Optional[str] = None) -> List[Tuple[str, str]]:
    """(name, description) of every preset"""
    return [
        (name, preset(name, preset_dir).description)
        for name in preset_names(preset_dir)
    ]


def resolve(target: str, preset_dir: Optional[str] = None) -> RunConfig:
    """A config file path, or else a preset name"""
    if os.path.isfile(target):
        return load_config(target)
    return preset(target, preset_dir)


# Overrides and grids


def _set_dotted(data: Dict[str, Any], path: str, value: Any) -> None:
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def with_overrides(
    run_config: RunConfig, overrides: Dict[str, Any], source: str = "overrides"
) -> RunConfig:
    """Copy of `run_config` with dotted-path overrides applied and re-validated"""
    if not overrides:
        return run_config
    data = copy.deepcopy(run_config.model_dump(mode="json"))
    for path, value in overrides.items():
        _set_dotted(data, path, value)
    return validate_config(data, source)


def grid_points(run_config: RunConfig) -> List[Tuple[Dict[str, Any], RunConfig]]:
    """
    Every point of the config's grid block, as (overrides, config) pairs.

    The cartesian product follows declaration order; the returned configs have
    an empty grid. A config without a grid yields a single point.
    """
    if not run_config.grid:
        return [({}, run_config)]
    axes = list(run_config.grid.keys())
    base = run_config.model_copy(update={"grid": {}})
    points = []
    for values in itertools.product(*(run_config.grid[axis] for axis in axes)):
        overrides = dict(zip(axes, values))
        points.append((overrides, with_overrides(base, overrides, source="grid")))
    return points
