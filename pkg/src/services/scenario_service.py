import json
import tomllib
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import structlog
from pydantic import ValidationError

from ..models.exceptions import ConfigError
from ..models.result_models import ExperimentResult
from ..models.scenario_models import ScenarioConfig, format_pydantic_errors
from .aggregator_registry import resolve_rule_config, resolved_settings

logger = structlog.stdlib.get_logger()

ARTIFACT = "fedrep"


def artifact_version() -> str:
    try:
        return version(ARTIFACT)
    except PackageNotFoundError:
        return "0.1.0"


def parse_override(text: str) -> tuple[list[str], Any]:
    """
    'hra.t_low=5.0' -> (['hra', 't_low'], 5.0). The value is read as a TOML
    literal; anything that is not one is taken as a bare string.
    """
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    path = key.split(".")
    if any(not part for part in path):
        raise ConfigError(f"override key '{key}' has an empty segment", keys=[key])

    raw = raw.strip()
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return path, value


def apply_overrides(document: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Sets each dotted key in a copy of the raw document; validation happens afterwards."""
    result = json.loads(json.dumps(document))
    for text in overrides:
        path, value = parse_override(text)
        node = result
        for depth, part in enumerate(path[:-1]):
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                dotted = ".".join(path[: depth + 1])
                raise ConfigError(f"{dotted}: is a value, not a section", keys=[dotted])
            node = child
        node[path[-1]] = value
    return result


def read_document(path: str | Path) -> dict[str, Any]:
    """A scenario TOML file, or a JSON run manifest (its `config` entry)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except OSError as e:
        raise ConfigError(f"could not read config {path}: {e.strerror}")

    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
        if not isinstance(manifest, dict) or not isinstance(manifest.get("config"), dict):
            raise ConfigError(f"{path}: manifest has no 'config' section", keys=["config"])
        return manifest["config"]

    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}")


def validate_document(document: dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        message, fields = format_pydantic_errors(e)
        raise ConfigError(message, keys=list(fields)) from e


def parse_config(path: str | Path, overrides: list[str] | None = None) -> ScenarioConfig:
    """Reads, applies `key=value` overrides last, then validates against the full schema."""
    document = apply_overrides(read_document(path), overrides or [])
    cfg = validate_document(document)
    logger.debug("config.parsed", path=str(path), overrides=len(overrides or []))
    return cfg


def experiment_name(cfg: ScenarioConfig, config_path: str | Path, command: str) -> str:
    stem = cfg.name or Path(config_path).stem
    return f"{stem}-{command}"


def output_directory(
    out: str | Path, cfg: ScenarioConfig, config_path: str | Path, command: str
) -> Path:
    return Path(out) / experiment_name(cfg, config_path, command)


def build_manifest(
    command: str,
    cfg: ScenarioConfig,
    experiments: list[ExperimentResult],
) -> dict[str, Any]:
    """
    Everything needed to re-run bit-identically: the fully defaulted config,
    the derived run seeds and the rule settings each experiment resolved.
    Feeding the file back to `parse_config` gives an equal config.
    """
    rules = sorted({exp.rule for exp in experiments})
    return {
        "artifact": ARTIFACT,
        "version": artifact_version(),
        "command": command,
        "config": cfg.to_document(),
        "run_seeds": [run.seed for run in experiments[0].runs] if experiments else [],
        "resolved_rules": {
            rule: resolved_settings(rule, resolve_rule_config(rule, cfg.clients, cfg.rule_config()))
            for rule in rules
        },
        "experiments": [
            {
                "label": exp.label,
                "rule": exp.rule,
                "final_acc_mean": exp.final.mean,
                "final_acc_std": exp.final.std,
            }
            for exp in experiments
        ],
    }
