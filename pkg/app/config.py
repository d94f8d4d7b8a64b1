"""Run configuration files and the run manifest."""

import hashlib
import json
import logging
import tomllib
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.errors import ConfigError
from app.models import RunConfig
from app.toric_code import NoiseKind

logger = logging.getLogger(__name__)

PACKAGE_NAME = "neat-toric-decoder"
MANIFEST_FILENAME = "manifest.json"

# keys that change how a run is executed but not what it computes
_EXECUTION_KEYS = {"workers", "out_dir"}


def read_config_file(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise ConfigError("config", f"file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        match path.suffix.lower():
            case ".toml":
                raw = tomllib.loads(text)
            case ".json":
                raw = json.loads(text)
            case _:
                raise ConfigError("config", f"unsupported config format {path.suffix!r}, use .toml or .json")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError("config", f"cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config", f"{path} must hold a table of keys")
    return raw


def build_config(raw: dict[str, Any], **overrides: Any) -> RunConfig:
    """Validate raw keys, with non-None overrides taking precedence."""
    unknown = sorted(set(raw) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    values = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        cfg = RunConfig.model_validate(values)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or "config"
        raise ConfigError(key, error["msg"]) from e
    _check_rates(cfg)
    return cfg


def _check_rates(cfg: RunConfig) -> None:
    for key, rates in (
        ("training_rates", cfg.rates_for_training()),
        ("monitor_rates", cfg.monitor_rates),
        ("eval_p_grid", cfg.eval_grid()),
    ):
        if not rates:
            raise ConfigError(key, "needs at least one error rate")
        if any(not 0.0 <= p <= 1.0 for p in rates):
            raise ConfigError(key, f"error rates must lie in [0, 1], got {rates}")
        if cfg.depolarizing_per_pauli and any(p > 1 / 3 for p in rates):
            raise ConfigError(key, "per-Pauli depolarizing noise needs every rate <= 1/3")
    if cfg.depolarizing_per_pauli and cfg.mode != NoiseKind.DEPOLARIZING:
        raise ConfigError("depolarizing_per_pauli", "only applies to depolarizing mode")
    if cfg.elitism > cfg.pop_size:
        raise ConfigError("elitism", f"cannot exceed pop_size ({cfg.pop_size})")


def load_config(path: Path, **overrides: Any) -> RunConfig:
    cfg = build_config(read_config_file(path), **overrides)
    logger.debug(f"loaded config from {path}: {cfg.model_dump()}")
    return cfg


def code_version() -> str:
    try:
        return version(PACKAGE_NAME)
    except PackageNotFoundError:
        logger.debug(f"{PACKAGE_NAME} is not installed, recording code version as unknown")
        return "unknown"


def canonical_config(cfg: RunConfig) -> dict[str, Any]:
    return {k: v for k, v in sorted(cfg.model_dump(mode="json").items()) if k not in _EXECUTION_KEYS}


def manifest_id(cfg: RunConfig) -> str:
    """SHA-256 of the canonical config JSON; identical for runs that must produce identical results."""
    payload = json.dumps(canonical_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_manifest(cfg: RunConfig, out_dir: Path) -> str:
    ident = manifest_id(cfg)
    manifest = {
        "manifest_id": ident,
        "seed": cfg.seed,
        "code_version": code_version(),
        "config": canonical_config(cfg),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / MANIFEST_FILENAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ident
