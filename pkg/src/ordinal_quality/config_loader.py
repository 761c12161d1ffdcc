from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from .settings import Settings

HOME_DIR = Path.home()
CONFIG_FILENAME = "config.yaml"
LOGGING_FILENAME = "logging.yaml"
INLINE_LOGGING_KEYS = ("level", "show_time", "show_path")

ACTIVE_CONFIG_FILES: list[Path] = []

_TAG_COLORS = {
    "startup": ("S", "#5f875f", True),
    "config": ("cfg", "#5f5f87", True),
    "io": ("io", "#005f87", True),
    "weights": ("w", "#875f87", True),
    "pca": ("pca", "#008787", False),
    "fit": ("fit", "#875f00", True),
    "score": ("sc", "#5f8700", True),
    "eval": ("ev", "#af5f00", True),
    "synth": ("syn", "#444444", True),
    "state": ("st", "#875f00", True),
}


def default_logging_config() -> dict[str, Any]:
    return {
        "level": "INFO",
        "console": True,
        "file_enabled": False,
        "file": "logs/ordinal-quality.log",
        "show_time": True,
        "time_format": "%H:%M:%S",
        "show_level": False,
        "show_path": False,
        "logs_width": 140,
        "tags_width": 16,
        "tag_filter_mode": "any",
        "unknown_tags": "hide",
        "show_all_tags_errors": True,
        "show_all_tags_warnings": True,
        "level_decor": {level: {"symbol": "█"} for level in ("notset", "debug", "info", "warning", "error", "critical")},
        "loggers": {"matplotlib": "WARNING", "numexpr": "WARNING"},
        "tags": {
            tag: {"show": show, "icon": icon, "tag_color": color, "icon_color": "#ffffff"}
            for tag, (icon, color, show) in _TAG_COLORS.items()
        },
    }


def config_search_dirs(app_name: str, cwd: Path | None = None) -> list[Path]:
    current_dir = cwd or Path.cwd()
    return [
        HOME_DIR / ".config" / app_name,
        Path("/etc") / app_name,
        current_dir,
        current_dir / "config",
    ]


def resolve_config_files(app_name: str, config_file: str | None, cwd: Path | None = None) -> list[str]:
    """The explicit file, or else the first ``config.yaml`` found in the search directories."""
    if config_file:
        return [str(Path(config_file).expanduser())]
    for directory in config_search_dirs(app_name, cwd=cwd):
        candidate = directory / CONFIG_FILENAME
        if candidate.exists():
            return [str(candidate)]
    return []


def set_active_config_files(files: list[str]) -> None:
    global ACTIVE_CONFIG_FILES
    ACTIVE_CONFIG_FILES = [Path(file).expanduser() for file in files]


def get_active_config_files() -> list[Path]:
    return list(ACTIVE_CONFIG_FILES)


def merge_dicts(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_dicts(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_yaml_mapping(path: Path) -> dict[str, Any]:
    with path.open("r", encoding="utf-8") as file:
        loaded = yaml.safe_load(file) or {}
    if not isinstance(loaded, dict):
        raise ValueError(f"{path} must contain a mapping at the top level, found {type(loaded).__name__}")
    return loaded


def load_settings(config_files: list[str], overrides: dict[str, Any] | None = None) -> Settings:
    """Merge config files in order, then command-line overrides, and validate."""
    raw_config: dict[str, Any] = {}
    for config_file in config_files:
        config_path = Path(config_file).expanduser()
        if config_path.exists():
            raw_config = merge_dicts(raw_config, load_yaml_mapping(config_path))
    return Settings.model_validate(merge_dicts(raw_config, overrides or {}))


def resolve_logging_config_file(cfg: Settings, app_name: str, cwd: Path | None = None) -> Path | None:
    if cfg.app.logging_config:
        return Path(cfg.app.logging_config).expanduser()
    directories = [path.parent for path in ACTIVE_CONFIG_FILES] + config_search_dirs(app_name, cwd=cwd)
    for directory in directories:
        if (directory / LOGGING_FILENAME).exists():
            return directory / LOGGING_FILENAME
    return None


def load_logging_config(cfg: Settings, app_name: str, cwd: Path | None = None) -> dict[str, Any]:
    """Defaults, then the inline ``logging`` keys of the settings, then ``logging.yaml``."""
    inline = {key: cfg.logging[key] for key in INLINE_LOGGING_KEYS if key in cfg.logging}
    config = merge_dicts(default_logging_config(), inline)

    logging_path = resolve_logging_config_file(cfg, app_name, cwd=cwd)
    if logging_path and logging_path.exists():
        config = merge_dicts(config, load_yaml_mapping(logging_path))
    return config
