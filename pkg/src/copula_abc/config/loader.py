"""Загрузка и валидация конфигурации из YAML/JSON + .env."""
import hashlib
import json
import os
from pathlib import Path

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from copula_abc.config.models import AppConfig
from copula_abc.errors import ConfigError

# Переменные окружения, переопределяющие конфигурацию
ENV_OVERRIDES = {
    "COPULA_ABC_LOG_DIR": ("logging", "log_dir"),
    "COPULA_ABC_THREADS": (None, "threads"),
    "COPULA_ABC_SEED": (None, "seed"),
}


def _apply_env_overrides(raw: dict) -> dict:
    for variable, (section, key) in ENV_OVERRIDES.items():
        value = os.getenv(variable)
        if not value:
            continue
        target = raw if section is None else raw.setdefault(section, {})
        target[key] = value
    return raw


def format_validation_error(error: ValidationError) -> str:
    lines = ["Ошибка валидации конфигурации:"]
    for item in error.errors():
        loc = " → ".join(str(part) for part in item["loc"])
        lines.append(f"  • [{loc}] {item['msg']}")
    return "\n".join(lines)


def load_config(config_path: str | Path | None = None) -> AppConfig:
    """
    Загружает конфигурацию из YAML (или JSON) и дополняет значениями из окружения.

    Parameters
    ----------
    config_path : str | Path, optional
        Путь к файлу конфигурации. Если None — конфигурация по умолчанию
        с переопределениями из окружения.

    Returns
    -------
    AppConfig
        Валидированная конфигурация.

    Raises
    ------
    ConfigError
        Если файл не найден, не разбирается или не прошёл валидацию.
    """
    # 1. Загружаем .env
    load_dotenv()

    # 2. Читаем файл; JSON является подмножеством YAML
    raw: dict = {}
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError(f"Файл конфигурации не найден: {config_path.resolve()}")
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Ошибка парсинга конфигурации: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("Корень конфигурации должен быть словарём")

    # 3. Переопределения из окружения
    raw = _apply_env_overrides(raw)

    # 4. Валидация
    try:
        return AppConfig(**raw)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def config_digest(config: AppConfig) -> str:
    """SHA-256 канонического JSON валидированной конфигурации."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
