"""Environment variable loading and validation."""

import os
from typing import Optional

from dotenv import load_dotenv

from .models import DEFAULT_SEED, DEFAULT_WORK_BUDGET, RuntimeConfig
from ..system.parallel import default_thread_count
from ..utils.exceptions import ConfigurationError
from ..utils.logging import get_logger

logger = get_logger("config")


def load_runtime_config(env_file: Optional[str] = None, **overrides) -> RuntimeConfig:
    """
    Load and validate runtime settings from environment variables.

    Args:
        env_file: Optional path to .env file
        **overrides: Values from command-line flags; None means "not given"

    Returns:
        Validated runtime configuration

    Raises:
        ConfigurationError: If configuration is invalid
    """
    if env_file:
        if not os.path.exists(env_file):
            raise ConfigurationError(f"Environment file not found: {env_file}")
        load_dotenv(env_file)
    else:
        load_dotenv()

    logger.debug("Loading runtime configuration from environment variables")

    try:
        settings = {
            "seed": int(_get_env("SFPE_SEED", DEFAULT_SEED)),
            "threads": int(_get_env("SFPE_THREADS", default_thread_count())),
            "out_dir": _get_env("SFPE_OUT_DIR", "runs"),
            "work_budget": float(_get_env("SFPE_WORK_BUDGET", DEFAULT_WORK_BUDGET)),
            "log_level": str(_get_env("SFPE_LOG_LEVEL", "INFO")).upper(),
        }
        settings.update({key: value for key, value in overrides.items() if value is not None})
        config = RuntimeConfig(**settings)

        logger.debug(f"Runtime configuration: seed={config.seed}, threads={config.threads}")
        return config

    except (ValueError, TypeError) as e:
        logger.error(f"Configuration validation failed: {e}")
        raise ConfigurationError(f"Configuration validation failed: {e}") from e


def _get_env(key: str, default):
    """Get optional environment variable, falling back to the default when unset or blank."""
    value = os.getenv(key)
    if value is None or not value.strip():
        return default
    return value.strip()
