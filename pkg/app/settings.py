"""
Environment settings. Values come from the process environment, which
app.main populates from .env and .env.<ENVIRONMENT> via python-dotenv.
"""

import logging
import os
from pathlib import Path

from pydantic import BaseModel, Field

from app.exceptions import ConfigError

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    log_level: str = Field("INFO", description="LASSO_LOG_LEVEL")
    workers: int = Field(1, ge=1, description="LASSO_WORKERS")
    out_dir: Path = Field(Path("artifacts"), description="LASSO_OUT_DIR")
    progress: bool = Field(True, description="LASSO_PROGRESS")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got '{raw}'", field=name)


def get_settings() -> Settings:
    level = os.environ.get("LASSO_LOG_LEVEL", "INFO").upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"LASSO_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got '{level}'",
                          field="LASSO_LOG_LEVEL")
    workers = _env_int("LASSO_WORKERS", 1)
    if workers < 1:
        raise ConfigError(f"LASSO_WORKERS must be >= 1, got {workers}", field="LASSO_WORKERS")
    return Settings(
        log_level=level,
        workers=workers,
        out_dir=Path(os.environ.get("LASSO_OUT_DIR", "artifacts")),
        progress=os.environ.get("LASSO_PROGRESS", "1").strip().lower() not in ("0", "false", "no", "off"),
    )
