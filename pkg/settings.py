# settings.py
import logging
import os
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, Field

TOOL_VERSION = "1.0.0"

# ========== ENVIRONMENT ==========
WORKERS_ENV = "EGE_HARNESS_WORKERS"
OUTPUT_DIR_ENV = "EGE_HARNESS_OUTPUT_DIR"
ORACLE_BUDGET_ENV = "EGE_HARNESS_ORACLE_BUDGET"
LOG_LEVEL_ENV = "EGE_HARNESS_LOG_LEVEL"


class Settings(BaseModel):
    workers: Optional[int] = Field(default=None, ge=1)
    output_dir: str = "runs"
    oracle_budget: int = Field(default=10_000, ge=1)
    log_level: str = "INFO"


def _read_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def load_settings() -> Settings:
    """Read settings from the environment, without caching"""
    values = {
        "workers": _read_int(WORKERS_ENV),
        "output_dir": os.getenv(OUTPUT_DIR_ENV, "runs"),
        "log_level": os.getenv(LOG_LEVEL_ENV, "INFO").upper(),
    }
    budget = _read_int(ORACLE_BUDGET_ENV)
    if budget is not None:
        values["oracle_budget"] = budget
    return Settings(**values)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger()
    if not any(getattr(h, "_ege_harness", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handler._ege_harness = True
        root.addHandler(handler)
    root.setLevel(level)
