"""Environment and run-configuration loading.

Precedence for a run: explicit CLI flags > ``--config`` JSON file > ``PgruConfig`` defaults.
Environment variables (optionally from ``.env`` in the project root) only provide the
defaults for the output directory, log level and job count.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import load_dotenv

from core.config import PgruConfig
from core.errors import DomainError, ParseError

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent.parent

DEFAULT_OUTPUT_DIR = "runs"
DEFAULT_LOG_LEVEL = "INFO"


def load_environment(env_path: Optional[Union[str, Path]] = None) -> bool:
    """Load ``.env`` without overriding variables already set in the process."""
    path = Path(env_path) if env_path else PROJECT_ROOT / ".env"
    if not path.exists():
        return False
    return load_dotenv(path, override=False)


def output_dir() -> Path:
    return Path(os.getenv("PGRU_OUTPUT_DIR", DEFAULT_OUTPUT_DIR))


def log_level() -> str:
    return os.getenv("PGRU_LOG_LEVEL", DEFAULT_LOG_LEVEL).strip().upper() or DEFAULT_LOG_LEVEL


def default_jobs() -> int:
    raw = os.getenv("PGRU_JOBS", "1").strip()
    try:
        jobs = int(raw)
    except ValueError:
        raise DomainError("PGRU_JOBS must be an integer", value=raw) from None
    if jobs < 1:
        raise DomainError("PGRU_JOBS must be positive", value=jobs)
    return jobs


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"config file is not valid JSON: {e.msg}", path=str(path), line=e.lineno) from None
    if not isinstance(data, dict):
        raise ParseError("config file must hold a JSON object", path=str(path))
    return data


def build_config(config_path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None) -> PgruConfig:
    """Merge defaults, the JSON config file and flag overrides (``None`` flags are skipped)."""
    cfg = PgruConfig(jobs=default_jobs())
    if config_path:
        cfg = cfg.merged(read_config_file(config_path))
        logger.info(f"Loaded run configuration from {config_path}")
    return cfg.merged(overrides or {})
