"""Write the traceback of a failed command to ``<out-dir>/.last_traceback.txt``."""
import logging
import os
import traceback
from pathlib import Path
from typing import Optional, Union

logger = logging.getLogger(__name__)

TRACEBACK_FILE = ".last_traceback.txt"
_DIR: Optional[Path] = None


def set_traceback_dir(directory: Union[str, Path]) -> None:
    """Send later tracebacks to ``directory`` (normally the run's output directory)."""
    global _DIR
    _DIR = Path(directory)


def get_traceback_path() -> Path:
    """Configured directory, else the current working directory."""
    return (_DIR if _DIR is not None else Path(os.getcwd())) / TRACEBACK_FILE


def write_traceback(exc: BaseException) -> Optional[Path]:
    """Write ``exc``'s traceback; failures to write are logged, never raised."""
    tb = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
    if not tb.strip():
        tb = f"{type(exc).__name__}: {exc}\n"
    path = get_traceback_path()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(tb, encoding="utf-8")
        logger.debug(f"Traceback written to {path}")
        return path
    except OSError as e:
        logger.warning(f"Could not write traceback to {path}: {e}")
        return None
