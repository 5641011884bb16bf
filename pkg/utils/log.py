import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from config import LOG_PATH, LOGGING_DEBUG_MODE

PROJECT_LOGGER = "treelab"
LOG_FORMAT = '%(asctime)s:%(levelname)s:%(name)s: %(message)s'


def setup_logging(debug: Optional[bool] = None, log_path: Optional[Path] = None) -> logging.Logger:
    """Attach the rotating file handler to the project logger (idempotent)."""
    logger = logging.getLogger(PROJECT_LOGGER)
    debug = LOGGING_DEBUG_MODE if debug is None else debug
    logger.setLevel(logging.DEBUG if debug else logging.INFO)

    if any(isinstance(h, RotatingFileHandler) for h in logger.handlers):
        return logger

    path = Path(log_path or LOG_PATH)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = RotatingFileHandler(
        filename=str(path),
        encoding="utf-8",
        mode="a",
        maxBytes=5 * 1024 * 1024,
        backupCount=5
    )
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    return logger
