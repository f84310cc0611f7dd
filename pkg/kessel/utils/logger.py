"""
Logging configuration for Kessel
Console output plus a rotating run log shared by all simulation modules.
"""

import logging
import logging.handlers
import sys
import tempfile
from pathlib import Path
from typing import Dict, Optional

from kessel import LOG_DIR

DEFAULT_LOG_DIR = LOG_DIR
DEFAULT_LOG_LEVEL = logging.INFO
LOG_FILE = 'kessel.log'

CONSOLE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class KesselLogger:
    """Centralized logging configuration"""

    _loggers: Dict[str, logging.Logger] = {}
    _level: int = DEFAULT_LOG_LEVEL
    _max_bytes: int = 10 * 1024 * 1024
    _backup_count: int = 5

    @classmethod
    def get_logger(cls, name: str, log_file: Optional[str] = None,
                   level: Optional[int] = None) -> logging.Logger:
        """
        Get or create a logger instance.

        Args:
            name: Logger name (typically __name__)
            log_file: File name inside the log directory, kessel.log by default
            level: Logging level (defaults to the class-wide level)

        Returns:
            Configured logger instance
        """
        if name in cls._loggers:
            return cls._loggers[name]

        level = cls._level if level is None else level
        logger = logging.getLogger(name)
        logger.setLevel(level)
        logger.propagate = False

        if not logger.handlers:
            console = logging.StreamHandler(sys.stdout)
            console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
            console.setLevel(level)
            logger.addHandler(console)
            cls._attach_file_handler(logger, log_file or LOG_FILE, level)

        cls._loggers[name] = logger
        return logger

    @classmethod
    def _rotating_handler(cls, path: Path, level: int) -> logging.Handler:
        handler = logging.handlers.RotatingFileHandler(
            path, maxBytes=cls._max_bytes, backupCount=cls._backup_count, encoding='utf-8'
        )
        handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        handler.setLevel(level)
        return handler

    @classmethod
    def _attach_file_handler(cls, logger: logging.Logger, file_name: str, level: int):
        """Log to DEFAULT_LOG_DIR, else the temp dir; never raises"""
        candidates = [Path(DEFAULT_LOG_DIR), Path(tempfile.gettempdir())]
        for directory in candidates:
            try:
                directory.mkdir(parents=True, exist_ok=True)
                logger.addHandler(cls._rotating_handler(directory / file_name, level))
                return
            except (PermissionError, OSError) as e:
                last_error = e
        logger.error(f"No writable log directory, console only: {last_error}")

    @classmethod
    def set_level(cls, level: int):
        """Set log level for all loggers"""
        cls._level = level
        for logger in cls._loggers.values():
            logger.setLevel(level)
            for handler in logger.handlers:
                handler.setLevel(level)

    @classmethod
    def configure(cls, level: str = "INFO", max_file_size_mb: int = 10, backup_count: int = 5):
        """Apply the `logging` config section"""
        cls._max_bytes = max_file_size_mb * 1024 * 1024
        cls._backup_count = backup_count
        cls.set_level(getattr(logging, level.upper(), DEFAULT_LOG_LEVEL))


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance - convenience wrapper"""
    return KesselLogger.get_logger(name)
