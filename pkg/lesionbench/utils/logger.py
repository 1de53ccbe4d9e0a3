"""
Centralized logging configuration for lesionbench.

This module provides a unified logging interface with:
- Structured JSON logging to a rotating file for later parsing of runs
- Log levels driven by the environment mode
- A run id context variable correlating every line of one experiment run
"""

import logging
import json
import sys
import os
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Iterator
import traceback
from logging.handlers import RotatingFileHandler

from lesionbench.utils.config import config, EnvMode

# Context variable for run correlation
run_id: ContextVar[str] = ContextVar('run_id', default='')

class JSONFormatter(logging.Formatter):
    """JSON formatter for structured logging."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON with contextual information."""
        log_data = {
            'timestamp': datetime.now(timezone.utc).replace(tzinfo=None).isoformat(),
            'level': record.levelname,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
            'run_id': run_id.get(),
        }

        if hasattr(record, 'extra'):
            log_data.update(record.extra)

        if record.exc_info:
            log_data['exception'] = {
                'type': str(record.exc_info[0].__name__),
                'message': str(record.exc_info[1]),
                'traceback': traceback.format_exception(*record.exc_info)
            }

        return json.dumps(log_data, default=str)

@contextmanager
def bind_run_id(value: str) -> Iterator[None]:
    """Tag every log record emitted inside the block with a run id."""
    token = run_id.set(value)
    try:
        yield
    finally:
        run_id.reset(token)

def setup_logger(name: str = 'lesionbench') -> logging.Logger:
    """
    Set up the package logger with a console handler and, when LOG_DIR is
    configured, a rotating JSON file handler.

    Args:
        name: The name of the logger

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    if logger.handlers:
        return logger

    # Console handler - WARNING in production, LOG_LEVEL otherwise
    console_handler = logging.StreamHandler(sys.stdout)
    if config.ENV_MODE == EnvMode.PRODUCTION:
        console_handler.setLevel(logging.WARNING)
    else:
        console_handler.setLevel(config.LOG_LEVEL.upper())
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
    ))
    logger.addHandler(console_handler)

    if config.LOG_DIR:
        try:
            os.makedirs(config.LOG_DIR, exist_ok=True)
            log_file = os.path.join(config.LOG_DIR, f'{name}_{datetime.now().strftime("%Y%m%d")}.log')
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=10*1024*1024,  # 10MB
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(JSONFormatter())
            logger.addHandler(file_handler)
            logger.debug(f"Structured log file: {log_file}")
        except OSError as e:
            logger.warning(f"Could not set up file logging in {config.LOG_DIR}: {e}")

    return logger

# Create default logger instance
logger = setup_logger()
