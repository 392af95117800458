"""
IBPLab Logger Module
Provides consistent logging for the library, the harness and the CLI.
"""

import logging
import sys
from typing import Any, Optional, TextIO


def setup_logger(name: str = 'ibplab', level: int = logging.INFO,
                 stream: Optional[TextIO] = None) -> logging.Logger:
    """
    Set up a logger with consistent formatting.

    Args:
        name: Logger name (default: 'ibplab')
        level: Logging level (default: logging.INFO)
        stream: Output stream (default: sys.stderr, so reports on stdout stay clean)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    if logger.handlers:
        logger.setLevel(level)
        for handler in logger.handlers:
            handler.setLevel(level)
        return logger

    logger.setLevel(level)

    console_handler = logging.StreamHandler(stream or sys.stderr)
    console_handler.setLevel(level)

    formatter = logging.Formatter(
        fmt='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_handler.setFormatter(formatter)

    logger.addHandler(console_handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger with the specified name.

    Args:
        name: Logger name (will be prefixed with 'ibplab.')

    Returns:
        Logger instance
    """
    if not name.startswith('ibplab.'):
        name = f'ibplab.{name}'
    return logging.getLogger(name)


def kv(event: str, **fields: Any) -> str:
    """Render a structured log line: ``event=<event> key=value ...``."""
    parts = [f"event={event}"]
    for key, value in fields.items():
        text = str(value)
        if ' ' in text or '=' in text:
            text = '"' + text.replace('"', "'") + '"'
        parts.append(f"{key}={text}")
    return ' '.join(parts)
