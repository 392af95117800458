"""
IBPLab Utils Package
Logging helpers shared by the library and the command line.
"""

from .logger import setup_logger, get_logger, kv

__all__ = ['setup_logger', 'get_logger', 'kv']
