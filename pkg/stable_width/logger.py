"""Logging for stable_width.

All modules log through children of the ``stable_width`` logger. The console
handler is attached by :func:`set_verbose` or :func:`setup_logging`; experiment
commands additionally keep a per-run log next to their outputs with
:func:`run_log`.
"""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

LOGGER_NAME = "stable_width"
LOG_FORMAT = "[%(levelname)s] %(message)s"
RUN_LOG_FORMAT = "%(asctime)s %(name)s [%(levelname)s] %(message)s"

LevelLike = Union[int, str]
_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}


def get_logger(child: Optional[str] = None) -> logging.Logger:
    """Return the package logger, or ``stable_width.<child>``."""
    return logging.getLogger(f"{LOGGER_NAME}.{child}" if child else LOGGER_NAME)


def resolve_level(level: LevelLike) -> int:
    """Map a level number or name onto a logging level; unknown values give INFO."""
    if isinstance(level, str):
        return _LEVELS.get(level.lower(), logging.INFO)
    return level if level in _LEVELS.values() else logging.INFO


def _console_handler() -> logging.Handler:
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def set_verbose(verbose: bool) -> None:
    """
    Switch the package logger between INFO and DEBUG.

    DEBUG adds per-layer scales, bisection iteration counts and the block
    schedule of replicate draws.
    """
    log = get_logger()
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(type(h) is logging.StreamHandler for h in log.handlers):
        log.addHandler(_console_handler())


def setup_logging(level: LevelLike = logging.INFO, log_file: Optional[Union[str, Path]] = None) -> logging.Logger:
    """
    Replace the package handlers with a console handler and an optional file.

    Args:
        level: Level number or name (default: INFO)
        log_file: Optional path of a log file; if it cannot be opened a
            warning is logged and only the console handler remains

    Returns:
        The package logger
    """
    log = get_logger()
    for handler in log.handlers[:]:
        log.removeHandler(handler)
        handler.close()
    log.setLevel(resolve_level(level))
    log.addHandler(_console_handler())
    if log_file:
        try:
            file_handler = logging.FileHandler(log_file)
        except OSError:
            log.warning(f"Failed to create log file: {log_file}")
        else:
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            log.addHandler(file_handler)
    return log


@contextmanager
def run_log(path: Union[str, Path]) -> Iterator[Optional[Path]]:
    """
    Copy every package record at DEBUG and above into ``path`` for the duration.

    Yields the log path, or None when the file could not be created (the run
    goes on with console logging only). The package logger is lowered to
    DEBUG while the block runs and restored afterwards.
    """
    log = get_logger()
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(path, mode="w")
    except OSError:
        log.warning(f"Failed to create run log: {path}")
        yield None
        return
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT))
    previous = log.level
    console_level = previous or logging.INFO
    consoles = [h for h in log.handlers if type(h) is logging.StreamHandler]
    for h in consoles:
        if h.level == logging.NOTSET:
            h.setLevel(console_level)
    log.addHandler(handler)
    log.setLevel(logging.DEBUG)
    try:
        yield path
    finally:
        log.removeHandler(handler)
        handler.close()
        log.setLevel(previous)
        for h in consoles:
            h.setLevel(logging.NOTSET)
