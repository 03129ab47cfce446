"""Tests for the logger module."""
import logging

from stable_width.logger import LOGGER_NAME, get_logger, resolve_level, run_log, set_verbose, setup_logging


def test_setup_logging(tmp_path):
    """Test setting up logging."""
    logger = setup_logging()
    assert logger.level == logging.INFO
    assert len(logger.handlers) == 1

    logger = setup_logging(level="debug")
    assert logger.level == logging.DEBUG

    log_file = tmp_path / "test.log"
    logger = setup_logging(log_file=log_file)
    assert any(isinstance(h, logging.FileHandler) for h in logger.handlers)
    logger.info("layer 2: sigma = 1.5")
    assert "layer 2: sigma = 1.5" in log_file.read_text()
    setup_logging()

def test_resolve_level():
    """Names and numbers map onto levels; anything else gives INFO."""
    assert resolve_level("WARNING") == logging.WARNING
    assert resolve_level(logging.ERROR) == logging.ERROR
    assert resolve_level(999) == logging.INFO
    assert resolve_level("loud") == logging.INFO

def test_setup_logging_invalid_file(tmp_path):
    """A log file that cannot be opened leaves only the console handler."""
    logger = setup_logging(log_file=tmp_path / "nonexistent" / "test.log")
    assert len(logger.handlers) == 1
    assert not any(isinstance(h, logging.FileHandler) for h in logger.handlers)

def test_child_loggers_propagate():
    """Module loggers are children of the package logger."""
    child = get_logger("mlp")
    assert child.name == f"{LOGGER_NAME}.mlp"
    assert child.parent is get_logger()

def test_set_verbose():
    """Verbose switches the package logger to DEBUG."""
    set_verbose(True)
    assert get_logger().level == logging.DEBUG
    set_verbose(False)
    assert get_logger().level == logging.INFO

def test_run_log_captures_debug_and_restores(tmp_path):
    """The run log records DEBUG from child loggers; the level is restored afterwards."""
    set_verbose(False)
    path = tmp_path / "runs" / "x.log"
    with run_log(path) as opened:
        assert opened == path
        get_logger("heavy_tail").debug("bisection took 40 steps")
    assert get_logger().level == logging.INFO
    assert not any(isinstance(h, logging.FileHandler) for h in get_logger().handlers)
    assert "bisection took 40 steps" in path.read_text()

def test_run_log_unwritable(tmp_path):
    """An unusable run-log path yields None and the block still runs."""
    blocker = tmp_path / "file"
    blocker.write_text("")
    with run_log(blocker / "x.log") as opened:
        assert opened is None
