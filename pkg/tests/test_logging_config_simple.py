"""
Simple tests for the logging_config.py module
"""

import logging
import os
import shutil
import tempfile

from src.logging_config import (
    CleanTerminalHandler,
    ColoredFormatter,
    StudyLogger,
    setup_logging,
)


def _record(message, level=logging.INFO):
    return logging.LogRecord(
        name="test",
        level=level,
        pathname="test.py",
        lineno=1,
        msg=message,
        args=(),
        exc_info=None,
    )


class TestColoredFormatter:
    """Tests for the ColoredFormatter class."""

    def test_format_with_colors(self):
        """Test formatting with colors."""
        formatter = ColoredFormatter(fmt="%(levelname)s - %(message)s")
        formatted = formatter.format(_record("Corrector converged"))

        assert "\033[32m" in formatted  # Green for INFO
        assert "\033[0m" in formatted
        assert "Corrector converged" in formatted


class TestCleanTerminalHandler:
    """Tests for the CleanTerminalHandler class."""

    def test_defaults(self):
        """Test creation with default configuration."""
        handler = CleanTerminalHandler()

        assert handler.show_debug is False
        assert handler.last_message == ""

    def test_important_message_shown(self, capsys):
        """Test milestone messages reach stderr once."""
        handler = CleanTerminalHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        handler.emit(_record("Study completed in 1.0s"))
        handler.emit(_record("Study completed in 1.0s"))

        assert capsys.readouterr().err == "Study completed in 1.0s\n"

    def test_routine_message_hidden(self, capsys):
        """Test routine INFO messages stay in the file log."""
        handler = CleanTerminalHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        handler.emit(_record("Assembling operator"))
        handler.emit(_record("Assembling operator", logging.DEBUG))

        assert capsys.readouterr().err == ""

    def test_warnings_always_shown(self, capsys):
        """Test warnings bypass the keyword filter."""
        handler = CleanTerminalHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        handler.emit(_record("Residual high", logging.WARNING))

        assert "Residual high" in capsys.readouterr().err


class TestSetupLogging:
    """Tests for the setup_logging function."""

    def setup_method(self):
        """Setup for each test."""
        self.temp_dir = tempfile.mkdtemp()
        self.log_file = os.path.join(self.temp_dir, "logs", "run.log")

    def teardown_method(self):
        """Cleanup after each test."""
        root_logger = logging.getLogger()
        for handler in root_logger.handlers[:]:
            handler.close()
            root_logger.removeHandler(handler)
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_file_and_terminal_handlers(self):
        """Test both handlers are installed and the log directory is created."""
        setup_logging(log_file=self.log_file, log_level="INFO")
        root_logger = logging.getLogger()

        assert root_logger.level == logging.DEBUG
        assert any(isinstance(h, logging.FileHandler) for h in root_logger.handlers)
        assert any(isinstance(h, CleanTerminalHandler) for h in root_logger.handlers)
        assert os.path.exists(self.log_file)

    def test_verbose_terminal(self):
        """Test the verbose terminal uses a plain stream handler."""
        setup_logging(log_level="DEBUG", clean_terminal=False)
        handlers = logging.getLogger().handlers

        assert len(handlers) == 1
        assert isinstance(handlers[0].formatter, ColoredFormatter)

    def test_study_logger_reaches_file(self):
        """Test study milestones are written to the detailed log."""
        setup_logging(log_file=self.log_file, log_level="INFO")
        study = StudyLogger("test.study")
        study.log_start("converge", "0123456789abcdef", n_tasks=3)
        study.log_sample_failure(2, "ConvergenceError")
        study.log_completion(1.5, tasks_done=3, failures=1)
        for handler in logging.getLogger().handlers:
            handler.flush()

        with open(self.log_file, encoding="utf-8") as f:
            content = f.read()
        assert "Study started: converge (config 0123456789ab, 3 tasks)" in content
        assert "Sample 2 failed: ConvergenceError" in content
        assert "3 tasks, 1 failed" in content
