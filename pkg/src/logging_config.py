"""
Configurable logging with a detailed file log and a clean terminal.
"""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, ClassVar


class ColoredFormatter(logging.Formatter):
    """Formatter with ANSI colors for the terminal."""

    COLORS: ClassVar = {
        "DEBUG": "\033[36m",  # Cyan
        "INFO": "\033[32m",  # Green
        "WARNING": "\033[33m",  # Yellow
        "ERROR": "\033[31m",  # Red
        "CRITICAL": "\033[35m",  # Magenta
        "RESET": "\033[0m",
    }

    def format(self, record):
        """Format the record with a level color."""
        color = self.COLORS.get(record.levelname, self.COLORS["RESET"])
        record.levelname = f"{color}{record.levelname}{self.COLORS['RESET']}"

        return super().format(record)


class CleanTerminalHandler(logging.Handler):
    """Handler that only shows the essential run messages on the terminal."""

    IMPORTANT_KEYWORDS: ClassVar = [
        "study",
        "corrector",
        "homogenized",
        "solve",
        "sample",
        "epsilon",
        "converged",
        "completed",
        "failed",
        "written",
        "warning",
        "violation",
    ]

    def __init__(self, show_debug: bool = False):
        """
        Initialize the handler.

        Args:
            show_debug: If True, DEBUG messages are shown on the terminal
        """
        super().__init__()
        self.show_debug = show_debug
        self.last_message = ""

    def emit(self, record):
        """Emit only important records."""
        show_in_terminal = False

        if record.levelno >= logging.WARNING:
            show_in_terminal = True
        elif record.levelno >= logging.INFO:
            message = record.getMessage().lower()
            if any(keyword in message for keyword in self.IMPORTANT_KEYWORDS):
                show_in_terminal = True
        elif record.levelno >= logging.DEBUG and self.show_debug:
            show_in_terminal = True

        if show_in_terminal:
            try:
                message = self.format(record)
                # Drop consecutive duplicates
                if message != self.last_message:
                    print(message, file=sys.stderr)
                    self.last_message = message
            except Exception:
                self.handleError(record)


def setup_logging(
    log_level: str = "INFO",
    log_file: str | None = None,
    clean_terminal: bool = True,
    show_debug_in_terminal: bool = False,
) -> None:
    """
    Configure the logging system.

    Args:
        log_level: Terminal level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Path of the detailed log file (optional)
        clean_terminal: If True, only essential messages reach the terminal
        show_debug_in_terminal: If True, DEBUG messages reach the terminal
    """
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    file_formatter = logging.Formatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    if clean_terminal:
        terminal_formatter = logging.Formatter(fmt="%(levelname)s: %(message)s")
    else:
        terminal_formatter = ColoredFormatter(
            fmt="%(asctime)s - %(levelname)s - %(message)s", datefmt="%H:%M:%S"
        )

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)  # file always at DEBUG
        file_handler.setFormatter(file_formatter)
        root_logger.addHandler(file_handler)

    terminal_handler: CleanTerminalHandler | logging.StreamHandler
    if clean_terminal:
        terminal_handler = CleanTerminalHandler(show_debug_in_terminal)
    else:
        terminal_handler = logging.StreamHandler(sys.stderr)

    terminal_handler.setFormatter(terminal_formatter)
    terminal_handler.setLevel(numeric_level)
    root_logger.addHandler(terminal_handler)

    root_logger.setLevel(logging.DEBUG)

    for noisy in ("matplotlib", "numba", "urllib3", "asyncio"):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    logger = logging.getLogger(__name__)
    logger.info(
        f"Logging configured - level: {log_level}, file: {log_file or 'none'}"
    )


def get_log_file_path(base_name: str = "parahom") -> str:
    """
    Build a timestamped log file path under ``logs/``.

    Args:
        base_name: Base name of the file

    Returns:
        Full path of the log file
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    filename = f"{base_name}_{timestamp}.log"

    log_dir = Path("logs")
    log_dir.mkdir(exist_ok=True)

    return str(log_dir / filename)


class StudyLogger:
    """Logger specialised in convergence studies and ensembles."""

    def __init__(self, name: str = "study"):
        self.logger = logging.getLogger(name)

    def log_start(self, subcommand: str, config_hash: str, n_tasks: int):
        """Log the start of a run."""
        self.logger.info(
            f"Study started: {subcommand} (config {config_hash[:12]}, {n_tasks} tasks)"
        )

    def log_epsilon_start(self, epsilon: float):
        self.logger.debug(f"Solve started for epsilon={epsilon:g}")

    def log_epsilon_complete(self, epsilon: float, worker_id: int, time_taken: float):
        self.logger.info(
            f"Worker {worker_id}: solve completed for epsilon={epsilon:g} "
            f"in {time_taken:.1f}s"
        )

    def log_sample_failure(self, sample_index: int, error: str):
        self.logger.error(f"Sample {sample_index} failed: {error}")

    def log_error(self, context: str, error: str):
        self.logger.error(f"{context}: {error}")

    def log_completion(self, total_time: float, tasks_done: int, failures: int):
        self.logger.info(
            f"Study completed in {total_time:.1f}s: "
            f"{tasks_done} tasks, {failures} failed"
        )

    def log_stats(self, stats: dict[str, Any]):
        """Log nested statistics."""
        self.logger.info("Final statistics:")
        for key, value in stats.items():
            if isinstance(value, dict):
                self.logger.info(f"  {key}:")
                for sub_key, sub_value in value.items():
                    self.logger.info(f"    {sub_key}: {sub_value}")
            else:
                self.logger.info(f"  {key}: {value}")


study_logger = StudyLogger()
