"""
Module for detailed logging configuration
"""
import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Iterable

# Base path for logs
BASE_DIR = Path(__file__).parent.parent.parent
LOG_DIR = BASE_DIR / "logs"

# Log files
GENERAL_LOG = LOG_DIR / "app.log"
GENERATION_LOG = LOG_DIR / "generation.log"
TRAINING_LOG = LOG_DIR / "training.log"
ERROR_LOG = LOG_DIR / "errors.log"

GENERATION_KEYWORDS = ("generation", "embedding", "morph")
TRAINING_KEYWORDS = ("training", "model")


def name_filter(keywords: Iterable[str]):
    """Filter accepting records whose logger name contains one of the keywords"""
    keywords = tuple(keywords)
    return lambda record: any(k in record.name.lower() for k in keywords)


def _rotating_handler(path: Path, level: int, formatter: logging.Formatter) -> RotatingFileHandler:
    handler = RotatingFileHandler(
        path,
        maxBytes=10 * 1024 * 1024,  # 10 MB
        backupCount=5,
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(
    level: str = "INFO",
    log_to_file: bool = True,
    log_to_console: bool = True,
    log_dir: Path = LOG_DIR
):
    """
    Configure logging system

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_to_file: Log to files
        log_to_console: Log to console
        log_dir: Directory for the rotating log files
    """
    log_level = getattr(logging, level.upper(), logging.INFO)

    # Log format
    detailed_format = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s")
    simple_format = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    handlers = []

    if log_to_console:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(log_level)
        console_handler.setFormatter(simple_format)
        handlers.append(console_handler)

    if log_to_file:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(_rotating_handler(log_dir / GENERAL_LOG.name, logging.DEBUG, detailed_format))

        generation_handler = _rotating_handler(log_dir / GENERATION_LOG.name, logging.INFO, detailed_format)
        generation_handler.addFilter(name_filter(GENERATION_KEYWORDS))
        handlers.append(generation_handler)

        training_handler = _rotating_handler(log_dir / TRAINING_LOG.name, logging.INFO, detailed_format)
        training_handler.addFilter(name_filter(TRAINING_KEYWORDS))
        handlers.append(training_handler)

        handlers.append(_rotating_handler(log_dir / ERROR_LOG.name, logging.ERROR, detailed_format))

    # Configure root logger
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
    for handler in handlers:
        root_logger.addHandler(handler)

    # Quiet external libraries
    logging.getLogger("urllib3").setLevel(logging.WARNING)
    logging.getLogger("httpx").setLevel(logging.WARNING)

    logging.info(f"Logging configured. Level: {level}")


def get_logger(name: str) -> logging.Logger:
    """
    Get logger with specified name

    Args:
        name: Logger name (usually __name__)

    Returns:
        Configured logger
    """
    return logging.getLogger(name)


_initialized = False


def initialize_logging(log_to_file: bool = True):
    """Initialize logging (called on application startup)"""
    global _initialized
    if not _initialized:
        from src.config.settings import LOGGING_CONFIG
        setup_logging(
            level=LOGGING_CONFIG.get("level", "INFO"),
            log_to_file=log_to_file,
            log_to_console=True
        )
        _initialized = True
