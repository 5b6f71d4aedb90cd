import logging
import logging.handlers
import os
from collections.abc import Iterable

from steinvar.constants import LOG_BACKUP_COUNT, LOG_MAX_BYTES

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(
    output_dir: str | None = None,
    quiet: bool = False,
) -> tuple[logging.Logger, logging.Logger]:
    """Configure the ``app`` and ``simulation`` loggers; safe to call repeatedly."""
    formatter = logging.Formatter(LOG_FORMAT)
    console_level = logging.WARNING if quiet else logging.INFO

    app_handlers: list[logging.Handler] = [_build_console_handler(formatter, console_level)]
    simulation_handlers: list[logging.Handler] = [_build_console_handler(formatter, console_level)]
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        app_handlers.append(_build_file_handler(os.path.join(output_dir, "app.log"), formatter))
        simulation_handlers.append(
            _build_file_handler(os.path.join(output_dir, "simulation.log"), formatter)
        )

    app_logger = _configure_logger("app", app_handlers)
    simulation_logger = _configure_logger("simulation", simulation_handlers)
    return app_logger, simulation_logger


def _configure_logger(name: str, handlers: Iterable[logging.Handler]) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)
    logger.propagate = False

    for existing_handler in list(logger.handlers):
        logger.removeHandler(existing_handler)
        existing_handler.close()

    for handler in handlers:
        logger.addHandler(handler)

    return logger


def _build_file_handler(path: str, formatter: logging.Formatter) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(
        path,
        maxBytes=LOG_MAX_BYTES,
        backupCount=LOG_BACKUP_COUNT,
        encoding="utf-8",
    )
    handler.setFormatter(formatter)
    return handler


def _build_console_handler(formatter: logging.Formatter, level: int) -> logging.StreamHandler:
    # stderr, so CSV/JSON on stdout stays clean.
    handler = logging.StreamHandler()
    handler.setFormatter(formatter)
    handler.setLevel(level)
    return handler
