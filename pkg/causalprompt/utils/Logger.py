import logging
import os
from termcolor import colored

LEVEL_COLORS = {
    logging.DEBUG: "cyan",
    logging.INFO: "green",
    logging.WARNING: "yellow",
    logging.ERROR: "red",
    logging.CRITICAL: "red",
}


class ColoredFormatter(logging.Formatter):
    """Formatter that colors the message by level for the console handler."""

    def format(self, record: logging.LogRecord) -> str:
        message = super().format(record)
        return colored(message, LEVEL_COLORS.get(record.levelno, "white"))


def get_logger(name: str) -> logging.Logger:
    """
    Create (or fetch) a module logger.

    A console handler is always attached; a UTF-8 file handler is attached when
    CAUSALPROMPT_LOG_FILE is set. Calling this twice for the same name does not
    duplicate handlers.
    """
    logger = logging.getLogger(name)
    if getattr(logger, "_causalprompt_configured", False):
        return logger

    logger.setLevel(os.environ.get("CAUSALPROMPT_LOG_LEVEL", "INFO").upper())
    logger.propagate = False

    format = '%(name)s - %(message)s - %(lineno)d'

    c_handler = logging.StreamHandler()
    c_handler.setFormatter(ColoredFormatter(format))
    logger.addHandler(c_handler)

    log_file = os.environ.get("CAUSALPROMPT_LOG_FILE")
    if log_file:
        f_handler = logging.FileHandler(log_file, encoding='utf-8')
        f_handler.setFormatter(logging.Formatter('%(asctime)s - ' + format))
        logger.addHandler(f_handler)

    logger._causalprompt_configured = True
    return logger
