import logging
import os

from app.config import settings

NOISY_LIBRARIES = [
    "cvxpy",
    "boto3",
    "botocore",
    "s3transfer",
    "urllib3",
]


def setup_logging(level: str | None = None, log_file: str | None = None) -> logging.Logger:
    """Configure the root logger with a console and a file handler.

    Previously attached handlers are removed so repeated calls (tests, CLI
    re-entry) never duplicate output.
    """
    log_file = log_file or settings.LOG_FILE
    level = (level or settings.LOG_LEVEL).upper()

    log_dir = os.path.dirname(log_file)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    if root_logger.handlers:
        root_logger.handlers.clear()

    formatter = logging.Formatter("%(asctime)s | %(levelname)s | %(name)s | %(message)s")

    file_handler = logging.FileHandler(log_file, mode="a")
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)

    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    for lib in NOISY_LIBRARIES:
        logging.getLogger(lib).setLevel(logging.WARNING)

    return root_logger
