import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.theme import Theme

from .configuration import gpuletsched_config
from .package_data import get_path_of_data_file

# shared by the log handler and the command line output
theme = Theme.read(str(get_path_of_data_file("theme.ini")))

console = Console(theme=theme, stderr=True)


class _DropLevel(logging.Filter):
    """
    drop records of exactly one level
    """

    def __init__(self, level: int) -> None:

        super().__init__()

        self._level = level

    def filter(self, record: logging.LogRecord) -> bool:

        return record.levelno != self._level


gpuletsched_console_log_handler = RichHandler(
    level=(
        gpuletsched_config.logging.level
        if gpuletsched_config.logging.on
        else logging.CRITICAL
    ),
    console=console,
    markup=True,
    rich_tracebacks=True,
    show_path=False,
)

gpuletsched_console_log_handler.setFormatter(logging.Formatter("%(name)s: %(message)s", datefmt="%H:%M:%S"))

_warnings = _DropLevel(logging.WARNING)


def silence_warnings() -> None:
    """
    hide warnings, e.g. for sweeps where many workloads are not schedulable
    """

    gpuletsched_console_log_handler.addFilter(_warnings)


def activate_warnings() -> None:

    gpuletsched_console_log_handler.removeFilter(_warnings)


def update_logging_level(level) -> None:

    gpuletsched_console_log_handler.setLevel(level)


def setup_logger(name: str) -> logging.Logger:
    """
    a logger that writes through the shared rich handler only

    :param name: usually the module's __name__
    :returns: logging.Logger

    """
    log = logging.getLogger(name)

    # the handler decides what is shown
    log.setLevel(logging.DEBUG)

    if gpuletsched_console_log_handler not in log.handlers:

        log.addHandler(gpuletsched_console_log_handler)

    log.propagate = False

    return log
