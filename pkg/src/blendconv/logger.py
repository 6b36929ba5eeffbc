import logging
from contextvars import ContextVar

from rich.logging import RichHandler

current_stage: ContextVar[str] = ContextVar("current_stage", default="")


class ContextFilter(logging.Filter):
    """Inject the active pipeline stage into log records."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "stage"):
            record.stage = current_stage.get()
        return True


class StageFormatter(logging.Formatter):
    """Formatter that prefixes messages with the stage name when available."""

    def format(self, record: logging.LogRecord) -> str:
        base_format = "%(message)s"
        if getattr(record, "stage", ""):
            base_format = f"[%(stage)s] {base_format}"
        formatter = logging.Formatter(base_format)
        return formatter.format(record)


def set_up_logging() -> None:
    """
    Configure global logging with Rich handler and stage filter.

    Returns:
        None
    """
    handler: logging.Handler = RichHandler(
        rich_tracebacks=True,
        tracebacks_show_locals=False,
        show_path=False,
        show_time=False,
    )
    handler.setFormatter(StageFormatter())

    logging.basicConfig(
        level=logging.INFO,
        format="%(message)s",
        handlers=[handler],
    )

    log = logging.getLogger()

    context_filter = ContextFilter()
    for handler in log.handlers:
        handler.addFilter(context_filter)
    log.addFilter(context_filter)
