import logging
import sys

from vla_world_lab.core.config import settings

_FORMATS = {
    "plain": "%(asctime)s %(levelname)s %(name)s: %(message)s",
    "short": "%(levelname)s: %(message)s",
}


def configure_logging(level: str | None = None) -> None:
    """Install a single stderr handler on the package logger."""
    root = logging.getLogger("vla_world_lab")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FORMATS.get(settings.LOG_FORMAT, _FORMATS["plain"])))
    root.addHandler(handler)
    root.setLevel((level or settings.LOG).upper())
    root.propagate = False
