"""Verbosity levels shared by the library and the command line.

0 FATAL, 1 ERROR, 2 WARNING, 3 INFO, 4 DEBUG, 5 TRACE.
"""

from __future__ import annotations

import logging
import sys

TRACE = 5
logging.addLevelName(TRACE, "TRACE")

_LEVELS = (
    logging.CRITICAL,
    logging.ERROR,
    logging.WARNING,
    logging.INFO,
    logging.DEBUG,
    TRACE,
)

_FORMAT = "%(levelname)s %(name)s: %(message)s"


def level_for(verbosity: int) -> int:
    """Map a 0-5 verbosity to a ``logging`` level."""
    if not 0 <= verbosity < len(_LEVELS):
        msg = f"verbosity must be in [0, {len(_LEVELS) - 1}], got {verbosity}"
        raise ValueError(msg)
    return _LEVELS[verbosity]


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is when a record is emitted."""

    def __init__(self) -> None:
        logging.Handler.__init__(self)

    @property
    def stream(self):  # type: ignore[override]
        return sys.stderr


def configure(verbosity: int = 3, stream=None) -> logging.Logger:
    """Install one handler on the package logger, writing to ``stream`` or the current stderr.

    Calling it again replaces the previous handler, so repeated CLI invocations
    in one process do not duplicate lines.
    """
    root = logging.getLogger("perf_retrain")
    for handler in list(root.handlers):
        if getattr(handler, "_perf_retrain", False):
            root.removeHandler(handler)
    handler = _StderrHandler() if stream is None else logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter(_FORMAT))
    handler._perf_retrain = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level_for(verbosity))
    root.propagate = False
    return root
