"""Logging verbosity controlled by the FESDJ_LOG environment variable."""

import os
import sys

_LEVELS = {"quiet": 0, "info": 1, "trace": 2, "debug": 3}


def log_level():
    return _LEVELS.get(os.environ.get("FESDJ_LOG", "quiet").lower(), 0)


def log(level, msg):
    if log_level() >= level:
        print(msg, file=sys.stderr)
