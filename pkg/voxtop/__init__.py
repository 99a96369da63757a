import logging
import os
import time
from pathlib import Path

import sentry_sdk

__version__ = "2020.1"


def init_logging(logdir: Path, level: int = logging.INFO):
    """
    Send errors to Sentry when $SENTRY_ENDPOINT is set, otherwise append UTC-stamped records
    to <logdir>/voxtop.log
    """
    endpoint = os.environ.get("SENTRY_ENDPOINT", None)
    if endpoint:
        sentry_sdk.init(endpoint)
        return

    # Default to local logging
    logdir = Path(logdir)
    logdir.mkdir(parents=True, exist_ok=True)
    logging.Formatter.converter = time.gmtime  # Force UTC

    logformat = "%(asctime)s %(levelname)s:%(module)s:%(message)s"
    dateformat = "%Y-%m-%d %H:%M:%S"
    logging.basicConfig(
        filename=logdir / "voxtop.log",
        filemode="a",
        level=level,
        format=logformat,
        datefmt=dateformat,
    )
