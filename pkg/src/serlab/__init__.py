# File: src/serlab/__init__.py
# Description: serlab package - SER convexity, derivative bounds and power-sharing laboratory
# Author: serlab developers
# Created: 2026-10-19

import structlog

from serlab.logging_config import configure_structlog
from serlab.version import __version__

if not structlog.is_configured():
    configure_structlog()

__all__ = ["__version__", "configure_structlog"]
