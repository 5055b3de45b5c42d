# File: src/serlab/logging_config.py
# Description: Logging setup for CLI runs: stdlib handlers fed by structlog events
# Author: serlab developers
# Created: 2026-10-19

import json
import logging
import logging.handlers
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, TextIO

import structlog

LOG_FILE = 'serlab.log'
ERROR_LOG_FILE = 'serlab_error.log'
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5


def _record_context(record: logging.LogRecord) -> Dict[str, Any]:
    return dict(getattr(record, 'context', None) or {})


class JSONFormatter(logging.Formatter):
    """One JSON object per record; structured fields go under 'context'."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            'timestamp': datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'line': record.lineno,
        }
        context = _record_context(record)
        if context:
            entry['context'] = context
        if record.exc_info:
            entry['exception'] = {
                'type': record.exc_info[0].__name__,
                'message': str(record.exc_info[1]),
                'traceback': self.formatException(record.exc_info),
            }
        return json.dumps(entry, default=str)


class ConsoleFormatter(logging.Formatter):
    """Human-readable line with the structured fields appended as key=value."""

    def __init__(self):
        super().__init__('%(asctime)s %(levelname)-7s %(name)s: %(message)s')

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        context = _record_context(record)
        if context:
            line += ' ' + ' '.join(f"{key}={value!r}" for key, value in context.items())
        return line


def _event_to_record(logger, method_name: str, event_dict: Dict[str, Any]) -> Dict[str, Any]:
    """Final structlog processor: event text becomes the message, the rest the record context."""
    event = event_dict.pop('event', '')
    event_dict.pop('level', None)
    return {'msg': event, 'extra': {'context': event_dict}}


def configure_structlog() -> None:
    """
    Route structlog events into stdlib logging with their fields as record context.

    Runs when serlab is imported, unless the host application has configured
    structlog already. Handlers and levels stay with the host. Without them,
    library events below WARNING are dropped and nothing reaches stdout.
    """
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_log_level,
            structlog.processors.format_exc_info,
            _event_to_record,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


class LoggingConfig:
    """
    Logging for serlab processes.

    Business Purpose: Long Monte Carlo verifications need a durable record of
    what was run and which checks failed. Library modules log through
    structlog with key/value fields; this routes those events into stdlib
    handlers (console on stderr, rotating JSON files) so the fields survive
    as structured context.

    Usage Example:
        LoggingConfig.initialize(environment='production')

        logger = structlog.get_logger()
        logger.info("Curve estimated", quantity="pe", samples=100000)
    """

    DEFAULT_LOG_DIR = Path.home() / '.serlab' / 'logs'

    LEVELS = {
        'production': logging.INFO,
        'development': logging.DEBUG,
        'testing': logging.WARNING,
    }

    @staticmethod
    def _rotating_handler(path: Path, level: int) -> logging.Handler:
        handler = logging.handlers.RotatingFileHandler(
            path, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS, encoding='utf-8',
        )
        handler.setLevel(level)
        handler.setFormatter(JSONFormatter())
        return handler

    @classmethod
    def initialize(
        cls,
        environment: str = 'development',
        log_dir: Optional[Path] = None,
        log_level: Optional[int] = None,
        console_stream: Optional[TextIO] = None,
    ) -> None:
        """
        Replace the root handlers and point structlog at them.

        Args:
            environment: 'development', 'production' or 'testing'
            log_dir: Directory for log files. Defaults to ~/.serlab/logs
            log_level: Explicit level; environment default when None
            console_stream: Stream for the console handler (stderr by default,
                stdout stays reserved for CSV output)
        """
        log_dir = Path(log_dir or cls.DEFAULT_LOG_DIR).expanduser()
        log_dir.mkdir(parents=True, exist_ok=True)
        if log_level is None:
            log_level = cls.LEVELS.get(environment, logging.DEBUG)

        root_logger = logging.getLogger()
        root_logger.setLevel(log_level)
        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)
            handler.close()

        console_handler = logging.StreamHandler(console_stream or sys.stderr)
        console_handler.setLevel(log_level)
        console_handler.setFormatter(JSONFormatter() if environment == 'production' else ConsoleFormatter())
        root_logger.addHandler(console_handler)
        root_logger.addHandler(cls._rotating_handler(log_dir / LOG_FILE, log_level))
        root_logger.addHandler(cls._rotating_handler(log_dir / ERROR_LOG_FILE, logging.ERROR))

        configure_structlog()
        structlog.get_logger().debug("Logging initialized", environment=environment,
                                     log_dir=str(log_dir), level=logging.getLevelName(log_level))
