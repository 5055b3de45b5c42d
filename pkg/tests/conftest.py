# File: tests/conftest.py
# Description: Shared fixtures for serlab tests
# Author: serlab developers
# Created: 2026-10-19

import logging

import pytest

from serlab.closed_forms import resolve_closed_form
from serlab.config import Settings
from serlab.constellation import standard_constellation


@pytest.fixture
def bpsk():
    return standard_constellation("bpsk")


@pytest.fixture
def qpsk():
    return standard_constellation("qpsk")


@pytest.fixture
def cube3():
    return standard_constellation("cube", 3)


@pytest.fixture
def settings():
    """Default numerical settings with small Monte Carlo partitions."""
    return Settings(mc_chunk_size=4096, workers=1)


@pytest.fixture
def bpsk_form():
    """Q(sqrt(gamma))."""
    return resolve_closed_form("bpsk-closed-form")


@pytest.fixture
def bpsk_noise(bpsk_form):
    """Q(1/sqrt(P_N))."""
    return bpsk_form.in_noise_power()


@pytest.fixture
def cli_env(tmp_path):
    """Environment for CLI runs: logs under tmp_path, quiet console."""
    return {
        'SERLAB_LOG_DIR': str(tmp_path / "logs"),
        'SERLAB_ENVIRONMENT': "testing",
        'SERLAB_LOG_LEVEL': "WARNING",
    }


@pytest.fixture(autouse=True)
def reset_root_handlers():
    """CLI runs attach handlers to streams that close when the run ends."""
    yield
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
