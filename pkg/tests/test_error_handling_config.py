# File: tests/test_error_handling_config.py
# Description: Tests for refinement retries, error severities, settings and logging setup
# Author: serlab developers
# Created: 2026-10-19

import io
import json
import logging
import warnings

import pytest
import structlog
from scipy.integrate import IntegrationWarning

from serlab.config import Settings, load_constellation_file
from serlab.error_handling import (
    CapabilityError,
    CheckFailure,
    ConvergenceError,
    ErrorSeverity,
    GeometricRefinementStrategy,
    InvalidInputError,
    NonConvexError,
    RefinementHandler,
)
from serlab.logging_config import LoggingConfig, configure_structlog


pytestmark = pytest.mark.smoke


def warns_below(threshold, efforts):
    """Operation that records its effort and warns until effort reaches threshold."""
    def operation(effort):
        efforts.append(effort)
        if effort < threshold:
            warnings.warn("limit reached", IntegrationWarning)
        return effort
    return operation


class TestRefinementHandler:
    """Test escalating retries of adaptive routines."""

    def test_geometric_retry(self):
        efforts = []
        result = RefinementHandler().execute_with_refinement(
            warns_below(800, efforts), "quad", initial_effort=200)
        assert result == 800
        assert efforts == [200, 800]

    def test_exhaustion_raises(self):
        efforts = []
        with pytest.raises(ConvergenceError) as exc:
            RefinementHandler().execute_with_refinement(
                warns_below(float('inf'), efforts), "quad", initial_effort=200, max_refinements=3)
        assert exc.value.context['attempts'] == 4
        assert len(efforts) == 4

    def test_effort_ceiling_stops_early(self):
        efforts = []
        handler = RefinementHandler(GeometricRefinementStrategy(factor=4, max_effort=500))
        with pytest.raises(ConvergenceError):
            handler.execute_with_refinement(warns_below(float('inf'), efforts), "quad", initial_effort=200)
        assert efforts == [200, 500]

    def test_other_warnings_pass_through(self):
        def operation(effort):
            warnings.warn("unrelated", UserWarning)
            return 1.0
        assert RefinementHandler().execute_with_refinement(operation, "quad", initial_effort=10) == 1.0


class TestErrors:
    """Test the error hierarchy."""

    def test_invalid_input_is_a_value_error(self):
        with pytest.raises(ValueError):
            raise InvalidInputError("bad", context={'field': 'n'})

    def test_context_is_copied(self):
        context = {'n': 3}
        error = CapabilityError("too big", context=context)
        context['n'] = 4
        assert error.context == {'n': 3}

    @pytest.mark.parametrize("error,severity", [
        (InvalidInputError("x"), ErrorSeverity.LOW),
        (CapabilityError("x"), ErrorSeverity.LOW),
        (ConvergenceError("x"), ErrorSeverity.MEDIUM),
        (NonConvexError("x"), ErrorSeverity.HIGH),
        (CheckFailure("x"), ErrorSeverity.MEDIUM),
    ])
    def test_severity(self, error, severity):
        assert error.severity is severity


class TestSettings:
    """Test environment-driven settings."""

    def test_defaults(self):
        s = Settings()
        assert s.default_seed == 7
        assert s.bound_sigma_k == 4.0
        assert s.vertex_max_dim == 4

    def test_environment_alias(self, monkeypatch):
        monkeypatch.setenv("SERLAB_DEFAULT_SAMPLES", "5000")
        monkeypatch.setenv("SERLAB_WORKERS", "3")
        s = Settings()
        assert s.default_samples == 5000
        assert s.workers == 3

    def test_field_names_accepted(self):
        assert Settings(mc_chunk_size=128).mc_chunk_size == 128


class TestConstellationFiles:
    """Test constellation file loading errors."""

    def test_missing(self, tmp_path):
        with pytest.raises(InvalidInputError) as exc:
            load_constellation_file(str(tmp_path / "absent.json"))
        assert "absent.json" in exc.value.context['path']

    @pytest.mark.parametrize("text", [
        "points: [[1], [-1]",
        '{"n": 1, "points": [[1]]}',
        '{"n": 0, "points": [[1], [-1]]}',
        "- 1\n- 2\n",
    ])
    def test_invalid_documents(self, tmp_path, text):
        path = tmp_path / "bad.yaml"
        path.write_text(text)
        with pytest.raises(InvalidInputError):
            load_constellation_file(str(path))

    def test_valid(self, tmp_path):
        path = tmp_path / "ok.json"
        path.write_text('{"n": 1, "points": [[1], [-1]], "priors": [0.3, 0.7]}')
        spec = load_constellation_file(str(path))
        assert spec.priors == [0.3, 0.7]
        assert spec.rescale is False


class TestLoggingConfig:
    """Test handler wiring."""

    def test_library_events_without_initialize(self, capsys, caplog):
        """Test events go to stdlib logging, never to stdout, when no handlers are set up."""
        configure_structlog()
        with caplog.at_level(logging.INFO):
            structlog.get_logger("serlab.optimize").info("Allocation solved", streams=2)
            structlog.get_logger("serlab.optimize").debug("Bisection step", lam=0.1)
        assert capsys.readouterr().out == ""
        assert [r.getMessage() for r in caplog.records] == ["Allocation solved"]
        assert caplog.records[0].context == {"streams": 2}

    def test_log_files_created(self, tmp_path):
        LoggingConfig.initialize(environment='testing', log_dir=tmp_path)
        assert (tmp_path / 'serlab.log').exists()
        assert (tmp_path / 'serlab_error.log').exists()
        assert logging.getLogger().level == logging.WARNING

    def test_structlog_events_reach_the_file(self, tmp_path):
        LoggingConfig.initialize(environment='testing', log_dir=tmp_path, console_stream=io.StringIO())
        structlog.get_logger().warning("Bound violated", margin=-0.5)
        line = (tmp_path / 'serlab.log').read_text().strip().splitlines()[-1]
        record = json.loads(line)
        assert record["level"] == "WARNING"
        assert record["message"] == "Bound violated"
        assert record["context"] == {"margin": -0.5}

    def test_production_console_is_json(self, tmp_path):
        stream = io.StringIO()
        LoggingConfig.initialize(environment='production', log_dir=tmp_path, console_stream=stream)
        structlog.get_logger().info("Curve estimated", samples=1000)
        record = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert record['message'] == "Curve estimated"
        assert record['context'] == {'samples': 1000}

    def test_stdlib_context_extra(self, tmp_path):
        stream = io.StringIO()
        LoggingConfig.initialize(environment='development', log_dir=tmp_path, console_stream=stream)
        logging.getLogger("serlab.error_handling").warning("Refining quad", extra={'context': {'attempt': 1}})
        line = stream.getvalue().strip().splitlines()[-1]
        assert line.endswith("Refining quad attempt=1")
        errors = (tmp_path / 'serlab_error.log').read_text()
        assert errors == ""
