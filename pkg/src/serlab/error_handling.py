# File: src/serlab/error_handling.py
# Description: Exception hierarchy and refinement-with-retry for adaptive numerical routines
# Author: serlab developers
# Created: 2026-10-19

import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple, Type

from scipy.integrate import IntegrationWarning


logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """Error severity levels."""
    LOW = "low"           # Bad input, caller can fix and rerun
    MEDIUM = "medium"     # Numerical routine gave up
    HIGH = "high"         # Solver precondition violated


class SerLabError(Exception):
    """
    Base class for every error raised by serlab.

    Business Purpose: Lets the CLI and callers tell library failures apart from
    programming errors, and carries enough context to explain them in logs.

    Example:
        try:
            ser_quadrature(cube, 4.0)
        except SerLabError as e:
            print(e.severity, e.context)
    """

    severity: ErrorSeverity = ErrorSeverity.HIGH

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context = dict(context or {})


class InvalidInputError(SerLabError, ValueError):
    """Precondition violated by caller-supplied data."""
    severity = ErrorSeverity.LOW


class CapabilityError(SerLabError):
    """Request exceeds a documented capability limit."""
    severity = ErrorSeverity.LOW


class ConvergenceError(SerLabError):
    """Adaptive routine or bracket search failed to converge."""
    severity = ErrorSeverity.MEDIUM


class NonConvexError(SerLabError):
    """Supplied error-rate function is not convex where the solver needs it."""
    severity = ErrorSeverity.HIGH


class NoSignChangeError(SerLabError):
    """Second derivative never changes sign in the search bracket."""
    severity = ErrorSeverity.MEDIUM


class MultipleInflectionError(SerLabError):
    """More than one inflection point found where one was required."""
    severity = ErrorSeverity.MEDIUM


class CheckFailure(SerLabError):
    """A verification report did not pass."""
    severity = ErrorSeverity.MEDIUM


@dataclass
class ErrorContext:
    """Context information about a failed numerical attempt."""
    error_type: str
    severity: ErrorSeverity
    message: str
    operation: str
    attempt: int = 1
    max_refinements: int = 3
    effort: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)


class RefinementStrategy(ABC):
    """Base class for effort-escalation strategies."""

    @abstractmethod
    def should_refine(self, context: ErrorContext) -> bool:
        """Determine if the routine should be re-run with more effort."""
        pass

    @abstractmethod
    def next_effort(self, context: ErrorContext) -> float:
        """Effort parameter for the next attempt."""
        pass


class GeometricRefinementStrategy(RefinementStrategy):
    """Multiply the effort parameter by a constant factor on every retry."""

    def __init__(self, factor: float = 4.0, max_effort: float = 1e5):
        """
        Initialize geometric refinement.

        Args:
            factor: Growth factor applied per retry
            max_effort: Effort ceiling
        """
        self.factor = factor
        self.max_effort = max_effort

    def should_refine(self, context: ErrorContext) -> bool:
        return context.attempt <= context.max_refinements and context.effort < self.max_effort

    def next_effort(self, context: ErrorContext) -> float:
        return min(context.effort * self.factor, self.max_effort)


class RefinementHandler:
    """
    Re-runs adaptive numerical routines with escalating effort.

    Business Purpose: scipy's adaptive quadrature signals trouble through
    IntegrationWarning rather than an exception. This handler turns those
    warnings into retries with a larger subdivision limit and, once the
    strategy is exhausted, into a ConvergenceError the caller can report.

    Usage Example:
        handler = RefinementHandler()
        value = handler.execute_with_refinement(
            operation=lambda limit: quad(f, 0, np.inf, limit=int(limit))[0],
            operation_name="average_ser",
            initial_effort=200,
        )
    """

    def __init__(self, strategy: Optional[RefinementStrategy] = None):
        self.strategy = strategy or GeometricRefinementStrategy()

    def execute_with_refinement(
        self,
        operation: Callable[[float], Any],
        operation_name: str,
        initial_effort: float,
        max_refinements: int = 3,
        escalate_on: Tuple[Type[Warning], ...] = (IntegrationWarning,),
    ) -> Any:
        """
        Run operation(effort), retrying with more effort on the given warnings.

        Args:
            operation: Callable receiving the effort parameter
            operation_name: Name used in logs and error context
            initial_effort: Effort for the first attempt
            max_refinements: Number of retries after the first attempt
            escalate_on: Warning categories that trigger a retry

        Returns:
            Result of the first attempt that completes without warnings

        Raises:
            ConvergenceError: If every attempt emitted an escalating warning
        """
        effort = float(initial_effort)
        attempt = 1

        while True:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                result = operation(effort)
            trouble = [w for w in caught if issubclass(w.category, escalate_on)]
            if not trouble:
                return result

            context = ErrorContext(
                error_type=trouble[0].category.__name__,
                severity=ErrorSeverity.MEDIUM,
                message=str(trouble[0].message),
                operation=operation_name,
                attempt=attempt,
                max_refinements=max_refinements,
                effort=effort,
            )
            if not self.strategy.should_refine(context):
                logger.error(
                    f"Refinement exhausted: {operation_name}",
                    extra={'context': {
                        'operation': operation_name,
                        'attempts': attempt,
                        'effort': effort,
                        'warning': context.message,
                    }},
                )
                raise ConvergenceError(
                    f"{operation_name} did not converge after {attempt} attempts: {context.message}",
                    context={'attempts': attempt, 'effort': effort},
                )

            effort = self.strategy.next_effort(context)
            logger.warning(
                f"Refining {operation_name} (attempt {attempt}), effort now {effort:g}",
                extra={'context': {
                    'operation': operation_name,
                    'attempt': attempt,
                    'effort': effort,
                    'warning': context.message,
                }},
            )
            attempt += 1
