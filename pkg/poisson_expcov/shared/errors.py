from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


@dataclass
class ModelError(Exception):
    code: str
    message: str
    exit_status: int = EXIT_FAILURE
    details: dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"

    def to_record(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "message": self.message,
            "exit_status": self.exit_status,
            "details": self.details,
        }


def invalid_parameter(message: str, **details: Any) -> ModelError:
    return ModelError(code="INVALID_PARAMETER", message=message, exit_status=EXIT_VALIDATION, details=details)


def dimension_mismatch(message: str, **details: Any) -> ModelError:
    return ModelError(code="DIMENSION_MISMATCH", message=message, exit_status=EXIT_VALIDATION, details=details)


def validation_error(message: str, **details: Any) -> ModelError:
    return ModelError(code="VALIDATION_ERROR", message=message, exit_status=EXIT_VALIDATION, details=details)


def rank_deficient(message: str, **details: Any) -> ModelError:
    return ModelError(code="RANK_DEFICIENT", message=message, exit_status=EXIT_VALIDATION, details=details)


def cholesky_failure(message: str, **details: Any) -> ModelError:
    return ModelError(code="CHOLESKY_FAILURE", message=message, exit_status=EXIT_FAILURE, details=details)


def envelope_failure(message: str, **details: Any) -> ModelError:
    return ModelError(code="ENVELOPE_FAILURE", message=message, exit_status=EXIT_FAILURE, details=details)


def non_stationary_coefficients(message: str, **details: Any) -> ModelError:
    return ModelError(code="NON_STATIONARY_COEFFICIENTS", message=message, exit_status=EXIT_VALIDATION, details=details)


def insufficient_data(message: str, **details: Any) -> ModelError:
    return ModelError(code="INSUFFICIENT_DATA", message=message, exit_status=EXIT_VALIDATION, details=details)


def convergence_failure(message: str, **details: Any) -> ModelError:
    return ModelError(code="CONVERGENCE_FAILURE", message=message, exit_status=EXIT_CONVERGENCE, details=details)


def empty_posterior(message: str, **details: Any) -> ModelError:
    return ModelError(code="EMPTY_POSTERIOR", message=message, exit_status=EXIT_FAILURE, details=details)


def invalid_pmf(message: str, **details: Any) -> ModelError:
    return ModelError(code="INVALID_PMF", message=message, exit_status=EXIT_VALIDATION, details=details)


def divergence(message: str, **details: Any) -> ModelError:
    return ModelError(code="DIVERGENCE", message=message, exit_status=EXIT_CONVERGENCE, details=details)


def not_converged(message: str, **details: Any) -> ModelError:
    return ModelError(code="NOT_CONVERGED", message=message, exit_status=EXIT_CONVERGENCE, details=details)


def parse_error(message: str, **details: Any) -> ModelError:
    return ModelError(code="PARSE_ERROR", message=message, exit_status=EXIT_VALIDATION, details=details)


def schema_error(message: str, **details: Any) -> ModelError:
    return ModelError(code="SCHEMA_ERROR", message=message, exit_status=EXIT_VALIDATION, details=details)


def input_mismatch(message: str, **details: Any) -> ModelError:
    return ModelError(code="INPUT_MISMATCH", message=message, exit_status=EXIT_VALIDATION, details=details)


def io_error(message: str, **details: Any) -> ModelError:
    return ModelError(code="IO_ERROR", message=message, exit_status=EXIT_IO, details=details)


def internal_error(message: str, **details: Any) -> ModelError:
    return ModelError(code="INTERNAL_ERROR", message=message, exit_status=EXIT_FAILURE, details=details)
