"""
Error hierarchy for the superoptimal solver
Each error carries a short code, the recursion level it came from and the offending residual
"""
from typing import Optional, Dict, Any


class SuperoptError(Exception):
    """Base class for all solver errors"""

    code = "superopt_error"
    exit_code = 3

    def __init__(self, message: str, level: Optional[int] = None,
                 residual: Optional[float] = None):
        super().__init__(message)
        self.message = message
        self.level = level
        self.residual = residual

    def with_level(self, level: int) -> 'SuperoptError':
        """Annotate the error with a recursion level unless one is already set"""
        if self.level is None:
            self.level = level
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary for JSON serialization"""
        return {
            'code': self.code,
            'message': self.message,
            'level': self.level,
            'residual': self.residual
        }

    def __str__(self):
        parts = [f"{self.code}: {self.message}"]
        if self.level is not None:
            parts.append(f"level={self.level}")
        if self.residual is not None:
            parts.append(f"residual={self.residual:.3e}")
        return ", ".join(parts)


# Input problems (exit code 1)
class InputError(SuperoptError):
    code = "input_error"
    exit_code = 1


class SymbolFormatError(InputError):
    code = "parse_error"


class ShapeMismatchError(InputError):
    code = "shape_mismatch"


# The uniqueness hypothesis is not met (exit code 2)
class HypothesisError(SuperoptError):
    code = "hypothesis_error"
    exit_code = 2


class EssentialNormHypothesisError(HypothesisError):
    code = "essential_norm_hypothesis"


class BaseCaseError(HypothesisError):
    code = "base_case_degenerate"


# Numerical breakdown or non-convergence (exit code 3)
class NumericalError(SuperoptError):
    code = "numerical_error"
    exit_code = 3


class AliasingError(NumericalError):
    code = "aliasing"


class SymbolTruncationError(NumericalError):
    code = "symbol_truncated"


class ZeroOperatorError(NumericalError):
    code = "zero_operator"


class InsufficientGridError(NumericalError):
    code = "insufficient_grid"


class IndexMismatchError(NumericalError):
    code = "index_mismatch"


class CompletionNotAnalyticError(NumericalError):
    code = "completion_not_analytic"


class NotIsometricError(NumericalError):
    code = "not_isometric"


class DegenerateInputError(NumericalError):
    code = "degenerate_input"


class OptimalSolveNotConvergedError(NumericalError):
    code = "optimal_solve_not_converged"


class ReductionFailedError(NumericalError):
    code = "reduction_failed"


class FactorizationError(NumericalError):
    code = "reconstruction_failed"
