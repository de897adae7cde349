"""
Weight diagnostics - superoptimal weights and verification suites over solver results
Clipped weights, maximizing subspaces, index sums, singular-value inequalities and constancy
"""
from typing import List, Dict, Optional, Any, Tuple
from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np
from scipy import linalg

from .errors import ShapeMismatchError, DegenerateInputError
from .fourier_symbols import (MatrixSymbol, symbol_from_grid, sample_on_grid, singular_values_on_grid,
                              DEFAULT_TRUNC_TOL)
from .truncated_operators import (TruncatedOperator, BasisMap, OperatorKind, build_operator,
                                  assemble_matrix, singular_values)
from .solver import SuperoptimalResult

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
WEIGHT_RANK_TOL = 1e-7
INEQUALITY_SLACK = 1e-6
CONSTANCY_TOL = 1e-5
WEIGHT_PROFILE_TOL = 2e-5
STABILITY_STEP = 8


class ClipMode(Enum):
    """Eigenvalue clipping below a threshold a"""
    LAMBDA_UPPER = "Lambda"  # t < a -> a
    LAMBDA_LOWER = "lambda"  # t < a -> 0


class MatrixWeight:
    """Grid samples of nonnegative self-adjoint n x n matrices"""

    def __init__(self, values: np.ndarray, check: bool = True):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ShapeMismatchError(f"weight samples must have shape (L, n, n), got {values.shape}")
        self.values = values
        if check:
            self.check()

    @classmethod
    def from_error_symbol(cls, error: MatrixSymbol, grid_size: int) -> 'MatrixWeight':
        """E*E sampled on the grid"""
        samples = sample_on_grid(error, grid_size)
        return cls(np.conj(samples).transpose(0, 2, 1) @ samples)

    @classmethod
    def scaled_identity(cls, size: int, grid_size: int, scale: float = 1.0) -> 'MatrixWeight':
        return cls(np.tile(scale * np.eye(size, dtype=complex), (grid_size, 1, 1)))

    @property
    def size(self) -> int:
        return self.values.shape[1]

    @property
    def grid_size(self) -> int:
        return self.values.shape[0]

    def check(self):
        """Hermitian and nonnegative at every node"""
        scale = max(1.0, float(np.max(np.abs(self.values)))) if self.values.size else 1.0
        asym = float(np.max(np.abs(self.values - np.conj(self.values).transpose(0, 2, 1)), initial=0.0))
        if asym > HERMITIAN_TOL * scale:
            raise DegenerateInputError(f"weight is not Hermitian (deviation {asym:.3e})", residual=asym)
        if self.size:
            lowest = float(self.eigenvalues().min())
            if lowest < -HERMITIAN_TOL * scale:
                raise DegenerateInputError(f"weight has negative eigenvalue {lowest:.3e}", residual=-lowest)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)

    def to_symbol(self, tol: float = DEFAULT_TRUNC_TOL) -> MatrixSymbol:
        return symbol_from_grid(self.values, None, tol)

    def compression(self, basis: BasisMap) -> np.ndarray:
        """Matrix of (W x, y) on the truncated input space of an operator"""
        square = BasisMap(basis.input_modes, basis.input_modes, basis.n_in, basis.input_height,
                          basis.input_height, basis.input_upper, basis.input_upper)
        return assemble_matrix(self.to_symbol(), square)

    def __str__(self):
        return f"MatrixWeight({self.size}x{self.size}, L={self.grid_size})"


def clip_weight(w: MatrixWeight, a: float, mode: ClipMode) -> MatrixWeight:
    """Apply Lambda_a (raise eigenvalues below a to a) or lambda_a (drop them to 0) node by node"""
    if a < 0:
        raise DegenerateInputError(f"clipping level must be nonnegative, got {a}")
    mode = ClipMode(mode)
    eigvals, eigvecs = np.linalg.eigh(w.values)
    floor = a if mode == ClipMode.LAMBDA_UPPER else 0.0
    clipped = np.where(eigvals >= a, eigvals, floor)
    values = (eigvecs * clipped[:, None, :]) @ np.conj(eigvecs).transpose(0, 2, 1)
    return MatrixWeight(values, check=False)


def _gap_matrix(w: MatrixWeight, gamma: TruncatedOperator) -> np.ndarray:
    if w.size != gamma.basis.input_height:
        raise ShapeMismatchError(f"weight size {w.size} does not match operator input {gamma.basis.input_height}")
    difference = w.compression(gamma.basis) - np.conj(gamma.matrix).T @ gamma.matrix
    return (difference + np.conj(difference).T) / 2


def is_admissible(w: MatrixWeight, gamma: TruncatedOperator, tol: float = 1e-8) -> Tuple[bool, float]:
    """Admissible when M_W - Gamma*Gamma is positive semidefinite within tol"""
    gap = _gap_matrix(w, gamma)
    lowest = float(linalg.eigvalsh(gap).min()) if gap.size else 0.0
    return lowest >= -tol, lowest


def maximizing_subspace_dim(w: MatrixWeight, gamma: TruncatedOperator, rank_tol: float = WEIGHT_RANK_TOL) -> int:
    """Numerical nullity of M_W - Gamma*Gamma"""
    gap = _gap_matrix(w, gamma)
    if gap.size == 0:
        return 0
    eigvals = np.abs(linalg.eigvalsh(gap))
    scale = float(eigvals.max())
    if scale == 0.0:
        return gap.shape[0]
    threshold = rank_tol * scale
    below = eigvals[eigvals <= threshold]
    above = eigvals[eigvals > threshold]
    if (above.size and above.min() < 10 * threshold) or (below.size and below.max() > threshold / 10):
        logger.warning(f"ill_separated: eigenvalues near the rank threshold {threshold:.3e}")
    return int(below.size)


def maximal_superoptimal_weight(result: SuperoptimalResult, grid_size: Optional[int] = None) -> MatrixWeight:
    """Lambda at t_{d-1}^2 of E*E, the maximal superoptimal weight"""
    grid_size = grid_size or result.grid_size
    weight = MatrixWeight.from_error_symbol(result.error_symbol(), grid_size)
    last = result.t_seq[-1] if result.t_seq else 0.0
    return clip_weight(weight, last ** 2, ClipMode.LAMBDA_UPPER)


def clipped_weight_difference(w1: MatrixWeight, w2: MatrixWeight, a: float,
                              mode: ClipMode = ClipMode.LAMBDA_LOWER) -> float:
    """sup over the grid of the spectral norm of clip_a(W1) - clip_a(W2)"""
    if w1.values.shape != w2.values.shape:
        raise ShapeMismatchError(f"weights differ in shape: {w1.values.shape} vs {w2.values.shape}")
    diff = clip_weight(w1, a, mode).values - clip_weight(w2, a, mode).values
    if diff.size == 0:
        return 0.0
    return float(np.linalg.norm(diff, ord=2, axis=(1, 2)).max())


@dataclass
class IndexSumEntry:
    a: float
    index_sum: int
    subspace_dim: int
    stable: bool

    @property
    def matches(self) -> bool:
        return self.index_sum == self.subspace_dim

    def to_dict(self) -> Dict[str, Any]:
        return {'a': self.a, 'index_sum': self.index_sum, 'subspace_dim': self.subspace_dim,
                'stable': self.stable, 'matches': self.matches}


@dataclass
class IndexSumReport:
    """Index sums against maximizing-subspace dimensions for each distinct superoptimal value"""
    entries: List[IndexSumEntry] = field(default_factory=list)
    weight_profile: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.matches for e in self.entries) and all(d <= WEIGHT_PROFILE_TOL for d in self.weight_profile)

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'entries': [e.to_dict() for e in self.entries],
                'weight_profile_deviation': self.weight_profile}


@dataclass
class InequalityReport:
    """Violations of t'_j <= s_j(Gamma) and of the level-to-level interlacing"""
    extended_checks: List[Dict[str, Any]] = field(default_factory=list)
    level_checks: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def violations(self) -> List[Dict[str, Any]]:
        return [c for c in self.extended_checks + self.level_checks if not c['holds']]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'extended': self.extended_checks, 'levels': self.level_checks}


@dataclass
class ConstancyReport:
    """Flatness of each superoptimal singular-value profile"""
    deviations: List[float] = field(default_factory=list)
    sups: List[float] = field(default_factory=list)
    tol: float = CONSTANCY_TOL

    @property
    def passed(self) -> bool:
        return all(d <= self.tol for d in self.deviations)

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'deviations': self.deviations, 'sups': self.sups}


def _gamma_for(result: SuperoptimalResult, n_in: Optional[int] = None) -> TruncatedOperator:
    sym = result.symbol
    return build_operator(sym, OperatorKind.FOUR_BLOCK, n_in or result.settings.resolve_n_in(sym.degree))


def check_index_sums(result: SuperoptimalResult, gamma: Optional[TruncatedOperator] = None,
                     rank_tol: float = WEIGHT_RANK_TOL) -> IndexSumReport:
    """Compare sum_{t_j >= a} k_j with dim E(Lambda_{a^2}(E*E)) for every distinct value a"""
    gamma = gamma or _gamma_for(result)
    wider = _gamma_for(result, gamma.n_in + STABILITY_STEP)
    weight = MatrixWeight.from_error_symbol(result.error_symbol(), result.grid_size)
    report = IndexSumReport()
    for a, _ in result.nu:
        index_sum = sum(step.k for step in result.steps if step.t >= a - result.settings.eq_tol * result.t_seq[0])
        clipped = clip_weight(weight, a * a, ClipMode.LAMBDA_UPPER)
        dim = maximizing_subspace_dim(clipped, gamma, rank_tol)
        stable = dim == maximizing_subspace_dim(clipped, wider, rank_tol)
        if not stable:
            logger.warning(f"maximizing subspace dimension at a={a:.6g} changes with truncation size")
        report.entries.append(IndexSumEntry(float(a), int(index_sum), dim, stable))

    svals = singular_values_on_grid(sample_on_grid(result.error_symbol(), result.grid_size))
    for j, t in enumerate(result.t_seq[:result.levels]):
        report.weight_profile.append(float(abs(svals[:, j].max() ** 2 - t * t)))
    return report


def check_singular_inequalities(result: SuperoptimalResult, gamma: Optional[TruncatedOperator] = None,
                                slack: float = INEQUALITY_SLACK) -> InequalityReport:
    """t'_j <= s_j(Gamma) and s_i(Gamma_next) <= s_{i+k}(Gamma) at every level"""
    gamma = gamma or _gamma_for(result)
    report = InequalityReport()
    extended = result.extended_t
    top = singular_values(gamma, len(extended))
    for j, value in enumerate(extended):
        report.extended_checks.append({'j': j, 't_ext': value, 's': top[j], 'holds': value <= top[j] + slack})

    for j, step in enumerate(result.steps):
        current = step.gamma_singular_values
        if j + 1 < result.levels:
            following = result.steps[j + 1].gamma_singular_values
        else:
            nxt = step.next_symbol
            if nxt.partition.m1 < 1 or nxt.partition.n1 < 1:
                continue
            following = build_operator(nxt, OperatorKind.FOUR_BLOCK, step.n_in).singular_values().tolist()
        floor = step.essential_lower * (1 + slack) + 1e-9 * max(result.t_seq[0], 1.0)
        for i, value in enumerate(following):
            if i + step.k >= len(current) or current[i + step.k] <= floor:
                break
            bound = current[i + step.k]
            report.level_checks.append({'level': j, 'i': i, 's_next': value, 'bound': bound,
                                        'holds': value <= bound + slack})
    for violation in report.violations:
        logger.warning(f"singular-value inequality violated: {violation}")
    return report


def check_constancy(sym: MatrixSymbol, result: SuperoptimalResult, grid_size: Optional[int] = None,
                    tol: float = CONSTANCY_TOL) -> ConstancyReport:
    """max - min over the grid of s_j((Phi - Q)(zeta)) for every level"""
    grid_size = grid_size or result.grid_size
    error = sym - sym.embed_corrected(result.q)
    svals = singular_values_on_grid(sample_on_grid(error, grid_size))
    report = ConstancyReport(tol=tol)
    for j in range(len(result.t_seq)):
        profile = svals[:, j]
        report.deviations.append(float(profile.max() - profile.min()))
        report.sups.append(float(profile.max()))
    return report
