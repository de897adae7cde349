"""
Truncated operators - finite sections of four-block, Hankel and Toeplitz operators
Norms, singular values, maximizing vectors, winding numbers and kernel dimensions
"""
from typing import List, Dict, Optional, Tuple, Union, NamedTuple
from dataclasses import dataclass, field
from enum import Enum
import logging

import numpy as np
from scipy import linalg

from .errors import (ZeroOperatorError, InsufficientGridError, IndexMismatchError,
                     DegenerateInputError, ShapeMismatchError)
from .fourier_symbols import (MatrixSymbol, ScalarSymbol, ColumnSymbol, BlockPartition,
                              linf_norm, sample_on_grid, next_power_of_two)

logger = logging.getLogger(__name__)

ZERO_OPERATOR_TOL = 1e-12
TIE_TOL = 1e-9
ILL_SEPARATED_TOL = 1e-6
UNIMODULAR_CHECK_TOL = 1e-6
DRIFT_TOL = 1e-6
DEFAULT_RANK_TOL = 1e-8
MIN_WINDING_GRID = 1024


class OperatorKind(Enum):
    """Which compression of multiplication by the symbol is assembled"""
    FOUR_BLOCK = "four_block"
    HANKEL = "hankel"
    TOEPLITZ = "toeplitz"


def default_n_in(degree: int, max_n_in: int = 192) -> int:
    """4*N_sym+8 clamped to [N_sym+8, max(N_sym+8, max_n_in)]"""
    low = degree + 8
    return int(min(max(4 * degree + 8, low), max(low, max_n_in)))


@dataclass
class BasisMap:
    """
    Index maps between matrix rows/columns and (frequency, component) pairs.
    input_modes[c] = (k, j) for column c, output_modes[r] = (l, i) for row r.
    """
    input_modes: np.ndarray
    output_modes: np.ndarray
    n_in: int
    input_height: int
    output_height: int
    input_upper: int
    output_upper: int
    _input_lookup: Dict[Tuple[int, int], int] = field(default_factory=dict, repr=False)
    _output_lookup: Dict[Tuple[int, int], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._input_lookup = {(int(k), int(j)): c for c, (k, j) in enumerate(self.input_modes)}
        self._output_lookup = {(int(l), int(i)): r for r, (l, i) in enumerate(self.output_modes)}

    @classmethod
    def for_kind(cls, kind: OperatorKind, partition: BlockPartition, n_in: int, degree: int) -> 'BasisMap':
        """Build the truncated input/output bases for one operator kind"""
        reach = n_in + degree
        inputs: List[Tuple[int, int]] = []
        outputs: List[Tuple[int, int]] = []
        if kind == OperatorKind.TOEPLITZ:
            inputs = [(k, 0) for k in range(0, n_in + 1)]
            outputs = [(l, 0) for l in range(0, reach + 1)]
            return cls(np.array(inputs), np.array(outputs), n_in, 1, 1, 1, 1)

        n_cols = partition.n1 if kind == OperatorKind.HANKEL else partition.n
        n_rows = partition.m1 if kind == OperatorKind.HANKEL else partition.m
        for j in range(n_cols):
            low = 0 if j < partition.n1 else -n_in
            inputs.extend((k, j) for k in range(low, n_in + 1))
        for i in range(n_rows):
            high = -1 if i < partition.m1 else reach
            outputs.extend((l, i) for l in range(-reach, high + 1))
        return cls(np.array(inputs).reshape(-1, 2), np.array(outputs).reshape(-1, 2), n_in,
                   n_cols, n_rows, min(partition.n1, n_cols), min(partition.m1, n_rows))

    @property
    def input_size(self) -> int:
        return len(self.input_modes)

    @property
    def output_size(self) -> int:
        return len(self.output_modes)

    def input_index(self, k: int, j: int) -> int:
        return self._input_lookup[(k, j)]

    def output_index(self, l: int, i: int) -> int:
        return self._output_lookup[(l, i)]

    def input_column(self, vector: np.ndarray) -> ColumnSymbol:
        """Map an input-space vector back to a column function"""
        return _column_from_modes(vector, self.input_modes, self.input_height, self.input_upper)

    def output_column(self, vector: np.ndarray) -> ColumnSymbol:
        """Map an output-space vector back to a column function"""
        return _column_from_modes(vector, self.output_modes, self.output_height, self.output_upper)


def _column_from_modes(vector: np.ndarray, modes: np.ndarray, height: int, upper: int) -> ColumnSymbol:
    if len(modes) == 0:
        return ColumnSymbol(np.zeros((1, height, 1), dtype=complex), upper)
    degree = int(np.max(np.abs(modes[:, 0])))
    coeffs = np.zeros((2 * degree + 1, height, 1), dtype=complex)
    coeffs[modes[:, 0] + degree, modes[:, 1], 0] = vector
    return ColumnSymbol(coeffs, upper)


def assemble_matrix(sym: MatrixSymbol, basis: BasisMap) -> np.ndarray:
    """Matrix entries ((l,i),(k,j)) = coeff_{i,j}(l-k), zero outside the symbol's window"""
    out_l = basis.output_modes[:, 0][:, None]
    out_i = basis.output_modes[:, 1][:, None]
    in_k = basis.input_modes[:, 0][None, :]
    in_j = basis.input_modes[:, 1][None, :]
    shift = out_l - in_k
    inside = np.abs(shift) <= sym.degree
    index = np.clip(shift + sym.degree, 0, 2 * sym.degree)
    return np.where(inside, sym.coeffs[index, out_i, in_j], 0.0)


@dataclass
class TruncatedOperator:
    """Dense finite section of a multiplication-then-projection operator"""
    matrix: np.ndarray
    basis: BasisMap
    kind: OperatorKind
    symbol: MatrixSymbol
    n_in: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def singular_values(self) -> np.ndarray:
        if self.matrix.size == 0:
            return np.zeros(0)
        return linalg.svd(self.matrix, compute_uv=False)

    def norm(self) -> float:
        svals = self.singular_values()
        return float(svals[0]) if svals.size else 0.0

    def __str__(self):
        return f"TruncatedOperator({self.kind.value}, {self.shape[0]}x{self.shape[1]}, N_in={self.n_in})"


class MaximizingPair(NamedTuple):
    """Operator norm with a maximizing vector f and its normalized image g"""
    t: float
    f: ColumnSymbol
    g: ColumnSymbol
    cluster_size: int
    relative_gap: float


class WindingNumber(NamedTuple):
    value: int
    residual: float


def build_operator(sym: MatrixSymbol, kind: Union[OperatorKind, str], n_in: int) -> TruncatedOperator:
    """Assemble the truncated four-block, Hankel or Toeplitz matrix of a symbol"""
    kind = OperatorKind(kind)
    if n_in < sym.degree:
        logger.debug(f"N_in={n_in} below symbol degree {sym.degree}; truncation is not exact")
    source = sym
    if kind == OperatorKind.TOEPLITZ and sym.shape != (1, 1):
        raise ShapeMismatchError(f"Toeplitz truncation needs a scalar symbol, got shape {sym.shape}")
    if kind == OperatorKind.HANKEL:
        source = sym.block11()
    basis = BasisMap.for_kind(kind, sym.partition, n_in, source.degree)
    matrix = assemble_matrix(source, basis)
    return TruncatedOperator(matrix, basis, kind, sym, n_in)


def singular_values(op: TruncatedOperator, count: int) -> List[float]:
    """Leading `count` singular values, zero padded"""
    svals = op.singular_values()
    out = np.zeros(count)
    take = min(count, svals.size)
    out[:take] = svals[:take]
    return out.tolist()


def _normalize_phase(vector: np.ndarray) -> np.ndarray:
    """Rotate so the largest-magnitude coefficient is real positive"""
    lead = int(np.argmax(np.abs(vector)))
    value = vector[lead]
    return vector * (np.conj(value) / abs(value))


def _pick_in_cluster(right: np.ndarray, seed: Optional[int]) -> np.ndarray:
    """Choose one unit vector from an orthonormal basis of the top singular subspace"""
    if right.shape[1] == 1:
        return right[:, 0]
    if seed is not None:
        rng = np.random.default_rng(seed)
        weights = rng.standard_normal(right.shape[1]) + 1j * rng.standard_normal(right.shape[1])
        vector = right @ weights
        return vector / np.linalg.norm(vector)
    for row in range(right.shape[0]):
        projection = right @ np.conj(right[row, :])
        size = np.linalg.norm(projection)
        if size > 1e-8:
            return projection / size
    return right[:, 0]


def norm_and_maximizing_vector(op: TruncatedOperator, seed: Optional[int] = None) -> MaximizingPair:
    """Largest singular value with a deterministic maximizing vector"""
    if op.matrix.size == 0:
        raise ZeroOperatorError("empty truncated operator")
    u, s, vh = linalg.svd(op.matrix, full_matrices=False)
    t = float(s[0])
    if t <= ZERO_OPERATOR_TOL:
        raise ZeroOperatorError(f"norm {t:.3e}", residual=t)

    cluster = int(np.sum(t - s < TIE_TOL * t))
    gap = float((t - s[cluster]) / t) if cluster < s.size else 1.0
    if cluster > 1:
        logger.debug(f"top singular value {t:.6g} has multiplicity {cluster}")
    elif gap < ILL_SEPARATED_TOL:
        logger.warning(f"ill_separated: relative spectral gap {gap:.3e} at t={t:.6g}")

    right = np.conj(vh[:cluster]).T
    vector = _normalize_phase(_pick_in_cluster(right, seed))
    image = op.matrix @ vector / t
    f = op.basis.input_column(vector)
    g = op.basis.output_column(image)
    return MaximizingPair(t, f, g, cluster, gap)


def norm_drift(sym: MatrixSymbol, kind: Union[OperatorKind, str], n_in: int, step: int = 8) -> float:
    """Relative change of the truncated norm when N_in grows by `step`"""
    base = build_operator(sym, kind, n_in).norm()
    wider = build_operator(sym, kind, n_in + step).norm()
    drift = abs(wider - base) / max(wider, ZERO_OPERATOR_TOL)
    if drift > DRIFT_TOL:
        logger.warning(f"truncation drift {drift:.3e} between N_in={n_in} and N_in={n_in + step}")
    return drift


def _unimodular_values(u: Union[ScalarSymbol, MatrixSymbol, np.ndarray], grid_size: Optional[int]) -> np.ndarray:
    if isinstance(u, MatrixSymbol):
        size = grid_size or max(MIN_WINDING_GRID, next_power_of_two(4 * (u.degree + 1)))
        return sample_on_grid(u, size)[:, 0, 0]
    values = np.asarray(u, dtype=complex).ravel()
    return values


def winding_number(u: Union[ScalarSymbol, np.ndarray], grid_size: Optional[int] = None) -> WindingNumber:
    """Total phase increment of a unimodular function divided by 2*pi"""
    values = _unimodular_values(u, grid_size)
    deviation = float(np.max(np.abs(np.abs(values) - 1.0)))
    if deviation > UNIMODULAR_CHECK_TOL:
        raise DegenerateInputError(f"winding number needs a unimodular function; deviation {deviation:.3e}",
                                   residual=deviation)
    increments = np.angle(np.roll(values, -1) / values)
    worst = float(np.max(np.abs(increments)))
    if worst > np.pi / 2:
        raise InsufficientGridError(
            f"phase jump {worst:.3f} rad on a {values.size}-node grid", residual=worst)
    turns = float(np.sum(increments) / (2 * np.pi))
    value = int(round(turns))
    return WindingNumber(value, abs(turns - value))


def toeplitz_kernel_dim(u: ScalarSymbol, n_in: int, rank_tol: float = DEFAULT_RANK_TOL,
                        grid_size: Optional[int] = None) -> int:
    """Nullity of the truncated Toeplitz matrix, cross-checked against the winding number"""
    op = build_operator(u, OperatorKind.TOEPLITZ, n_in)
    svals = op.singular_values()
    scale = svals[0] if svals.size else 0.0
    nullity = int(np.sum(svals < rank_tol * scale)) + max(op.shape[1] - svals.size, 0)
    expected = max(-winding_number(u, grid_size).value, 0)
    if nullity != expected:
        raise IndexMismatchError(
            f"Toeplitz nullity {nullity} but winding gives {expected}",
            residual=float(abs(nullity - expected)))
    return nullity


def essential_norm_lower_bound(sym: MatrixSymbol, grid_size: Optional[int] = None) -> float:
    """max of sup-norms of the bottom row block and the right column block"""
    bottom = sym.bottom_row_block()
    right = sym.right_column_block()
    bound = 0.0
    for block in (bottom, right):
        if not block.is_empty():
            bound = max(bound, linf_norm(block, grid_size))
    return bound


def transpose_gap(sym: MatrixSymbol, n_in: int, count: Optional[int] = None) -> float:
    """Largest difference between singular values of the operator and of its transposed symbol"""
    direct = build_operator(sym, OperatorKind.FOUR_BLOCK, n_in)
    flipped = build_operator(sym.transpose(), OperatorKind.FOUR_BLOCK, n_in)
    count = count or min(min(direct.shape), min(flipped.shape))
    a = np.array(singular_values(direct, count))
    b = np.array(singular_values(flipped, count))
    return float(np.max(np.abs(a - b))) if count else 0.0
