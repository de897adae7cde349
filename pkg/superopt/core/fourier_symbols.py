"""
Fourier symbols - matrix functions on the unit circle
Finite Fourier expansions, uniform grid samples, Riesz projections and symbol algebra
"""
from typing import List, Dict, Optional, Tuple, Any, Iterable, NamedTuple
from dataclasses import dataclass, asdict
from enum import Enum
import logging

import numpy as np

from .errors import AliasingError, ShapeMismatchError, SymbolFormatError, SymbolTruncationError

logger = logging.getLogger(__name__)

ROUND_TRIP_TOL = 1e-10
UNIMODULAR_TOL = 1e-8
INNER_TOL = 1e-10
DEFAULT_TRUNC_TOL = 1e-14


class Part(Enum):
    """Frequency halves kept by a Riesz projection"""
    ANALYTIC = "analytic"          # k >= 0
    NONNEG = "nonneg"              # k >= 0
    ANTIANALYTIC = "antianalytic"  # k < 0
    NEG = "neg"                    # k < 0

    @property
    def keeps_nonnegative(self) -> bool:
        return self in (Part.ANALYTIC, Part.NONNEG)


@dataclass(frozen=True)
class BlockPartition:
    """Row and column block sizes of a four-block symbol"""
    m1: int
    m2: int
    n1: int
    n2: int

    def __post_init__(self):
        for name in ('m1', 'm2', 'n1', 'n2'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise SymbolFormatError(f"partition field {name} must be a nonnegative integer, got {value!r}")

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def levels(self) -> int:
        """Upper bound on the number of superoptimal levels"""
        return min(self.m1, self.n1)

    def require_corrected_block(self):
        """Reject partitions without a correctable (1,1) block"""
        if self.m < 1 or self.n < 1:
            raise SymbolFormatError("symbol must have at least one row and one column")
        if self.m1 < 1 or self.n1 < 1:
            raise SymbolFormatError("empty corrected block")

    def transpose(self) -> 'BlockPartition':
        return BlockPartition(self.n1, self.n2, self.m1, self.m2)

    def reduced(self) -> 'BlockPartition':
        """Partition of the next level symbol"""
        return BlockPartition(max(self.m1 - 1, 0), self.m2, max(self.n1 - 1, 0), self.n2)

    def to_dict(self) -> Dict[str, int]:
        return {k: int(v) for k, v in asdict(self).items()}


def next_power_of_two(value: int) -> int:
    """Smallest power of two that is >= value"""
    power = 1
    while power < value:
        power *= 2
    return power


def default_grid_size(degree: int) -> int:
    """4*(N+1) rounded up to the next power of two"""
    return next_power_of_two(4 * (degree + 1))


def grid_points(grid_size: int) -> np.ndarray:
    """Nodes exp(2*pi*i*l/L) of the uniform grid"""
    return np.exp(2j * np.pi * np.arange(grid_size) / grid_size)


def grid_angles(grid_size: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(grid_size) / grid_size


class SingularProfile(NamedTuple):
    """Per-node j-th singular value with its sup and flatness"""
    values: np.ndarray
    sup: float
    flatness: float


class MatrixSymbol:
    """
    Matrix function on the circle stored by its Fourier coefficients.
    coeffs[k + N] holds the m x n coefficient of z^k for -N <= k <= N.
    """

    def __init__(self, coeffs: np.ndarray, partition: Optional[BlockPartition] = None):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[0] % 2 != 1:
            raise ShapeMismatchError(f"coefficient array must have shape (2N+1, m, n), got {coeffs.shape}")
        if partition is None:
            partition = BlockPartition(coeffs.shape[1], 0, coeffs.shape[2], 0)
        if (partition.m, partition.n) != coeffs.shape[1:]:
            raise ShapeMismatchError(
                f"partition {partition.m}x{partition.n} does not match coefficient shape {coeffs.shape[1:]}")
        self.coeffs = coeffs
        self.coeffs.setflags(write=False)
        self.partition = partition

    # Construction helpers
    @classmethod
    def zeros(cls, partition: BlockPartition, degree: int = 0) -> 'MatrixSymbol':
        return MatrixSymbol(np.zeros((2 * degree + 1, partition.m, partition.n), dtype=complex), partition)

    @classmethod
    def constant(cls, matrix, partition: Optional[BlockPartition] = None) -> 'MatrixSymbol':
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return MatrixSymbol(matrix[None, :, :], partition)

    @classmethod
    def from_coefficients(cls, mapping: Dict[int, Any],
                          partition: Optional[BlockPartition] = None) -> 'MatrixSymbol':
        """Build from a {frequency: matrix} map"""
        if not mapping:
            if partition is None:
                raise ShapeMismatchError("empty coefficient map needs an explicit partition")
            return MatrixSymbol.zeros(partition)
        mats = {int(k): np.atleast_2d(np.asarray(v, dtype=complex)) for k, v in mapping.items()}
        shape = next(iter(mats.values())).shape
        for k, mat in mats.items():
            if mat.shape != shape:
                raise ShapeMismatchError(f"coefficient at k={k} has shape {mat.shape}, expected {shape}")
        degree = max(abs(k) for k in mats)
        coeffs = np.zeros((2 * degree + 1,) + shape, dtype=complex)
        for k, mat in mats.items():
            coeffs[k + degree] = mat
        return MatrixSymbol(coeffs, partition)

    # Basic properties
    @property
    def degree(self) -> int:
        """Truncation degree N_sym"""
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def m(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.m, self.n

    def frequencies(self) -> np.ndarray:
        return np.arange(-self.degree, self.degree + 1)

    def coefficient(self, k: int) -> np.ndarray:
        """Coefficient matrix of z^k (zero outside the stored window)"""
        if abs(k) > self.degree:
            return np.zeros(self.shape, dtype=complex)
        return self.coeffs[k + self.degree]

    def is_empty(self) -> bool:
        return self.m == 0 or self.n == 0

    def energy(self) -> float:
        """L2 energy sum_k ||coeff_k||_F^2"""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def negative_energy(self, relative: bool = True) -> float:
        """Energy carried by negative frequencies"""
        neg = float(np.sum(np.abs(self.coeffs[:self.degree]) ** 2))
        if not relative:
            return neg
        total = self.energy()
        return neg / total if total > 0 else 0.0

    def with_partition(self, partition: BlockPartition) -> 'MatrixSymbol':
        return MatrixSymbol(self.coeffs, partition)

    def padded(self, degree: int) -> 'MatrixSymbol':
        """Same symbol stored on a wider frequency window"""
        if degree <= self.degree:
            return self
        extra = degree - self.degree
        coeffs = np.pad(self.coeffs, ((extra, extra), (0, 0), (0, 0)))
        return MatrixSymbol(coeffs, self.partition)

    def trimmed(self, tol: float = 0.0) -> 'MatrixSymbol':
        """Drop outer frequencies whose coefficients are below tol relative to the largest one"""
        norms = np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=(1, 2)))
        scale = norms.max() if norms.size else 0.0
        if scale == 0.0:
            return MatrixSymbol.zeros(self.partition)
        keep = np.nonzero(norms > tol * scale)[0]
        degree = int(np.max(np.abs(keep - self.degree)))
        start = self.degree - degree
        return MatrixSymbol(self.coeffs[start:start + 2 * degree + 1], self.partition)

    # Grid evaluation
    def sample(self, grid_size: Optional[int] = None) -> np.ndarray:
        return sample_on_grid(self, grid_size if grid_size is not None else default_grid_size(self.degree))

    def evaluate_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate sum_k coeff_k z^k at arbitrary nonzero points"""
        points = np.asarray(points, dtype=complex).ravel()
        powers = points[:, None] ** self.frequencies()[None, :]
        return np.einsum('pk,kij->pij', powers, self.coeffs)

    # Block access
    def block(self, rows: slice, cols: slice, partition: Optional[BlockPartition] = None) -> 'MatrixSymbol':
        return MatrixSymbol(self.coeffs[:, rows, cols], partition)

    def block11(self) -> 'MatrixSymbol':
        p = self.partition
        return self.block(slice(0, p.m1), slice(0, p.n1))

    def bottom_row_block(self) -> 'MatrixSymbol':
        """(Phi21 Phi22)"""
        p = self.partition
        return self.block(slice(p.m1, p.m), slice(0, p.n))

    def right_column_block(self) -> 'MatrixSymbol':
        """(Phi12; Phi22)"""
        p = self.partition
        return self.block(slice(0, p.m), slice(p.n1, p.n))

    def embed_corrected(self, q: 'MatrixSymbol') -> 'MatrixSymbol':
        """diag(Q, 0) on this symbol's partition"""
        p = self.partition
        if q.shape != (p.m1, p.n1):
            raise ShapeMismatchError(f"correction has shape {q.shape}, expected {(p.m1, p.n1)}")
        coeffs = np.zeros((2 * q.degree + 1, p.m, p.n), dtype=complex)
        coeffs[:, :p.m1, :p.n1] = q.coeffs
        return MatrixSymbol(coeffs, p)

    # Algebra
    def _check_same_shape(self, other: 'MatrixSymbol'):
        if self.shape != other.shape:
            raise ShapeMismatchError(f"shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: 'MatrixSymbol') -> 'MatrixSymbol':
        self._check_same_shape(other)
        degree = max(self.degree, other.degree)
        return MatrixSymbol(self.padded(degree).coeffs + other.padded(degree).coeffs, self.partition)

    def __sub__(self, other: 'MatrixSymbol') -> 'MatrixSymbol':
        return self + other.scale(-1.0)

    def __neg__(self) -> 'MatrixSymbol':
        return self.scale(-1.0)

    def scale(self, factor: complex) -> 'MatrixSymbol':
        return MatrixSymbol(self.coeffs * factor, self.partition)

    def __mul__(self, factor) -> 'MatrixSymbol':
        if isinstance(factor, MatrixSymbol):
            return self.times_scalar_symbol(factor)
        return self.scale(factor)

    __rmul__ = __mul__

    def __matmul__(self, other: 'MatrixSymbol') -> 'MatrixSymbol':
        """Pointwise matrix product; degrees add"""
        if self.n != other.m:
            raise ShapeMismatchError(f"cannot multiply {self.shape} by {other.shape}")
        degree = self.degree + other.degree
        out = np.zeros((2 * degree + 1, self.m, other.n), dtype=complex)
        width = other.coeffs.shape[0]
        for i, coeff in enumerate(self.coeffs):
            if not np.any(coeff):
                continue
            out[i:i + width] += np.einsum('ij,kjl->kil', coeff, other.coeffs)
        partition = BlockPartition(self.partition.m1, self.partition.m2,
                                   other.partition.n1, other.partition.n2)
        return MatrixSymbol(out, partition)

    def times_scalar_symbol(self, scalar: 'MatrixSymbol') -> 'MatrixSymbol':
        """Multiply every entry by a 1x1 symbol"""
        if scalar.shape != (1, 1):
            raise ShapeMismatchError(f"expected a scalar symbol, got shape {scalar.shape}")
        degree = self.degree + scalar.degree
        out = np.zeros((2 * degree + 1, self.m, self.n), dtype=complex)
        width = self.coeffs.shape[0]
        for i, value in enumerate(scalar.coeffs[:, 0, 0]):
            if value != 0:
                out[i:i + width] += value * self.coeffs
        return MatrixSymbol(out, self.partition)

    def shift(self, power: int) -> 'MatrixSymbol':
        """Multiply by z^power"""
        degree = self.degree + abs(power)
        out = np.zeros((2 * degree + 1, self.m, self.n), dtype=complex)
        start = degree - self.degree + power
        out[start:start + self.coeffs.shape[0]] = self.coeffs
        return MatrixSymbol(out, self.partition)

    def adjoint(self) -> 'MatrixSymbol':
        """Pointwise conjugate transpose: coeff_k -> coeff_{-k}^*"""
        return MatrixSymbol(np.conj(self.coeffs[::-1]).transpose(0, 2, 1), self.partition.transpose())

    def transpose(self) -> 'MatrixSymbol':
        return MatrixSymbol(self.coeffs.transpose(0, 2, 1), self.partition.transpose())

    def conj(self) -> 'MatrixSymbol':
        """Pointwise complex conjugate: coeff_k -> conj(coeff_{-k})"""
        return MatrixSymbol(np.conj(self.coeffs[::-1]), self.partition)

    # Serialization
    def to_dict(self) -> Dict[str, Any]:
        """Convert to the JSON symbol format"""
        entries = []
        for k in self.frequencies():
            coeff = self.coefficient(int(k))
            if not np.any(coeff):
                continue
            entries.append({
                'k': int(k),
                're': coeff.real.tolist(),
                'im': coeff.imag.tolist()
            })
        return {'partition': self.partition.to_dict(), 'coeffs': entries}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], require_corrected: bool = True) -> 'MatrixSymbol':
        """Parse the JSON symbol format; raises SymbolFormatError listing all violations"""
        violations = validate_symbol_dict(data, require_corrected=require_corrected)
        if violations:
            raise SymbolFormatError("; ".join(violations))
        p = data['partition']
        partition = BlockPartition(int(p['m1']), int(p['m2']), int(p['n1']), int(p['n2']))
        mapping = {}
        for entry in data.get('coeffs', []):
            re = np.asarray(entry['re'], dtype=float).reshape(partition.m, partition.n)
            im = np.asarray(entry.get('im', np.zeros_like(re)), dtype=float).reshape(partition.m, partition.n)
            mapping[int(entry['k'])] = re + 1j * im
        return cls.from_coefficients(mapping, partition) if mapping else cls.zeros(partition)

    def __str__(self):
        return f"MatrixSymbol({self.m}x{self.n}, N={self.degree}, partition={self.partition.to_dict()})"

    def __repr__(self):
        return self.__str__()


class ScalarSymbol(MatrixSymbol):
    """1x1 symbol with optional outer/inner/unimodular tags"""

    def __init__(self, coeffs: np.ndarray, tags: Iterable[str] = ()):
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1, 1, 1)
        super().__init__(coeffs, BlockPartition(1, 0, 1, 0))
        self.tags = frozenset(tags)
        self.check_tags()

    @classmethod
    def wrap(cls, sym: MatrixSymbol, tags: Iterable[str] = ()) -> 'ScalarSymbol':
        if sym.shape != (1, 1):
            raise ShapeMismatchError(f"expected a 1x1 symbol, got {sym.shape}")
        return cls(sym.coeffs, tags)

    @classmethod
    def from_polynomial(cls, ascending: Iterable[complex], tags: Iterable[str] = ()) -> 'ScalarSymbol':
        """Analytic polynomial from its coefficients c_0, c_1, ..."""
        ascending = np.asarray(list(ascending), dtype=complex)
        degree = max(len(ascending) - 1, 0)
        coeffs = np.zeros(2 * degree + 1, dtype=complex)
        coeffs[degree:degree + len(ascending)] = ascending
        return cls(coeffs, tags)

    @classmethod
    def monomial(cls, power: int, scale: complex = 1.0, tags: Iterable[str] = ()) -> 'ScalarSymbol':
        degree = abs(power)
        coeffs = np.zeros(2 * degree + 1, dtype=complex)
        coeffs[degree + power] = scale
        return cls(coeffs, tags)

    @classmethod
    def from_values(cls, values: np.ndarray, tags: Iterable[str] = (),
                    tol: float = DEFAULT_TRUNC_TOL, max_degree: Optional[int] = None,
                    tail_tol: Optional[float] = None) -> 'ScalarSymbol':
        sym = symbol_from_grid(np.asarray(values).reshape(-1, 1, 1), BlockPartition(1, 0, 1, 0),
                               tol, max_degree, tail_tol)
        return cls(sym.coeffs, tags)

    def values(self, grid_size: Optional[int] = None) -> np.ndarray:
        return self.sample(grid_size)[:, 0, 0]

    def analytic_coefficients(self) -> np.ndarray:
        """Coefficients c_0, c_1, ..., c_N"""
        return self.coeffs[self.degree:, 0, 0]

    def check_tags(self, grid_size: Optional[int] = None):
        """Verify the unimodular and inner tags"""
        if not self.tags & {'unimodular', 'inner'}:
            return
        values = self.values(grid_size or max(default_grid_size(self.degree), 256))
        deviation = float(np.max(np.abs(np.abs(values) - 1.0)))
        if deviation > UNIMODULAR_TOL:
            raise ShapeMismatchError(f"symbol tagged unimodular deviates from |u|=1 by {deviation:.3e}")
        if 'inner' in self.tags:
            negative = float(np.sum(np.abs(self.coeffs[:self.degree, 0, 0]) ** 2))
            if negative > INNER_TOL:
                raise ShapeMismatchError(f"symbol tagged inner has negative-frequency energy {negative:.3e}")

    def __str__(self):
        tags = ",".join(sorted(self.tags))
        return f"ScalarSymbol(N={self.degree}, tags={tags})"


class ColumnSymbol(MatrixSymbol):
    """Column function split into an upper block of `upper_size` rows and a lower block"""

    def __init__(self, coeffs: np.ndarray, upper_size: Optional[int] = None):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 2:
            coeffs = coeffs[:, :, None]
        if coeffs.shape[2] != 1:
            raise ShapeMismatchError(f"column symbol must have one column, got {coeffs.shape[2]}")
        height = coeffs.shape[1]
        upper = height if upper_size is None else upper_size
        if not 0 <= upper <= height:
            raise ShapeMismatchError(f"upper block size {upper} outside 0..{height}")
        super().__init__(coeffs, BlockPartition(upper, height - upper, 1, 0))

    @classmethod
    def wrap(cls, sym: MatrixSymbol, upper_size: Optional[int] = None) -> 'ColumnSymbol':
        return cls(sym.coeffs, upper_size)

    @classmethod
    def from_values(cls, values: np.ndarray, upper_size: Optional[int] = None,
                    tol: float = DEFAULT_TRUNC_TOL, max_degree: Optional[int] = None,
                    tail_tol: Optional[float] = None) -> 'ColumnSymbol':
        values = np.asarray(values, dtype=complex)
        sym = symbol_from_grid(values.reshape(values.shape[0], -1, 1), None, tol, max_degree, tail_tol)
        return cls(sym.coeffs, upper_size)

    @property
    def height(self) -> int:
        return self.m

    @property
    def upper_size(self) -> int:
        return self.partition.m1

    def upper(self) -> 'ColumnSymbol':
        return ColumnSymbol(self.coeffs[:, :self.upper_size, :])

    def lower(self) -> 'ColumnSymbol':
        return ColumnSymbol(self.coeffs[:, self.upper_size:, :])

    def entries(self) -> List[ScalarSymbol]:
        return [ScalarSymbol(self.coeffs[:, i, 0]) for i in range(self.height)]

    def values(self, grid_size: Optional[int] = None) -> np.ndarray:
        """Grid samples with shape (L, height)"""
        return self.sample(grid_size)[:, :, 0]

    def __str__(self):
        return f"ColumnSymbol(height={self.height}, upper={self.upper_size}, N={self.degree})"


def symbol_from_grid(values: np.ndarray, partition: Optional[BlockPartition] = None,
                     tol: float = DEFAULT_TRUNC_TOL, max_degree: Optional[int] = None,
                     tail_tol: Optional[float] = None) -> MatrixSymbol:
    """
    Recover Fourier coefficients from samples on the uniform grid.
    Frequencies |k| < L/2 are kept; coefficients below tol relative to the largest are
    dropped from the outer edge of the window.
    Truncation to max_degree raises SymbolTruncationError when the dropped tail exceeds
    tail_tol relative to the coefficient norm; without tail_tol it only warns.
    """
    values = np.asarray(values, dtype=complex)
    if values.ndim == 1:
        values = values[:, None, None]
    grid_size = values.shape[0]
    spectrum = np.fft.fft(values, axis=0) / grid_size
    top = (grid_size - 1) // 2
    coeffs = np.concatenate([spectrum[grid_size - top:], spectrum[:top + 1]], axis=0)
    sym = MatrixSymbol(coeffs, partition)
    trimmed = sym.trimmed(tol)
    if max_degree is not None and trimmed.degree > max_degree:
        start = trimmed.degree - max_degree
        dropped = np.concatenate([trimmed.coeffs[:start], trimmed.coeffs[-start:]])
        tail = float(np.sqrt(np.sum(np.abs(dropped) ** 2)))
        total = float(np.sqrt(np.sum(np.abs(trimmed.coeffs) ** 2)))
        if tail_tol is not None and tail > tail_tol * total:
            raise SymbolTruncationError(f"degree {trimmed.degree} exceeds cap {max_degree}; "
                                        f"dropped tail norm {tail:.3e}", residual=tail)
        logger.warning(f"symbol truncated to degree {max_degree}; dropped tail norm {tail:.3e}")
        trimmed = MatrixSymbol(trimmed.coeffs[start:start + 2 * max_degree + 1], partition)
    return trimmed


def sample_on_grid(sym: MatrixSymbol, grid_size: int) -> np.ndarray:
    """Values Phi(zeta_l) at zeta_l = exp(2*pi*i*l/L), shape (L, m, n)"""
    if grid_size < 2 * sym.degree + 2:
        raise AliasingError(f"grid size {grid_size} < 2*N_sym+2 = {2 * sym.degree + 2}")
    buffer = np.zeros((grid_size, sym.m, sym.n), dtype=complex)
    buffer[sym.frequencies() % grid_size] = sym.coeffs
    return grid_size * np.fft.ifft(buffer, axis=0)


def riesz_project(sym: MatrixSymbol, part: Part) -> MatrixSymbol:
    """Keep frequencies k >= 0 (analytic) or k < 0 (antianalytic)"""
    part = Part(part)
    coeffs = np.array(sym.coeffs)
    if part.keeps_nonnegative:
        coeffs[:sym.degree] = 0
    else:
        coeffs[sym.degree:] = 0
    return MatrixSymbol(coeffs, sym.partition)


def singular_values_on_grid(values: np.ndarray) -> np.ndarray:
    """Descending singular values at every node, shape (L, min(m, n))"""
    if values.shape[1] == 0 or values.shape[2] == 0:
        return np.zeros((values.shape[0], 0))
    svals = np.linalg.svd(values, compute_uv=False)
    return -np.sort(-svals, axis=1)


def linf_norm(sym: MatrixSymbol, grid_size: Optional[int] = None) -> float:
    """Max over the grid of the largest singular value"""
    if sym.is_empty():
        return 0.0
    svals = singular_values_on_grid(sym.sample(grid_size))
    return float(svals[:, 0].max())


def sj_profile(sym: MatrixSymbol, j: int, grid_size: Optional[int] = None) -> SingularProfile:
    """Per-node j-th singular value, its sup s_j^inf and flatness max-min"""
    if not 0 <= j < min(sym.m, sym.n):
        raise ShapeMismatchError(f"singular index {j} out of range for a {sym.m}x{sym.n} symbol")
    profile = singular_values_on_grid(sym.sample(grid_size))[:, j]
    return SingularProfile(profile, float(profile.max()), float(profile.max() - profile.min()))


def validate_symbol_dict(data: Any, require_corrected: bool = True) -> List[str]:
    """Shape and invariant violations of a JSON symbol document (empty list when valid)"""
    violations: List[str] = []
    if not isinstance(data, dict):
        return ["document must be a JSON object"]
    part = data.get('partition')
    if not isinstance(part, dict):
        return ["missing partition"]
    sizes = {}
    for name in ('m1', 'm2', 'n1', 'n2'):
        value = part.get(name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            violations.append(f"partition field {name} must be a nonnegative integer")
        else:
            sizes[name] = value
    if len(sizes) < 4:
        return violations
    m = sizes['m1'] + sizes['m2']
    n = sizes['n1'] + sizes['n2']
    if require_corrected and (sizes['m1'] < 1 or sizes['n1'] < 1):
        violations.append("empty corrected block")
    if m < 1 or n < 1:
        violations.append("symbol must have at least one row and one column")

    entries = data.get('coeffs', [])
    if not isinstance(entries, list):
        return violations + ["coeffs must be a list"]
    seen = set()
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict) or 'k' not in entry or 're' not in entry:
            violations.append(f"coefficient entry {index} needs fields k and re")
            continue
        k = entry['k']
        if not isinstance(k, int) or isinstance(k, bool):
            violations.append(f"coefficient entry {index}: k must be an integer")
            continue
        if k in seen:
            violations.append(f"duplicate k={k}")
        seen.add(k)
        for field_name in ('re', 'im'):
            if field_name not in entry:
                continue
            try:
                shape = np.asarray(entry[field_name], dtype=float).shape
            except (TypeError, ValueError):
                violations.append(f"k={k}: {field_name} is not a numeric matrix")
                continue
            if shape != (m, n):
                violations.append(f"k={k}: {field_name} has shape {shape}, expected shape ({m}, {n})")
    return violations
