"""
Spectral factorization - outer factors, inner-outer splitting and thematic completion
Scalar outer functions by cepstral folding, finite Blaschke products and unitary completions on the grid
"""
from typing import List, Optional, Sequence, NamedTuple, Dict, Any, Tuple
from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg

from .errors import (DegenerateInputError, CompletionNotAnalyticError, NotIsometricError,
                     ShapeMismatchError)
from .fourier_symbols import (MatrixSymbol, ScalarSymbol, ColumnSymbol, BlockPartition, Part,
                              symbol_from_grid, sample_on_grid, riesz_project, DEFAULT_TRUNC_TOL)

logger = logging.getLogger(__name__)

NEGATIVE_DENSITY_TOL = 1e-10
DISK_MARGIN = 1e-10
ROOT_MATCH_TOL = 1e-6
COEFF_TRIM_TOL = 1e-10
ISOMETRY_TOL = 1e-8
ANALYTIC_TOL = 1e-8
MAX_COMPLETION_ITERATIONS = 200
CERTIFICATE_WARN = 1e-6
CERTIFICATE_RADII = np.linspace(0.1, 0.9, 9)


class BlaschkeProduct:
    """
    Finite Blaschke product z^p * prod (-conj(a)/|a|) (z - a) / (1 - conj(a) z).
    Zeros at the origin are folded into the monomial power.
    """

    def __init__(self, zeros: Sequence[complex] = (), power: int = 0):
        zeros = np.asarray(list(zeros), dtype=complex)
        at_origin = np.abs(zeros) <= DISK_MARGIN
        self.power = int(power) + int(np.sum(at_origin))
        self.zeros = np.sort_complex(zeros[~at_origin])
        if self.power < 0:
            raise DegenerateInputError(f"Blaschke power must be nonnegative, got {self.power}")
        if np.any(np.abs(self.zeros) >= 1 - DISK_MARGIN):
            raise DegenerateInputError("Blaschke zeros must lie strictly inside the unit disk")

    @property
    def degree(self) -> int:
        return self.power + len(self.zeros)

    def is_trivial(self) -> bool:
        return self.degree == 0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at arbitrary points of the closed disk"""
        points = np.asarray(points, dtype=complex)
        values = points ** self.power
        for a in self.zeros:
            values = values * (-np.conj(a) / abs(a)) * (points - a) / (1 - np.conj(a) * points)
        return values

    def values(self, grid_size: int) -> np.ndarray:
        return self.evaluate(np.exp(2j * np.pi * np.arange(grid_size) / grid_size))

    def as_symbol(self, grid_size: int, tol: float = DEFAULT_TRUNC_TOL) -> ScalarSymbol:
        return ScalarSymbol.from_values(self.values(grid_size), tags=('inner',), tol=tol)

    def divide(self, entry: MatrixSymbol, grid_size: int, tol: float = DEFAULT_TRUNC_TOL) -> MatrixSymbol:
        """entry / B, computed as entry * conj(B) on the circle"""
        scaled = sample_on_grid(entry, grid_size) * np.conj(self.values(grid_size))[:, None, None]
        return symbol_from_grid(scaled, entry.partition, tol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'power': self.power,
            'zeros': [[float(a.real), float(a.imag)] for a in self.zeros]
        }

    def __str__(self):
        return f"BlaschkeProduct(power={self.power}, zeros={len(self.zeros)})"

    def __repr__(self):
        return self.__str__()


class InnerOuterSplit(NamedTuple):
    outer: ScalarSymbol
    inner: ColumnSymbol


class ThematicCompletion(NamedTuple):
    """Analytic co-outer completion V_c of an inner column with its unitary grid samples"""
    v_c: MatrixSymbol
    unitary: np.ndarray
    certificate: float
    iterations: int


@dataclass
class ThematicPair:
    """Unitary-valued V (n x n) and W (m x m) diagonalizing one superoptimal level"""
    v_values: np.ndarray
    w_values: np.ndarray
    v1: ColumnSymbol
    v_c: MatrixSymbol
    w1: ColumnSymbol
    w_c: MatrixSymbol
    v_certificate: float = 1.0
    w_certificate: float = 1.0

    def unitarity_residual(self) -> float:
        """max over nodes of ||U*U - I|| for both V and W"""
        return max(_unitarity_residual(self.v_values), _unitarity_residual(self.w_values))

    def analytic_residual(self) -> float:
        """Negative-frequency energy of V_c and W_c"""
        return max(self.v_c.negative_energy(relative=False), self.w_c.negative_energy(relative=False))


def _unitarity_residual(values: np.ndarray) -> float:
    if values.shape[-1] == 0:
        return 0.0
    gram = np.conj(values).transpose(0, 2, 1) @ values
    return float(np.max(np.abs(gram - np.eye(values.shape[-1]))))


def outer_factor(rho: np.ndarray, eps: Optional[float] = None, tol: float = DEFAULT_TRUNC_TOL,
                 max_degree: Optional[int] = None, tail_tol: Optional[float] = None) -> ScalarSymbol:
    """
    Outer function h with |h|^2 = rho + eps on the grid.
    The cepstrum of log(rho + eps)/2 is folded onto nonnegative frequencies.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    if np.any(rho < -NEGATIVE_DENSITY_TOL):
        raise DegenerateInputError(f"density has negative values down to {rho.min():.3e}",
                                   residual=float(-rho.min()))
    rho = np.maximum(rho, 0.0)
    peak = float(rho.max()) if rho.size else 0.0
    if peak == 0.0:
        raise DegenerateInputError("outer factor of an identically zero density")
    if eps is None:
        eps = 1e-12 * peak
    grid_size = rho.size

    cepstrum = np.fft.fft(np.log(rho + eps) / 2) / grid_size
    half = grid_size // 2
    cepstrum[1:(grid_size + 1) // 2] *= 2
    cepstrum[half + 1:] = 0
    values = np.exp(grid_size * np.fft.ifft(cepstrum))

    h = ScalarSymbol.from_values(values, tags=('outer',), tol=tol, max_degree=max_degree,
                                 tail_tol=tail_tol)
    mismatch = float(np.max(np.abs(np.abs(h.values(grid_size)) ** 2 - (rho + eps))))
    if mismatch > 1e-6 * (peak + eps):
        logger.warning(f"outer factor modulus mismatch {mismatch:.3e} on a {grid_size}-node grid")
    return h


def inner_outer_column(column: ColumnSymbol, grid_size: int, eps: Optional[float] = None,
                       tol: float = DEFAULT_TRUNC_TOL) -> InnerOuterSplit:
    """Split c = c_o * c_i with c_o scalar outer and ||c_i|| = 1 on the circle"""
    values = column.values(grid_size)
    rho = np.sum(np.abs(values) ** 2, axis=1)
    if rho.max() == 0.0:
        raise DegenerateInputError("inner-outer split of a zero column")
    outer = outer_factor(rho, eps=eps, tol=tol)
    inner_values = values / outer.values(grid_size)[:, None]
    inner = ColumnSymbol.from_values(inner_values, column.upper_size, tol=tol)
    return InnerOuterSplit(outer, inner)


def _polynomial_roots(coeffs: np.ndarray, scale: float) -> Tuple[int, np.ndarray]:
    """Vanishing order at the origin and remaining roots of c_0 + c_1 z + ..., ignoring coefficients below the scale"""
    significant = np.nonzero(np.abs(coeffs) > COEFF_TRIM_TOL * scale)[0]
    order = int(significant[0])
    top = int(significant[-1])
    trimmed = coeffs[order:top + 1]
    if trimmed.size < 2:
        return order, np.zeros(0, dtype=complex)
    return order, np.roots(trimmed[::-1])


def gcd_inner_divisor(entries: Sequence[MatrixSymbol], tol: float = ROOT_MATCH_TOL) -> BlaschkeProduct:
    """Greatest common inner divisor of analytic polynomial entries; negligible entries are skipped"""
    analytic = [entry.coeffs[entry.degree:, 0, 0] for entry in entries]
    scale = max((float(np.max(np.abs(c))) for c in analytic if c.size), default=0.0)
    power: Optional[int] = None
    common: Optional[List[complex]] = None
    for coeffs in analytic:
        if scale == 0.0 or np.max(np.abs(coeffs)) <= COEFF_TRIM_TOL * scale:
            continue
        order, roots = _polynomial_roots(coeffs, scale)
        inside = [r for r in roots if abs(r) < 1 - DISK_MARGIN]
        power = order if power is None else min(power, order)
        if common is None:
            common = inside
            continue
        matched = []
        available = list(inside)
        for root in common:
            if not available:
                break
            distances = [abs(root - other) for other in available]
            best = int(np.argmin(distances))
            if distances[best] <= tol:
                matched.append(root)
                available.pop(best)
        common = matched
    if power is None:
        raise DegenerateInputError("greatest common inner divisor of all-zero entries")
    divisor = BlaschkeProduct(common or [], power)
    logger.debug(f"common inner divisor {divisor}")
    return divisor


def _fractional_unitary(rotation: np.ndarray, exponent: float) -> np.ndarray:
    schur_form, basis = linalg.schur(rotation, output='complex')
    phases = np.angle(np.diag(schur_form))
    return (basis * np.exp(1j * exponent * phases)[None, :]) @ np.conj(basis).T


def unitary_grid_completion(iso: np.ndarray, tol: float = ISOMETRY_TOL) -> np.ndarray:
    """
    Append orthonormal columns at every node, rotated to vary continuously between nodes.
    The rotation mismatch left when closing the loop is spread evenly over the grid.
    """
    iso = np.asarray(iso, dtype=complex)
    grid_size, m, r = iso.shape
    gram = np.conj(iso).transpose(0, 2, 1) @ iso
    residual = float(np.max(np.abs(gram - np.eye(r)))) if r else 0.0
    if residual > tol:
        raise NotIsometricError(f"Gram residual {residual:.3e}", residual=residual)
    if r == m:
        return iso

    blocks = np.zeros((grid_size, m, m - r), dtype=complex)
    previous = None
    for l in range(grid_size):
        block = linalg.null_space(np.conj(iso[l]).T) if r else np.eye(m, dtype=complex)
        if previous is not None:
            left, _, right = linalg.svd(np.conj(block).T @ previous)
            block = block @ (left @ right)
        blocks[l] = block
        previous = block
    left, _, right = linalg.svd(np.conj(blocks[-1]).T @ blocks[0])
    closure = left @ right
    for l in range(grid_size):
        blocks[l] = blocks[l] @ _fractional_unitary(closure, l / grid_size)

    out = np.concatenate([iso, blocks], axis=2)
    phases = np.unwrap(np.angle(np.linalg.det(out)))
    turns = int(round(float(phases[-1] - phases[0]) / (2 * np.pi)))
    logger.debug(f"grid completion {m}x{r} -> {m}x{m}, determinant phase turns {turns}")
    return out


def empty_completion(grid_size: int) -> ThematicCompletion:
    """Completion of a scalar inner column: no analytic columns to add"""
    empty = MatrixSymbol(np.zeros((1, 1, 0), dtype=complex), BlockPartition(1, 0, 0, 0))
    return ThematicCompletion(empty, np.ones((grid_size, 1, 1), dtype=complex), 1.0, 0)


def co_outer_certificate(v_c: MatrixSymbol, angles: int = 64) -> float:
    """min over a disk mesh of the smallest singular value of V_c(z)"""
    if v_c.n == 0:
        return 1.0
    theta = 2 * np.pi * np.arange(angles) / angles
    points = (CERTIFICATE_RADII[:, None] * np.exp(1j * theta)[None, :]).ravel()
    analytic = riesz_project(v_c, Part.ANALYTIC)
    svals = np.linalg.svd(analytic.evaluate_at(points), compute_uv=False)
    certificate = float(svals[:, -1].min())
    if certificate < CERTIFICATE_WARN:
        logger.warning(f"co-outer certificate {certificate:.3e} below {CERTIFICATE_WARN:g}")
    return certificate


def _normalize_at_origin(v_c: MatrixSymbol) -> MatrixSymbol:
    """Fix the constant right unitary factor so V_c(0) is lower triangular with positive diagonal"""
    at_origin = v_c.coefficient(0)
    if np.linalg.matrix_rank(at_origin) < v_c.n:
        return v_c
    q, r = linalg.qr(np.conj(at_origin).T, mode='economic')
    diag = np.diag(r)
    magnitude = np.abs(diag)
    # A vanishing pivot (for instance a zero first row of V_c(0)) keeps phase one
    safe = magnitude > ISOMETRY_TOL * max(1.0, float(magnitude.max(initial=0.0)))
    phases = np.where(safe, diag / np.where(safe, magnitude, 1.0), 1.0)
    q = q * phases[None, :]
    return MatrixSymbol(v_c.coeffs @ q, v_c.partition)


def thematic_complete(inner: ColumnSymbol, grid_size: int, divisor: Optional[BlaschkeProduct] = None,
                      tol: float = ANALYTIC_TOL) -> ThematicCompletion:
    """
    Analytic co-outer V_c with (c_i, conj(V_c)) unitary on the grid.
    Closed form for heights up to two; alternating projections above.
    """
    q = inner.height
    column_values = inner.values(grid_size)
    if q == 1:
        empty = MatrixSymbol(np.zeros((1, 1, 0), dtype=complex), BlockPartition(1, 0, 0, 0))
        return ThematicCompletion(empty, column_values[:, :, None], 1.0, 0)

    if q == 2:
        if divisor is None:
            divisor = gcd_inner_divisor(inner.entries())
        swapped = MatrixSymbol(np.stack([-inner.coeffs[:, 1, 0], inner.coeffs[:, 0, 0]], axis=1)[:, :, None])
        v_c = divisor.divide(swapped, grid_size, tol=DEFAULT_TRUNC_TOL)
        v_c = riesz_project(v_c, Part.ANALYTIC).trimmed(DEFAULT_TRUNC_TOL)
        unitary = np.concatenate([column_values[:, :, None], np.conj(sample_on_grid(v_c, grid_size))], axis=2)
        certificate = co_outer_certificate(v_c)
        return ThematicCompletion(v_c, unitary, certificate, 0)

    start = unitary_grid_completion(column_values[:, :, None])
    conj_block = start[:, :, 1:]
    projector = np.eye(q)[None, :, :] - column_values[:, :, None] @ np.conj(column_values)[:, None, :]
    residual = np.inf
    for iteration in range(1, MAX_COMPLETION_ITERATIONS + 1):
        candidate = symbol_from_grid(np.conj(conj_block), BlockPartition(q, 0, q - 1, 0), DEFAULT_TRUNC_TOL)
        residual = candidate.negative_energy(relative=True)
        analytic = riesz_project(candidate, Part.ANALYTIC)
        projected = projector @ np.conj(sample_on_grid(analytic, grid_size))
        left, _, right = np.linalg.svd(projected, full_matrices=False)
        conj_block = left @ right
        if residual <= tol:
            break
    else:
        raise CompletionNotAnalyticError(
            f"negative-frequency energy {residual:.3e} after "
            f"{MAX_COMPLETION_ITERATIONS} iterations", residual=residual)
    v_c = symbol_from_grid(np.conj(conj_block), BlockPartition(q, 0, q - 1, 0), DEFAULT_TRUNC_TOL)
    v_c = _normalize_at_origin(riesz_project(v_c, Part.ANALYTIC).trimmed(DEFAULT_TRUNC_TOL))
    unitary = np.concatenate([column_values[:, :, None], np.conj(sample_on_grid(v_c, grid_size))], axis=2)
    logger.debug(f"thematic completion of height {q} converged in {iteration} iterations, residual {residual:.3e}")
    return ThematicCompletion(v_c, unitary, co_outer_certificate(v_c), iteration)


def assemble_thematic_unitary(column_values: np.ndarray, v_c: MatrixSymbol, upper: int,
                              grid_size: int) -> np.ndarray:
    """
    Unitary grid function ((v1, conj(V_c), *), (v2, O, *)) built from a unit column v
    whose upper block has `upper` rows.
    """
    height = column_values.shape[1]
    if v_c.m != upper:
        raise ShapeMismatchError(f"completion has {v_c.m} rows, expected {upper}")
    iso = np.zeros((grid_size, height, 1 + v_c.n), dtype=complex)
    iso[:, :, 0] = column_values
    if v_c.n:
        iso[:, :upper, 1:] = np.conj(sample_on_grid(v_c, grid_size))
    return unitary_grid_completion(iso, tol=1e-6)
