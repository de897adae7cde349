"""
Superoptimal solver - level-by-level superoptimal correction of a four-block symbol
Level-optimal minimax, maximizing-vector reduction, base case, back-substitution and thematic factorization
"""
from typing import List, Dict, Optional, Tuple, Any, NamedTuple
from dataclasses import dataclass, field, asdict, fields, replace
import logging

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp
import cvxpy as cp

from .errors import (SuperoptError, EssentialNormHypothesisError, BaseCaseError, ShapeMismatchError,
                     OptimalSolveNotConvergedError, ReductionFailedError, FactorizationError,
                     SymbolFormatError, SymbolTruncationError, NumericalError)
from .fourier_symbols import (MatrixSymbol, ScalarSymbol, ColumnSymbol, BlockPartition, Part,
                              sample_on_grid, symbol_from_grid, riesz_project, grid_points,
                              next_power_of_two, linf_norm)
from .truncated_operators import (OperatorKind, MaximizingPair, build_operator, norm_and_maximizing_vector,
                                  essential_norm_lower_bound, winding_number, toeplitz_kernel_dim,
                                  norm_drift, default_n_in, ZERO_OPERATOR_TOL)
from .spectral_factorization import (BlaschkeProduct, ThematicPair, outer_factor, inner_outer_column,
                                     gcd_inner_divisor, thematic_complete, assemble_thematic_unitary,
                                     empty_completion)

logger = logging.getLogger(__name__)

TRANSPOSE_MODES = ('auto', 'on', 'off')
NORM_CHAIN_SLACK = 1e-8
BASE_CASE_ANALYTIC_TOL = 1e-6
RECONSTRUCTION_TOL = 1e-5
START_TEMPERATURE = 1e-1
FINAL_TEMPERATURE = 1e-7
SMOOTHING_ITERATIONS = 200


@dataclass
class SolverSettings:
    """Numerical settings shared by every level of the recursion"""
    work_grid_size: int = 1024
    n_in: Optional[int] = None
    max_n_in: int = 192
    degree_M: Optional[int] = None
    max_degree: int = 64
    tol_gap: float = 1e-6
    zero_tol: float = 1e-9
    eq_tol: float = 1e-6
    rank_tol: float = 1e-8
    sandwich_tol: float = 1e-6
    hypothesis_margin: float = 1e-6
    max_symbol_degree: int = 128
    symbol_degree_limit: int = 512
    tail_tol: float = 1e-7
    trunc_tol: float = 1e-13
    align_degree: Optional[int] = None
    tie_break_seed: Optional[int] = None
    transpose: str = "auto"
    check_indices: bool = True
    certify_level_optimal: bool = True

    def __post_init__(self):
        for name in ('tol_gap', 'zero_tol', 'eq_tol', 'rank_tol', 'sandwich_tol', 'hypothesis_margin', 'trunc_tol',
                     'tail_tol'):
            if not getattr(self, name) > 0:
                raise SymbolFormatError(f"setting {name} must be positive")
        if self.transpose not in TRANSPOSE_MODES:
            raise SymbolFormatError(f"transpose must be one of {TRANSPOSE_MODES}, got {self.transpose!r}")
        if self.work_grid_size < 16:
            raise SymbolFormatError("work_grid_size must be at least 16")
        if self.symbol_degree_limit < self.max_symbol_degree:
            raise SymbolFormatError("symbol_degree_limit must be at least max_symbol_degree")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SolverSettings':
        """Build from a dictionary, ignoring unknown keys"""
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def degree_cap(self, degree: int) -> int:
        return max(self.max_symbol_degree, degree)

    def resolve_n_in(self, degree: int) -> int:
        if self.n_in is not None:
            return max(self.n_in, degree)
        return default_n_in(degree, self.max_n_in)

    def resolve_degree_M(self, degree: int) -> int:
        if self.degree_M is not None:
            return max(self.degree_M, degree)
        return degree + 4

    def grid_size(self, degree: int) -> int:
        """Work grid size; a power of two with room for the largest truncation"""
        cap = self.degree_cap(degree)
        n_cap = max(self.resolve_n_in(cap), self.max_n_in)
        return max(self.work_grid_size, next_power_of_two(2 * (n_cap + cap) + 2))

    def resolve_align_degree(self, grid_size: int, degree: int) -> int:
        if self.align_degree is not None:
            return self.align_degree
        return min(self.degree_cap(degree), grid_size // 4)

    def level_seed(self, level: int) -> Optional[int]:
        return None if self.tie_break_seed is None else self.tie_break_seed + level


class LevelOptimalSolution(NamedTuple):
    q0: MatrixSymbol
    norm: float
    t_lower: float
    gap: float
    degree: int


@dataclass
class ThematicStep:
    """One diagonalized level: W (Phi - diag(Q0, 0)) V = diag(t u, next_symbol)"""
    level: int
    t: float
    u: ScalarSymbol
    u_values: np.ndarray
    pair: ThematicPair
    q0: MatrixSymbol
    next_symbol: MatrixSymbol
    k: int
    h: ScalarSymbol
    theta: BlaschkeProduct
    tau: BlaschkeProduct
    v_inner: Optional[ColumnSymbol] = None
    w_inner: Optional[ColumnSymbol] = None
    winding_residual: float = 0.0
    sandwich_residual: float = 0.0
    alignment_residual: float = 0.0
    kernel_dim: Optional[int] = None
    base_case: bool = False
    optimal_gap: Optional[float] = None
    essential_lower: float = 0.0
    n_in: int = 0
    drift: float = 0.0
    gamma_singular_values: List[float] = field(default_factory=list)
    next_gamma_norm: Optional[float] = None
    backsub_residual: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'level': self.level,
            't': self.t,
            'k': self.k,
            'base_case': self.base_case,
            'theta': self.theta.to_dict(),
            'tau': self.tau.to_dict(),
            'winding_residual': self.winding_residual,
            'sandwich_residual': self.sandwich_residual,
            'alignment_residual': self.alignment_residual,
            'unitarity_residual': self.pair.unitarity_residual(),
            'co_outer_certificates': [self.pair.v_certificate, self.pair.w_certificate],
            'optimal_gap': self.optimal_gap,
            'essential_lower': self.essential_lower,
            'n_in': self.n_in,
            'truncation_drift': self.drift,
            'next_gamma_norm': self.next_gamma_norm,
            'backsub_residual': self.backsub_residual
        }


@dataclass
class Factorization:
    """Thematic factorization E = W_0* ... W_{d-1}* D V_{d-1}* ... V_0* on the work grid"""
    d_values: np.ndarray
    v_list: List[np.ndarray]
    w_list: List[np.ndarray]
    residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {'levels': len(self.v_list), 'reconstruction_residual': self.residual}


class IndexSummary(NamedTuple):
    k: List[int]
    extended_t: List[float]
    nu: List[Tuple[float, int]]


@dataclass
class SuperoptimalResult:
    """Superoptimal correction Q with its levels, indices and factorization"""
    symbol: MatrixSymbol
    q: MatrixSymbol
    t_seq: List[float]
    steps: List[ThematicStep]
    settings: SolverSettings
    grid_size: int
    transposed: bool = False
    terminal_symbol: Optional[MatrixSymbol] = None
    terminal_correction: Optional[MatrixSymbol] = None
    hypothesis_checks: List[Dict[str, Any]] = field(default_factory=list)
    factorization: Optional[Factorization] = None
    k: List[int] = field(default_factory=list)
    extended_t: List[float] = field(default_factory=list)
    nu: List[Tuple[float, int]] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.steps)

    def oriented_symbol(self) -> MatrixSymbol:
        return self.symbol.transpose() if self.transposed else self.symbol

    def oriented_q(self) -> MatrixSymbol:
        return self.q.transpose() if self.transposed else self.q

    def error_symbol(self, oriented: bool = False) -> MatrixSymbol:
        """Phi - diag(Q, 0)"""
        if oriented:
            sym = self.oriented_symbol()
            return sym - sym.embed_corrected(self.oriented_q())
        return self.symbol - self.symbol.embed_corrected(self.q)

    def to_dict(self) -> Dict[str, Any]:
        return {
            't_seq': self.t_seq,
            'k': self.k,
            'extended_t': self.extended_t,
            'nu': [{'a': a, 'nu': nu} for a, nu in self.nu],
            'transposed': self.transposed,
            'levels': [step.to_dict() for step in self.steps],
            'Q': self.q.to_dict()
        }


# Grid helpers
def _embed_values(q_values: np.ndarray, m: int, n: int) -> np.ndarray:
    out = np.zeros((q_values.shape[0], m, n), dtype=complex)
    out[:, :q_values.shape[1], :q_values.shape[2]] = q_values
    return out


def _coefficients_to_symbol(coeffs: np.ndarray, rows: int, cols: int) -> MatrixSymbol:
    """Analytic symbol from coefficients c_0..c_D with shape (D+1, rows, cols)"""
    degree = coeffs.shape[0] - 1
    full = np.zeros((2 * degree + 1, rows, cols), dtype=complex)
    full[degree:] = coeffs
    return MatrixSymbol(full, BlockPartition(rows, 0, cols, 0))


def _analytic_coefficients(sym: MatrixSymbol, degree: int) -> np.ndarray:
    out = np.zeros((degree + 1, sym.m, sym.n), dtype=complex)
    take = min(degree, sym.degree) + 1
    out[:take] = sym.coeffs[sym.degree:sym.degree + take]
    return out


def _achieved_norm(phi_values: np.ndarray, powers: np.ndarray, coeffs: np.ndarray) -> float:
    err = phi_values.copy()
    rows, cols = coeffs.shape[1:]
    err[:, :rows, :cols] -= np.einsum('lk,kij->lij', powers, coeffs)
    return float(np.linalg.svd(err, compute_uv=False)[:, 0].max())


def _smoothed_minimax(phi_values: np.ndarray, zeta: np.ndarray, coeffs: np.ndarray, scale: float) -> np.ndarray:
    """Minimize a softmax of the per-node largest squared singular value with L-BFGS-B"""
    shape = coeffs.shape
    rows, cols = shape[1:]
    powers = zeta[:, None] ** np.arange(shape[0])[None, :]

    def unpack(x: np.ndarray) -> np.ndarray:
        half = x.size // 2
        return (x[:half] + 1j * x[half:]).reshape(shape)

    def objective(x: np.ndarray, temperature: float) -> Tuple[float, np.ndarray]:
        err = phi_values.copy()
        err[:, :rows, :cols] -= np.einsum('lk,kij->lij', powers, unpack(x))
        u, s, vh = np.linalg.svd(err)
        top = s[:, 0]
        energy = top ** 2 / scale
        total = logsumexp(energy / temperature)
        weights = np.exp(energy / temperature - total)
        grad_block = 2 * top[:, None, None] * u[:, :rows, 0][:, :, None] * vh[:, 0, :cols][:, None, :]
        weighted = np.einsum('l,lk,lij->kij', weights, powers, np.conj(grad_block)) / scale
        grad = np.concatenate([(-weighted.real).ravel(), weighted.imag.ravel()])
        return temperature * total, grad

    flat = coeffs.ravel()
    x = np.concatenate([flat.real, flat.imag])
    temperature = START_TEMPERATURE
    while temperature > FINAL_TEMPERATURE:
        outcome = optimize.minimize(objective, x, args=(temperature,), jac=True, method='L-BFGS-B',
                                    options={'maxiter': SMOOTHING_ITERATIONS})
        x = outcome.x
        temperature /= 2
    return unpack(x)


def _polish_epigraph(phi_values: np.ndarray, zeta: np.ndarray, degree: int,
                     rows: int, cols: int) -> Optional[np.ndarray]:
    """Epigraph form min t s.t. sigma_max(Phi_l - embed(Q_l)) <= t at every node"""
    m, n = phi_values.shape[1:]
    powers = zeta[:, None] ** np.arange(degree + 1)[None, :]
    coeffs = cp.Variable((degree + 1, rows * cols), complex=True)
    level = cp.Variable()
    row_embed = np.eye(m)[:, :rows]
    col_embed = np.eye(n)[:cols, :]
    constraints = []
    for l in range(len(zeta)):
        q_l = cp.reshape(powers[l] @ coeffs, (rows, cols), order='C')
        constraints.append(cp.sigma_max(phi_values[l] - row_embed @ q_l @ col_embed) <= level)
    problem = cp.Problem(cp.Minimize(level), constraints)
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        try:
            problem.solve(solver=cp.SCS, eps=1e-9)
        except cp.error.SolverError as exc:
            logger.warning(f"epigraph polish failed: {exc}")
            return None
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or coeffs.value is None:
        logger.debug(f"epigraph polish status {problem.status}")
        return None
    return np.asarray(coeffs.value).reshape(degree + 1, rows, cols)


def level_optimal(sym: MatrixSymbol, settings: Optional[SolverSettings] = None,
                  t_lower: Optional[float] = None) -> LevelOptimalSolution:
    """
    Analytic Q0 of bounded degree whose error sup-norm matches the operator norm within tol_gap.
    Smoothed minimax first, then a convex epigraph polish; the degree doubles until the gap closes.
    """
    settings = settings or SolverSettings()
    p = sym.partition
    p.require_corrected_block()
    grid = settings.grid_size(sym.degree)
    if t_lower is None:
        t_lower = build_operator(sym, OperatorKind.FOUR_BLOCK, settings.resolve_n_in(sym.degree)).norm()
    start = riesz_project(sym.block11(), Part.ANALYTIC)
    fine_phi = sample_on_grid(sym, grid)
    fine_zeta = grid_points(grid)

    if t_lower <= ZERO_OPERATOR_TOL:
        q0 = start.with_partition(BlockPartition(p.m1, 0, p.n1, 0))
        norm = linf_norm(sym - sym.embed_corrected(q0), grid)
        return LevelOptimalSolution(q0, norm, t_lower, norm - t_lower, q0.degree)

    degree = settings.resolve_degree_M(sym.degree)
    coeffs = _analytic_coefficients(start, degree)
    while True:
        nodes = next_power_of_two(4 * (degree + sym.degree + 1))
        zeta = grid_points(2 * nodes)
        coeffs = _smoothed_minimax(sample_on_grid(sym, 2 * nodes), zeta, coeffs, t_lower ** 2)
        fine_powers = fine_zeta[:, None] ** np.arange(degree + 1)[None, :]
        norm = _achieved_norm(fine_phi, fine_powers, coeffs)
        if norm - t_lower > settings.tol_gap * t_lower:
            polished = _polish_epigraph(sample_on_grid(sym, nodes), grid_points(nodes), degree, p.m1, p.n1)
            if polished is not None:
                polished_norm = _achieved_norm(fine_phi, fine_powers, polished)
                if polished_norm < norm:
                    coeffs, norm = polished, polished_norm
        gap = norm - t_lower
        logger.debug(f"level-optimal degree {degree}: norm {norm:.12g}, lower bound {t_lower:.12g}, gap {gap:.3e}")
        if gap <= settings.tol_gap * t_lower:
            break
        if degree >= settings.max_degree:
            if settings.certify_level_optimal:
                raise OptimalSolveNotConvergedError(
                    f"gap {gap:.3e} at degree {degree}", residual=gap)
            logger.warning(f"level-optimal gap {gap:.3e} above tolerance at degree {degree}")
            break
        new_degree = min(2 * degree, settings.max_degree)
        coeffs = np.concatenate([coeffs, np.zeros((new_degree - degree,) + coeffs.shape[1:], dtype=complex)])
        degree = new_degree

    q0 = _coefficients_to_symbol(coeffs, p.m1, p.n1).trimmed(settings.trunc_tol)
    return LevelOptimalSolution(q0, norm, t_lower, gap, degree)


def base_case(sym: MatrixSymbol, settings: Optional[SolverSettings] = None,
              maximizing: Optional[MaximizingPair] = None,
              essential_lower: Optional[float] = None) -> MatrixSymbol:
    """Unique optimal Q when the corrected block has a single column (or, by transposition, row)"""
    settings = settings or SolverSettings()
    p = sym.partition
    if p.n1 != 1:
        if p.m1 == 1:
            return base_case(sym.transpose(), settings, None, essential_lower).transpose()
        raise ShapeMismatchError(f"base case needs m1 = 1 or n1 = 1, got m1={p.m1}, n1={p.n1}")
    grid = settings.grid_size(sym.degree)
    if maximizing is None:
        op = build_operator(sym, OperatorKind.FOUR_BLOCK, settings.resolve_n_in(sym.degree))
        maximizing = norm_and_maximizing_vector(op, settings.tie_break_seed)
    t = maximizing.t
    e = essential_norm_lower_bound(sym, grid) if essential_lower is None else essential_lower
    guard = max(t * t - e * e, 0.0) / (t * t)

    f_values = maximizing.f.values(grid)
    ratio = np.abs(f_values[:, 0]) ** 2 / np.sum(np.abs(f_values) ** 2, axis=1)
    floor = float(ratio.min())
    if floor < guard / 2:
        raise BaseCaseError(f"|f1|^2/|f|^2 floor {floor:.3e} below {guard / 2:.3e}",
                            residual=floor)

    image = sym @ maximizing.f
    target = riesz_project(image.block(slice(0, p.m1), slice(0, 1)), Part.ANALYTIC)
    q_values = sample_on_grid(target, grid) / f_values[:, 0][:, None, None]
    q = symbol_from_grid(q_values, BlockPartition(p.m1, 0, 1, 0), settings.trunc_tol,
                         settings.degree_cap(sym.degree), settings.tail_tol)
    leak = q.negative_energy(relative=True)
    if leak > BASE_CASE_ANALYTIC_TOL:
        logger.warning(f"base-case quotient has anti-analytic energy {leak:.3e}")
    return riesz_project(q, Part.ANALYTIC).trimmed(settings.trunc_tol)


def align_level_solution(sym: MatrixSymbol, q0: MatrixSymbol, maximizing: MaximizingPair,
                         settings: SolverSettings, grid: int) -> Tuple[MatrixSymbol, float]:
    """
    Correct Q0 by the minimum-norm analytic polynomial D so that A = Q0 + D satisfies
    A f1 = P+[(Phi f)_top] and g1* A = [(Phi* g)_top - t f1]* on the grid.
    """
    p = sym.partition
    rows, cols = p.m1, p.n1
    t = maximizing.t
    f, g = maximizing.f, maximizing.g
    f1 = f.values(grid)[:, :cols]
    g1 = g.values(grid)[:, :rows]
    target_f = sample_on_grid(riesz_project((sym @ f).block(slice(0, rows), slice(0, 1)), Part.ANALYTIC), grid)[:, :, 0]
    adjoint_g = sample_on_grid((sym.adjoint() @ g).block(slice(0, cols), slice(0, 1)), grid)[:, :, 0]
    target_g = np.conj(adjoint_g - t * f1)

    q_values = sample_on_grid(q0, grid)
    residual_f = target_f - np.einsum('lij,lj->li', q_values, f1)
    residual_g = target_g - np.einsum('li,lij->lj', np.conj(g1), q_values)

    degree = settings.resolve_align_degree(grid, sym.degree)
    powers = grid_points(grid)[:, None] ** np.arange(degree + 1)[None, :]
    block_f = np.zeros((grid, rows, degree + 1, rows, cols), dtype=complex)
    for i in range(rows):
        block_f[:, i, :, i, :] = powers[:, :, None] * f1[:, None, :]
    block_g = np.zeros((grid, cols, degree + 1, rows, cols), dtype=complex)
    for j in range(cols):
        block_g[:, j, :, :, j] = powers[:, :, None] * np.conj(g1)[:, None, :]
    unknowns = (degree + 1) * rows * cols
    system = np.concatenate([block_f.reshape(-1, unknowns), block_g.reshape(-1, unknowns)]) / np.sqrt(grid)
    rhs = np.concatenate([residual_f.ravel(), residual_g.ravel()]) / np.sqrt(grid)

    solution, _, _, _ = linalg.lstsq(system, rhs)
    remaining = float(np.linalg.norm(system @ solution - rhs))
    delta = _coefficients_to_symbol(solution.reshape(degree + 1, rows, cols), rows, cols)
    aligned = (q0.with_partition(BlockPartition(rows, 0, cols, 0)) + delta).trimmed(settings.trunc_tol)
    logger.debug(f"alignment correction norm {np.linalg.norm(solution):.3e}, residual {remaining:.3e}")
    return aligned, remaining


def _unit_rows(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=1)
    return values / np.where(norms > 0, norms, 1.0)[:, None]


def level_reduce(sym: MatrixSymbol, q0: MatrixSymbol, settings: Optional[SolverSettings] = None,
                 maximizing: Optional[MaximizingPair] = None, level: int = 0,
                 n_in: Optional[int] = None) -> ThematicStep:
    """Diagonalize one level: W (Phi - diag(A, 0)) V = diag(t u, Phi^(1))"""
    settings = settings or SolverSettings()
    p = sym.partition
    grid = settings.grid_size(sym.degree)
    cap = settings.degree_cap(sym.degree)
    n_in = n_in or settings.resolve_n_in(sym.degree)
    if maximizing is None:
        op = build_operator(sym, OperatorKind.FOUR_BLOCK, n_in)
        maximizing = norm_and_maximizing_vector(op, settings.level_seed(level))
    t = maximizing.t
    aligned, align_residual = align_level_solution(sym, q0, maximizing, settings, grid)

    zeta = grid_points(grid)
    f_values = maximizing.f.values(grid)
    g_values = maximizing.g.values(grid)
    h = outer_factor(np.sum(np.abs(f_values) ** 2, axis=1), tol=settings.trunc_tol, max_degree=cap,
                     tail_tol=settings.tail_tol)
    h_values = h.values(grid)
    theta = gcd_inner_divisor(maximizing.f.upper().entries())
    conj_g1 = maximizing.g.upper().conj().shift(-1)
    tau = gcd_inner_divisor(ColumnSymbol.wrap(conj_g1).entries())
    theta_values = theta.values(grid)
    tau_values = tau.values(grid)

    v_values = _unit_rows(np.conj(theta_values)[:, None] * f_values / h_values[:, None])
    w_values = _unit_rows(np.conj(zeta * tau_values)[:, None] * np.conj(g_values) / h_values[:, None])
    v1 = ColumnSymbol.wrap(riesz_project(ColumnSymbol.from_values(v_values[:, :p.n1], tol=settings.trunc_tol),
                                         Part.ANALYTIC))
    w1 = ColumnSymbol.wrap(riesz_project(ColumnSymbol.from_values(w_values[:, :p.m1], tol=settings.trunc_tol),
                                         Part.ANALYTIC))

    v_inner = w_inner = None
    v_completion = w_completion = empty_completion(grid)
    if p.n1 > 1:
        v_inner = inner_outer_column(v1, grid, tol=settings.trunc_tol).inner
        v_completion = thematic_complete(v_inner, grid, divisor=BlaschkeProduct())
    if p.m1 > 1:
        w_inner = inner_outer_column(w1, grid, tol=settings.trunc_tol).inner
        w_completion = thematic_complete(w_inner, grid, divisor=BlaschkeProduct())

    v_unitary = assemble_thematic_unitary(v_values, v_completion.v_c, p.n1, grid)
    w_unitary = assemble_thematic_unitary(w_values, w_completion.v_c, p.m1, grid).transpose(0, 2, 1)
    pair = ThematicPair(v_unitary, w_unitary, v1, v_completion.v_c, w1, w_completion.v_c,
                        v_completion.certificate, w_completion.certificate)

    error = sample_on_grid(sym, grid) - _embed_values(sample_on_grid(aligned, grid), p.m, p.n)
    sandwich = w_unitary @ error @ v_unitary
    u_values = np.conj(zeta * theta_values * tau_values) * np.conj(h_values) / h_values
    u_values = u_values / np.abs(u_values)
    residual = max(float(np.max(np.abs(sandwich[:, 0, 0] - t * u_values))),
                   float(np.max(np.abs(sandwich[:, 0, 1:]), initial=0.0)),
                   float(np.max(np.abs(sandwich[:, 1:, 0]), initial=0.0)))
    logger.debug(f"level {level}: t={t:.12g}, sandwich residual {residual:.3e}")
    if residual > settings.sandwich_tol * max(t, 1.0):
        raise ReductionFailedError(f"sandwich residual {residual:.3e}",
                                   level=level, residual=residual)

    reduced = p.reduced()
    next_values = sandwich[:, 1:, 1:]
    if next_values.size == 0:
        next_symbol = MatrixSymbol.zeros(reduced)
    else:
        next_symbol = symbol_from_grid(next_values, reduced, settings.trunc_tol, cap, settings.tail_tol)

    winding = winding_number(u_values)
    k = -winding.value
    u = ScalarSymbol.from_values(u_values, tol=settings.trunc_tol, max_degree=cap)
    kernel = None
    if settings.check_indices:
        kernel = toeplitz_kernel_dim(u, max(n_in, k + u.degree + 8), settings.rank_tol, grid)

    return ThematicStep(level=level, t=t, u=u, u_values=u_values, pair=pair, q0=aligned,
                        next_symbol=next_symbol, k=k, h=h, theta=theta, tau=tau,
                        v_inner=v_inner, w_inner=w_inner, winding_residual=winding.residual,
                        sandwich_residual=residual, alignment_residual=align_residual,
                        kernel_dim=kernel, n_in=n_in)


def _backsub_residual(step: ThematicStep, q_next: MatrixSymbol, correction: MatrixSymbol, grid: int) -> float:
    """Check (w_i, conj W_c)^t (W_c Q V_c^t) (v_i, conj V_c) = diag(0, Q) on the grid"""
    if step.v_inner is None or step.w_inner is None:
        return 0.0
    left = np.concatenate([step.w_inner.values(grid)[:, :, None],
                           np.conj(sample_on_grid(step.pair.w_c, grid))], axis=2)
    right = np.concatenate([step.v_inner.values(grid)[:, :, None],
                            np.conj(sample_on_grid(step.pair.v_c, grid))], axis=2)
    middle = sample_on_grid(correction, grid)
    expected = np.zeros_like(middle)
    expected[:, 1:, 1:] = sample_on_grid(q_next, grid)
    return float(np.max(np.abs(left.transpose(0, 2, 1) @ middle @ right - expected)))


def _orient(sym: MatrixSymbol, mode: str) -> bool:
    if mode == 'on':
        return True
    if mode == 'off':
        return False
    return sym.partition.m1 < sym.partition.n1


def recurse_superoptimal(sym: MatrixSymbol, settings: Optional[SolverSettings] = None) -> SuperoptimalResult:
    """
    Superoptimal correction by level reduction and back-substitution.
    When an intermediate symbol does not fit the degree cap, the cap and work grid are doubled
    up to symbol_degree_limit and the solve restarts.
    """
    settings = settings or SolverSettings()
    while True:
        try:
            return _recurse_with_cap(sym, settings)
        except SymbolTruncationError as exc:
            wider = 2 * settings.max_symbol_degree
            if wider > settings.symbol_degree_limit:
                raise
            logger.warning(f"{exc}; retrying with symbol degree cap {wider}")
            settings = replace(settings, max_symbol_degree=wider, work_grid_size=2 * settings.work_grid_size)


def _recurse_with_cap(sym: MatrixSymbol, settings: SolverSettings) -> SuperoptimalResult:
    sym.partition.require_corrected_block()
    transposed = _orient(sym, settings.transpose)
    oriented = sym.transpose() if transposed else sym
    grid = settings.grid_size(oriented.degree)
    top = oriented.partition
    logger.info(f"solving {sym.m}x{sym.n} symbol of degree {sym.degree} "
                f"(partition {top.to_dict()}, transposed={transposed}, grid {grid})")

    steps: List[ThematicStep] = []
    hypothesis_checks: List[Dict[str, Any]] = []
    current = oriented
    level = 0
    t_top: Optional[float] = None
    zero_levels = 0
    while True:
        p = current.partition
        if p.m1 == 0 or p.n1 == 0:
            terminal_q = MatrixSymbol.zeros(BlockPartition(p.m1, 0, p.n1, 0))
            break
        n_in = settings.resolve_n_in(current.degree)
        op = build_operator(current, OperatorKind.FOUR_BLOCK, n_in)
        svals = op.singular_values()
        t = float(svals[0]) if svals.size else 0.0
        if t_top is None:
            t_top = t
        if steps:
            steps[-1].next_gamma_norm = t
            if t > steps[-1].t + NORM_CHAIN_SLACK:
                logger.warning(f"norm chain slack: level {level} norm {t:.12g} exceeds t_{level - 1}={steps[-1].t:.12g}")
        if t <= max(settings.zero_tol * t_top, ZERO_OPERATOR_TOL):
            terminal_q = riesz_project(current.block11(), Part.ANALYTIC).trimmed(settings.trunc_tol)
            zero_levels = min(p.m1, p.n1)
            logger.info(f"level {level}: operator vanishes, remaining correction is the analytic part")
            break

        e = essential_norm_lower_bound(current, grid)
        passed = e < t - settings.hypothesis_margin * t_top
        hypothesis_checks.append({'level': level, 't': t, 'essential_lower': e, 'passed': bool(passed)})
        if not passed:
            raise EssentialNormHypothesisError(
                f"essential norm bound {e:.12g} not below t={t:.12g}",
                level=level, residual=t - e)

        try:
            maximizing = norm_and_maximizing_vector(op, settings.level_seed(level))
            drift = norm_drift(current, OperatorKind.FOUR_BLOCK, n_in)
            gap = None
            if min(p.m1, p.n1) == 1:
                q0 = base_case(current, settings, maximizing if p.n1 == 1 else None, e)
            else:
                solution = level_optimal(current, settings, t_lower=t)
                q0, gap = solution.q0, solution.gap
            step = level_reduce(current, q0, settings, maximizing, level, n_in)
        except SuperoptError as exc:
            raise exc.with_level(level)
        except (np.linalg.LinAlgError, ValueError, ArithmeticError, cp.error.SolverError) as exc:
            raise NumericalError(f"{type(exc).__name__}: {exc}", level=level) from exc
        step.base_case = min(p.m1, p.n1) == 1
        step.optimal_gap = gap
        step.essential_lower = e
        step.drift = drift
        step.gamma_singular_values = svals.tolist()
        logger.info(f"level {level}: t={t:.12g}, k={step.k}, base_case={step.base_case}")
        steps.append(step)
        current = step.next_symbol
        level += 1

    q = terminal_q
    for step in reversed(steps):
        if q.is_empty():
            q = step.q0
            continue
        product = (sample_on_grid(step.pair.w_c, grid) @ sample_on_grid(q, grid)
                   @ sample_on_grid(step.pair.v_c, grid).transpose(0, 2, 1))
        correction = symbol_from_grid(product, step.q0.partition, settings.trunc_tol,
                                      settings.degree_cap(sym.degree), settings.tail_tol)
        step.backsub_residual = _backsub_residual(step, q, correction, grid)
        q = (step.q0 + correction.with_partition(step.q0.partition)).trimmed(settings.trunc_tol)
    leak = q.negative_energy(relative=True)
    if leak > 1e-8:
        logger.warning(f"superoptimal correction carries anti-analytic energy {leak:.3e}")
    q = riesz_project(q, Part.ANALYTIC).trimmed(settings.trunc_tol)

    t_seq = [step.t for step in steps] + [0.0] * zero_levels
    result = SuperoptimalResult(symbol=sym, q=q.transpose() if transposed else q, t_seq=t_seq, steps=steps,
                                settings=settings, grid_size=grid, transposed=transposed,
                                terminal_symbol=current, terminal_correction=terminal_q,
                                hypothesis_checks=hypothesis_checks)
    summary = indices_and_nu(result)
    result.k, result.extended_t, result.nu = summary.k, summary.extended_t, summary.nu
    result.factorization = assemble_factorization(result)
    logger.info(f"superoptimal singular values {t_seq}, indices {result.k}")
    return result


def assemble_factorization(result: SuperoptimalResult) -> Factorization:
    """Diagonal factor D with identity-bordered V_j, W_j; checks the reconstruction of the error"""
    sym = result.oriented_symbol()
    grid = result.grid_size
    m, n = sym.shape
    levels = result.levels
    d_values = np.zeros((grid, m, n), dtype=complex)
    for j, step in enumerate(result.steps):
        d_values[:, j, j] = step.t * step.u_values
    terminal = result.terminal_symbol
    if terminal is not None and not terminal.is_empty():
        rest = sample_on_grid(terminal, grid)
        if result.terminal_correction is not None and not result.terminal_correction.is_empty():
            rest = rest - _embed_values(sample_on_grid(result.terminal_correction, grid), terminal.m, terminal.n)
        d_values[:, levels:, levels:] = rest

    v_list, w_list = [], []
    for j, step in enumerate(result.steps):
        v_full = np.tile(np.eye(n, dtype=complex), (grid, 1, 1))
        w_full = np.tile(np.eye(m, dtype=complex), (grid, 1, 1))
        v_full[:, j:, j:] = step.pair.v_values
        w_full[:, j:, j:] = step.pair.w_values
        v_list.append(v_full)
        w_list.append(w_full)

    rebuilt = d_values
    for v_full, w_full in zip(reversed(v_list), reversed(w_list)):
        rebuilt = np.conj(w_full).transpose(0, 2, 1) @ rebuilt @ np.conj(v_full).transpose(0, 2, 1)
    error = sample_on_grid(result.error_symbol(oriented=True), grid)
    if error.size:
        residual = float(np.linalg.norm(rebuilt - error, ord=2, axis=(1, 2)).max())
    else:
        residual = 0.0
    scale = max(1.0, result.t_seq[0] if result.t_seq else 0.0)
    if residual > RECONSTRUCTION_TOL * scale:
        raise FactorizationError(f"residual {residual:.3e}", residual=residual)
    logger.debug(f"factorization reconstruction residual {residual:.3e}")
    return Factorization(d_values, v_list, w_list, residual)


def indices_and_nu(result: SuperoptimalResult, eq_tol: Optional[float] = None) -> IndexSummary:
    """Indices k_j, the extended sequence with t_j repeated k_j times and nu_r per distinct value"""
    eq_tol = result.settings.eq_tol if eq_tol is None else eq_tol
    k = [step.k for step in result.steps]
    extended: List[float] = []
    for step in result.steps:
        extended.extend([step.t] * step.k)
    scale = max(result.t_seq[0] if result.t_seq else 0.0, ZERO_OPERATOR_TOL)
    groups: List[List[float]] = []
    for step in sorted(result.steps, key=lambda s: -s.t):
        if groups and abs(groups[-1][0] - step.t) <= eq_tol * scale:
            groups[-1][1] += step.k
        else:
            groups.append([step.t, step.k])
    nu = [(float(a), int(total)) for a, total in groups]
    return IndexSummary(k, extended, nu)
