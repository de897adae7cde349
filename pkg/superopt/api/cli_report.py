"""
Batch report front door for the superoptimal solver
Reads a symbol JSON file, runs the solver and diagnostics, writes a JSON report and a CSV profile
"""
from typing import List, Dict, Optional, Any, FrozenSet, Sequence
from dataclasses import dataclass, field
import argparse
import csv
import json
import logging
import time

import numpy as np
import cvxpy as cp

from ..core.errors import SuperoptError, SymbolFormatError, AliasingError, NumericalError
from ..core.fourier_symbols import (MatrixSymbol, validate_symbol_dict, default_grid_size, linf_norm,
                                    sample_on_grid, singular_values_on_grid, grid_angles)
from ..core.truncated_operators import essential_norm_lower_bound, transpose_gap
from ..core.solver import SolverSettings, SuperoptimalResult, recurse_superoptimal, TRANSPOSE_MODES
from ..core.weight_diagnostics import (check_constancy, check_index_sums, check_singular_inequalities,
                                       maximal_superoptimal_weight)

logger = logging.getLogger(__name__)

SCHEMA = "superopt-report/1"
ALL_CHECKS = frozenset({'constancy', 'index_sums', 'inequalities'})
MIN_DIAGNOSTIC_GRID = 512

EXIT_OK = 0
EXIT_PARSE = 1


@dataclass
class RunConfig:
    """Options of one batch run"""
    grid_size: Optional[int] = None
    n_in: Optional[int] = None
    degree_M: Optional[int] = None
    tol_gap: float = 1e-6
    zero_tol: float = 1e-9
    eq_tol: float = 1e-6
    rank_tol: float = 1e-8
    seed: Optional[int] = None
    checks: FrozenSet[str] = field(default_factory=lambda: ALL_CHECKS)
    transpose: str = "auto"
    out_report: Optional[str] = None
    out_csv: Optional[str] = None

    def __post_init__(self):
        for name in ('tol_gap', 'zero_tol', 'eq_tol', 'rank_tol'):
            if not getattr(self, name) > 0:
                raise SymbolFormatError(f"{name} must be positive")
        if self.transpose not in TRANSPOSE_MODES:
            raise SymbolFormatError(f"transpose must be one of {TRANSPOSE_MODES}")
        self.checks = frozenset(self.checks)
        unknown = self.checks - ALL_CHECKS
        if unknown:
            raise SymbolFormatError(f"unknown checks: {sorted(unknown)}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        return cls(grid_size=args.grid_size, n_in=args.n_in, degree_M=args.degree, tol_gap=args.tol_gap,
                   zero_tol=args.zero_tol, eq_tol=args.eq_tol, rank_tol=args.rank_tol, seed=args.seed,
                   checks=parse_checks(args.checks), transpose=args.transpose,
                   out_report=args.out_report, out_csv=args.out_csv)

    def solver_settings(self) -> SolverSettings:
        """Solver settings derived from this run configuration"""
        return SolverSettings(n_in=self.n_in, degree_M=self.degree_M, tol_gap=self.tol_gap,
                              zero_tol=self.zero_tol, eq_tol=self.eq_tol, rank_tol=self.rank_tol,
                              tie_break_seed=self.seed, transpose=self.transpose)

    def resolve_grid_size(self, sym: MatrixSymbol) -> int:
        if self.grid_size is None:
            return max(default_grid_size(sym.degree), MIN_DIAGNOSTIC_GRID)
        if self.grid_size < 2 * sym.degree + 2:
            raise AliasingError(f"grid size {self.grid_size} < 2*N_sym+2 = {2 * sym.degree + 2}")
        return self.grid_size

    def to_dict(self) -> Dict[str, Any]:
        return {
            'grid_size': self.grid_size,
            'n_in': self.n_in,
            'degree_M': self.degree_M,
            'tol_gap': self.tol_gap,
            'zero_tol': self.zero_tol,
            'eq_tol': self.eq_tol,
            'rank_tol': self.rank_tol,
            'seed': self.seed,
            'checks': sorted(self.checks),
            'transpose': self.transpose
        }


def parse_checks(text: str) -> FrozenSet[str]:
    """'all', 'none' or a comma separated list of check names"""
    text = (text or 'all').strip()
    if text == 'all':
        return ALL_CHECKS
    if text == 'none':
        return frozenset()
    return frozenset(part.strip() for part in text.split(',') if part.strip())


def load_document(input_path: str) -> Any:
    try:
        with open(input_path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise SymbolFormatError(f"cannot read {input_path}: {exc}")


def validate(input_path: str) -> List[str]:
    """Shape and invariant violations of an input file, without computing anything"""
    try:
        document = load_document(input_path)
    except SymbolFormatError as exc:
        return [str(exc.message)]
    return validate_symbol_dict(document)


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays to plain Python values"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        number = float(value)
        return number if np.isfinite(number) else None
    return value


def canonical_report(report: Dict[str, Any]) -> str:
    """Report text used for determinism comparisons; timings are left out"""
    stripped = {k: v for k, v in report.items() if k != 'timings'}
    return json.dumps(_jsonable(stripped), sort_keys=True, separators=(',', ':'))


def build_report(sym: MatrixSymbol, result: SuperoptimalResult, config: RunConfig,
                 diagnostics: Dict[str, Any], timings: Dict[str, float]) -> Dict[str, Any]:
    """Assemble the report dictionary for a successful run"""
    grid = result.grid_size
    error_sup = linf_norm(result.error_symbol(), grid)
    weight = maximal_superoptimal_weight(result, grid)
    norms = {
        'gamma': result.steps[0].t if result.steps else 0.0,
        'essential_lower': essential_norm_lower_bound(sym, grid),
        'symbol_sup': linf_norm(sym, grid),
        'error_sup': error_sup,
        'maximal_weight_sup': float(weight.eigenvalues().max()) if weight.size else 0.0,
        'transpose_gap': transpose_gap(sym, result.settings.resolve_n_in(sym.degree))
    }
    residuals = {
        'reconstruction': result.factorization.residual if result.factorization else None,
        'q_antianalytic': result.q.negative_energy(relative=False),
        'levels': [step.to_dict() for step in result.steps]
    }
    return {
        'schema': SCHEMA,
        'status': 'ok',
        'exit_code': EXIT_OK,
        'partition': sym.partition.to_dict(),
        'config': config.to_dict(),
        't_seq': result.t_seq,
        'extended_t': result.extended_t,
        'k': result.k,
        'nu': [{'a': a, 'nu': nu} for a, nu in result.nu],
        'transposed': result.transposed,
        'norms': norms,
        'hypothesis_check': result.hypothesis_checks,
        'diagnostics': diagnostics,
        'residuals': residuals,
        'Q': result.q.to_dict(),
        'timings': timings,
        'error': None
    }


def error_report(exc: SuperoptError, config: RunConfig, timings: Dict[str, float]) -> Dict[str, Any]:
    return {
        'schema': SCHEMA,
        'status': 'error',
        'exit_code': exc.exit_code,
        'config': config.to_dict(),
        'timings': timings,
        'error': exc.to_dict()
    }


def run_diagnostics(sym: MatrixSymbol, result: SuperoptimalResult, config: RunConfig,
                    grid_size: int) -> Dict[str, Any]:
    """Run the enabled verification suites"""
    diagnostics: Dict[str, Any] = {name: None for name in sorted(ALL_CHECKS)}
    if 'constancy' in config.checks:
        diagnostics['constancy'] = check_constancy(sym, result, grid_size).to_dict()
    if 'index_sums' in config.checks and result.steps:
        diagnostics['index_sums'] = check_index_sums(result).to_dict()
    if 'inequalities' in config.checks and result.steps:
        diagnostics['inequalities'] = check_singular_inequalities(result).to_dict()
    for name, outcome in diagnostics.items():
        if outcome is not None and not outcome['passed']:
            logger.warning(f"diagnostic {name} reported failures")
    return diagnostics


def write_report(report: Dict[str, Any], path: str):
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        json.dump(_jsonable(report), handle, sort_keys=True, indent=2)
        handle.write('\n')


def write_profile_csv(sym: MatrixSymbol, result: SuperoptimalResult, grid_size: int, path: str):
    """theta followed by s_j((Phi - Q)(zeta)) for every level, one row per grid node"""
    levels = len(result.t_seq)
    svals = singular_values_on_grid(sample_on_grid(sym - sym.embed_corrected(result.q), grid_size))
    theta = grid_angles(grid_size)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['theta'] + [f's_{j}' for j in range(levels)])
        for l in range(grid_size):
            writer.writerow([f"{theta[l]:.17g}"] + [f"{svals[l, j]:.17g}" for j in range(levels)])


def run(config: RunConfig, input_path: str) -> int:
    """Solve, diagnose and write outputs; returns the process exit code"""
    started = time.perf_counter()
    timings: Dict[str, float] = {}
    try:
        document = load_document(input_path)
        sym = MatrixSymbol.from_dict(document)
        grid_size = config.resolve_grid_size(sym)
        logger.info(f"Loaded {input_path}: {sym}")

        solve_start = time.perf_counter()
        result = recurse_superoptimal(sym, config.solver_settings())
        timings['solve'] = time.perf_counter() - solve_start

        check_start = time.perf_counter()
        diagnostics = run_diagnostics(sym, result, config, grid_size)
        timings['diagnostics'] = time.perf_counter() - check_start
        timings['total'] = time.perf_counter() - started

        report = build_report(sym, result, config, diagnostics, timings)
        if config.out_csv:
            write_profile_csv(sym, result, grid_size, config.out_csv)
            logger.info(f"Profile written to {config.out_csv}")
        exit_code = EXIT_OK
    except SuperoptError as exc:
        logger.error(f"Run failed ({exc.code}): {exc}")
        timings['total'] = time.perf_counter() - started
        report = error_report(exc, config, timings)
        exit_code = exc.exit_code
    except (np.linalg.LinAlgError, ValueError, ArithmeticError, cp.error.SolverError) as exc:
        logger.exception(f"Run failed with {type(exc).__name__}")
        timings['total'] = time.perf_counter() - started
        wrapped = NumericalError(f"{type(exc).__name__}: {exc}")
        report = error_report(wrapped, config, timings)
        exit_code = wrapped.exit_code

    if config.out_report:
        write_report(report, config.out_report)
        logger.info(f"Report written to {config.out_report}")
    else:
        print(json.dumps(_jsonable(report), sort_keys=True, indent=2))
    return exit_code


class ReportArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors map to the parse-error exit code"""

    def error(self, message):
        raise SymbolFormatError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = ReportArgumentParser(description='Superoptimal four-block solver: batch report')
    parser.add_argument('--input', required=True, help='Symbol JSON file')
    parser.add_argument('--out-report', help='Report JSON path (default: stdout)')
    parser.add_argument('--out-csv', help='Singular-value profile CSV path')
    parser.add_argument('--grid-size', type=int, help='Profile grid size (default: 4(N+1) rounded up, at least 512)')
    parser.add_argument('--n-in', type=int, help='Truncation size N_in (default: 4N+8, clamped)')
    parser.add_argument('--degree', type=int, help='Degree of the level-optimal correction (default: N+4)')
    parser.add_argument('--tol-gap', type=float, default=1e-6, help='Relative optimality gap (default: 1e-6)')
    parser.add_argument('--zero-tol', type=float, default=1e-9, help='Relative zero-operator threshold')
    parser.add_argument('--eq-tol', type=float, default=1e-6, help='Relative tolerance grouping equal t_j')
    parser.add_argument('--rank-tol', type=float, default=1e-8, help='Relative Toeplitz rank threshold')
    parser.add_argument('--seed', type=int, help='Tie-break seed for degenerate maximizing vectors')
    parser.add_argument('--checks', default='all', help="all, none or a comma separated list")
    parser.add_argument('--transpose', default='auto', choices=TRANSPOSE_MODES, help='Orientation (default: auto)')
    parser.add_argument('--validate', action='store_true', help='Only check the input file and list violations')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    parser.add_argument('--log-file', help='Also write the log to this file')
    return parser


def main(argv: Optional[Sequence[str]] = None, args: Optional[argparse.Namespace] = None) -> int:
    """Command-line entry; returns the exit code"""
    try:
        if args is None:
            args = build_parser().parse_args(argv)
        if args.validate:
            violations = validate(args.input)
            print(json.dumps({'input': args.input, 'violations': violations}, indent=2))
            return EXIT_OK if not violations else EXIT_PARSE
        config = RunConfig.from_args(args)
    except SymbolFormatError as exc:
        logger.error(str(exc))
        return EXIT_PARSE
    return run(config, args.input)
