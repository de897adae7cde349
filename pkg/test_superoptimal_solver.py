"""
Tests for the superoptimal solver: level-optimal solve, level reduction, recursion and factorization
"""
import sys
import os
from unittest import mock

import numpy as np
import pytest
import cvxpy as cp

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from superopt.core.errors import (EssentialNormHypothesisError, SymbolFormatError, HypothesisError, NumericalError,
                                  SymbolTruncationError)
from superopt.core.fourier_symbols import (BlockPartition, MatrixSymbol, ScalarSymbol, linf_norm, grid_points,
                                           sample_on_grid, singular_values_on_grid)
from superopt.core.solver import (SolverSettings, level_optimal, base_case, level_reduce,
                                  recurse_superoptimal, indices_and_nu)
from superopt.core.weight_diagnostics import (maximal_superoptimal_weight, clipped_weight_difference, check_constancy,
                                              ClipMode)


def zbar_diag():
    """diag(z̄, ½z̄): the very best correction is zero"""
    return MatrixSymbol.from_coefficients({-1: np.diag([1.0, 0.5])})


def zbar_plus_constant():
    return MatrixSymbol.from_coefficients({-1: [[1.0, 0.0], [0.0, 0.0]], 0: [[0.0, 0.0], [0.0, 0.3]]},
                                          BlockPartition(1, 1, 1, 1))


def q_size(result):
    return linf_norm(result.q, result.grid_size) if result.q.energy() > 0 else 0.0


def test_settings_configuration():
    settings = SolverSettings.from_dict({'tol_gap': 1e-7, 'unknown_key': 3, 'transpose': 'off'})
    assert settings.tol_gap == 1e-7
    assert settings.transpose == 'off'
    assert settings.to_dict()['tol_gap'] == 1e-7

    assert settings.resolve_degree_M(3) == 7
    assert settings.resolve_n_in(2) == 16
    assert settings.level_seed(2) is None
    assert SolverSettings(tie_break_seed=5).level_seed(2) == 7
    grid = settings.grid_size(4)
    assert grid >= 1024 and grid & (grid - 1) == 0

    with pytest.raises(SymbolFormatError):
        SolverSettings(transpose='sideways')
    with pytest.raises(SymbolFormatError):
        SolverSettings(tol_gap=0.0)
    with pytest.raises(SymbolFormatError):
        SolverSettings(max_symbol_degree=256, symbol_degree_limit=128)
    with pytest.raises(SymbolFormatError):
        SolverSettings(tail_tol=-1.0)


def test_level_optimal_diagonal():
    solution = level_optimal(zbar_diag(), SolverSettings(), t_lower=1.0)
    assert solution.norm == pytest.approx(1.0, abs=1e-6)
    assert solution.gap <= 1e-6
    assert solution.q0.shape == (2, 2)


def test_level_optimal_analytic_symbol():
    analytic = MatrixSymbol.from_coefficients({0: np.eye(2), 1: [[0.0, 1.0], [0.0, 0.0]]})
    solution = level_optimal(analytic)
    assert solution.norm <= 1e-10
    assert np.allclose(solution.q0.coefficient(1), [[0.0, 1.0], [0.0, 0.0]])


def test_base_case_scalar():
    sym = MatrixSymbol.from_coefficients({-1: [[1.0]], 1: [[1.0]]})   # z̄ + z
    q = base_case(sym, SolverSettings())
    assert np.allclose(q.padded(1).coefficient(1), [[1.0]], atol=1e-8)
    assert np.allclose(q.padded(1).coefficient(0), [[0.0]], atol=1e-8)
    assert q.negative_energy(relative=False) == 0.0


def test_level_reduce_diagonal():
    sym = zbar_diag()
    step = level_reduce(sym, MatrixSymbol.zeros(BlockPartition(2, 0, 2, 0)), SolverSettings())
    assert step.t == pytest.approx(1.0)
    assert step.k == 1
    assert step.kernel_dim == 1
    assert step.sandwich_residual <= 1e-8
    assert step.pair.unitarity_residual() <= 1e-8
    assert step.next_symbol.shape == (1, 1)
    assert np.allclose(step.next_symbol.coefficient(-1), [[0.5]], atol=1e-10)
    grid = step.u_values.size
    theta = 2 * np.pi * np.arange(grid) / grid
    assert np.allclose(step.u_values, np.exp(-1j * theta), atol=1e-10)


def test_superoptimal_diagonal():
    """Nehari example: t = (1, 1/2), indices (1, 1), Q = 0"""
    result = recurse_superoptimal(zbar_diag())
    assert np.allclose(result.t_seq, [1.0, 0.5], atol=1e-8)
    assert result.k == [1, 1]
    assert np.allclose(result.extended_t, [1.0, 0.5], atol=1e-8)
    assert [nu for _, nu in result.nu] == [1, 1]
    assert q_size(result) <= 1e-8
    assert result.factorization.residual <= 1e-8
    assert not result.transposed
    assert result.hypothesis_checks[0]['passed']
    print(f"t = {result.t_seq}, k = {result.k}")


def test_superoptimal_four_block():
    result = recurse_superoptimal(zbar_plus_constant())
    assert np.allclose(result.t_seq, [1.0], atol=1e-8)
    assert result.k == [1]
    assert q_size(result) <= 1e-8
    assert result.hypothesis_checks[0]['essential_lower'] == pytest.approx(0.3)
    assert result.factorization.residual <= 1e-8
    assert result.terminal_symbol.shape == (1, 1)


def test_superoptimal_scalars():
    zbar = recurse_superoptimal(ScalarSymbol.monomial(-1))
    assert zbar.t_seq == pytest.approx([1.0])
    assert zbar.k == [1]
    assert q_size(zbar) <= 1e-8

    sym = MatrixSymbol.from_coefficients({-1: [[1.0]], 1: [[1.0]]})
    both = recurse_superoptimal(sym)
    assert both.t_seq == pytest.approx([1.0])
    assert np.allclose(both.q.padded(1).coefficient(1), [[1.0]], atol=1e-8)
    error = both.error_symbol()
    assert linf_norm(error, 256) == pytest.approx(1.0, abs=1e-8)


def test_row_symbol_is_transposed():
    """(z̄, 0.5) with a 1x2 corrected block is solved through its transpose"""
    sym = MatrixSymbol.from_coefficients({-1: [[1.0, 0.0]], 0: [[0.0, 0.5]]})
    result = recurse_superoptimal(sym)
    assert result.transposed
    assert result.q.shape == (1, 2)
    assert np.allclose(result.q.padded(0).coefficient(0), [[0.0, 0.5]], atol=1e-8)
    assert result.t_seq == pytest.approx([1.0])

    kept = recurse_superoptimal(sym, SolverSettings(transpose='off'))
    assert not kept.transposed
    assert np.allclose(kept.q.padded(0).coefficient(0), [[0.0, 0.5]], atol=1e-6)


def test_vanishing_operator_pads_levels():
    analytic = MatrixSymbol.from_coefficients({0: [[2.0, 0.0], [0.0, 2.0]], 1: [[1.0, 0.0], [0.0, 0.0]]})
    result = recurse_superoptimal(analytic)
    assert result.t_seq == [0.0, 0.0]
    assert result.steps == []
    assert result.k == []
    assert np.allclose(result.q.coeffs, analytic.coeffs)
    assert result.factorization.residual <= 1e-10


def test_seed_invariance():
    """Different maximizing vectors give the same Q, t and index sums"""
    sym = MatrixSymbol.from_coefficients({-2: [[1.0, 0.0], [0.0, 0.0]], -1: [[0.0, 0.0], [0.0, 1.0]]})
    plain = recurse_superoptimal(sym)
    seeded = recurse_superoptimal(sym, SolverSettings(tie_break_seed=5))

    assert np.allclose(plain.t_seq, [1.0, 1.0], atol=1e-6)
    assert np.allclose(seeded.t_seq, plain.t_seq, atol=1e-6)
    assert plain.nu == [(pytest.approx(1.0), 3)]
    assert [nu for _, nu in seeded.nu] == [3]
    assert sum(seeded.k) == 3
    assert q_size(plain) <= 1e-5
    assert q_size(seeded) <= 1e-5
    degree = max(plain.q.degree, seeded.q.degree)
    assert np.allclose(plain.q.padded(degree).coeffs, seeded.q.padded(degree).coeffs, atol=2e-5)

    w_plain = maximal_superoptimal_weight(plain)
    w_seeded = maximal_superoptimal_weight(seeded)
    assert clipped_weight_difference(w_plain, w_seeded, 0.5, ClipMode.LAMBDA_LOWER) <= 1e-4


def test_essential_norm_hypothesis_failure():
    sym = MatrixSymbol.from_coefficients({-1: [[0.2, 0.0], [0.0, 0.0]], 0: [[0.0, 0.0], [0.0, 1.0]]},
                                         BlockPartition(1, 1, 1, 1))
    with pytest.raises(EssentialNormHypothesisError) as info:
        recurse_superoptimal(sym)
    assert isinstance(info.value, HypothesisError)
    assert info.value.exit_code == 2
    assert info.value.level == 0
    assert str(info.value).count("essential_norm_hypothesis") == 1


def test_empty_corrected_block_rejected():
    sym = MatrixSymbol(np.zeros((1, 2, 2)), BlockPartition(0, 2, 1, 1))
    with pytest.raises(SymbolFormatError, match="empty corrected block"):
        recurse_superoptimal(sym)


def test_indices_and_nu_grouping():
    result = recurse_superoptimal(zbar_diag())
    merged = indices_and_nu(result, eq_tol=0.9)
    assert len(merged.nu) == 1
    assert merged.nu[0][0] == pytest.approx(1.0)
    assert merged.nu[0][1] == 2
    assert merged.extended_t == pytest.approx([1.0, 0.5])


def test_result_serialization():
    data = recurse_superoptimal(zbar_diag()).to_dict()
    assert data['k'] == [1, 1]
    assert len(data['levels']) == 2
    assert data['levels'][0]['theta'] == {'power': 0, 'zeros': []}
    assert 'coeffs' in data['Q']


def test_superoptimal_three_by_three_diagonal():
    """diag(z̄, ½z̄, ¼z̄) needs the iterative completion at the top level"""
    sym = MatrixSymbol.from_coefficients({-1: np.diag([1.0, 0.5, 0.25])})
    result = recurse_superoptimal(sym)
    assert np.allclose(result.t_seq, [1.0, 0.5, 0.25], atol=1e-5)
    assert result.k == [1, 1, 1]
    assert q_size(result) <= 1e-5
    assert result.factorization.residual <= 1e-5
    assert np.all(np.isfinite(result.steps[0].pair.v_values))


def test_degree_cap_is_widened():
    """z̄ + z̄² has the rational correction 1/(φ + z), which does not fit a degree-2 cap"""
    sym = MatrixSymbol.from_coefficients({-2: [[1.0]], -1: [[1.0]]})
    golden = (1 + np.sqrt(5)) / 2
    with pytest.raises(SymbolTruncationError) as info:
        recurse_superoptimal(sym, SolverSettings(max_symbol_degree=2, symbol_degree_limit=2))
    assert info.value.code == 'symbol_truncated'
    assert info.value.exit_code == 3
    assert info.value.level == 0

    result = recurse_superoptimal(sym, SolverSettings(max_symbol_degree=2, symbol_degree_limit=128))
    assert result.settings.max_symbol_degree >= 32
    assert result.t_seq == pytest.approx([golden], abs=1e-6)
    assert result.q.coefficient(0)[0, 0] == pytest.approx(1 / golden, abs=1e-6)
    assert result.q.coefficient(1)[0, 0] == pytest.approx(-1 / golden ** 2, abs=1e-6)
    assert linf_norm(result.error_symbol(), 512) == pytest.approx(golden, abs=1e-6)


def error_sups(sym, q, grid_size):
    svals = singular_values_on_grid(sample_on_grid(sym - sym.embed_corrected(q), grid_size))
    return svals.max(axis=0)


def lexicographically_no_worse(first, second, tol):
    for a, b in zip(first, second):
        if a < b - tol:
            return True
        if a > b + tol:
            return False
    return True


def minimax_search(sym, degree=4, nodes=128):
    """Independent best correction of degree <= 4 on a coarse grid, via the sigma_max epigraph"""
    zeta = grid_points(nodes)
    values = sample_on_grid(sym, nodes)
    coeffs = cp.Variable((degree + 1, sym.m * sym.n), complex=True)
    level = cp.Variable()
    powers = zeta[:, None] ** np.arange(degree + 1)[None, :]
    constraints = [cp.sigma_max(values[l] - cp.reshape(powers[l] @ coeffs, (sym.m, sym.n), order='C')) <= level
                   for l in range(nodes)]
    cp.Problem(cp.Minimize(level), constraints).solve()
    q_coeffs = np.asarray(coeffs.value).reshape(degree + 1, sym.m, sym.n)
    return MatrixSymbol.from_coefficients({k: q_coeffs[k] for k in range(degree + 1)})


def test_random_symbols_against_minimax_search():
    """Ten random 2x2 Nehari symbols of degree 2: flat profiles, and no analytic Q does better"""
    rng = np.random.default_rng(0)
    for trial in range(10):
        coeffs = rng.standard_normal((5, 2, 2)) + 1j * rng.standard_normal((5, 2, 2))
        sym = MatrixSymbol(coeffs)
        result = recurse_superoptimal(sym)
        t0 = result.t_seq[0]
        assert len(result.t_seq) == 2, f"trial {trial}"
        assert result.t_seq[1] <= t0 + 1e-8, f"trial {trial}"

        report = check_constancy(sym, result, tol=1e-5)
        assert report.passed, f"trial {trial}: deviations {report.deviations}"
        assert np.allclose(report.sups, result.t_seq, atol=1e-5), f"trial {trial}"

        grid = result.grid_size
        solved = error_sups(sym, result.q, grid)
        searched = error_sups(sym, minimax_search(sym), grid)
        assert lexicographically_no_worse(solved, searched, 1e-3), f"trial {trial}: {solved} vs {searched}"
        for scale in (0.05, 0.01):
            bump = MatrixSymbol.from_coefficients(
                {k: scale * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) for k in range(5)})
            perturbed = error_sups(sym, result.q + bump, grid)
            assert lexicographically_no_worse(solved, perturbed, 1e-5), f"trial {trial}, scale {scale}"
        print(f"trial {trial}: t = {result.t_seq}, search s_0 = {searched[0]:.6f}")


def test_linear_algebra_failure_is_numerical_error():
    with mock.patch('superopt.core.solver.level_reduce',
                    side_effect=np.linalg.LinAlgError("SVD did not converge")):
        with pytest.raises(NumericalError) as info:
            recurse_superoptimal(zbar_diag())
    assert info.value.code == 'numerical_error'
    assert info.value.exit_code == 3
    assert info.value.level == 0
    assert isinstance(info.value.__cause__, np.linalg.LinAlgError)
    assert 'SVD did not converge' in info.value.message


if __name__ == '__main__':
    tests = [value for name, value in sorted(globals().items()) if name.startswith('test_') and callable(value)]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__}: {e}")
            import traceback
            traceback.print_exc()
    if failed:
        sys.exit(1)
    print("All superoptimal solver tests passed!")
