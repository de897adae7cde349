"""
Tests for outer factors, Blaschke products and thematic completions
"""
import sys
import os

import numpy as np
import pytest

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from superopt.core.errors import DegenerateInputError, NotIsometricError, ShapeMismatchError
from superopt.core.fourier_symbols import MatrixSymbol, ScalarSymbol, ColumnSymbol, grid_points
from superopt.core.spectral_factorization import (BlaschkeProduct, outer_factor, inner_outer_column,
                                                  gcd_inner_divisor, unitary_grid_completion, empty_completion,
                                                  co_outer_certificate, thematic_complete,
                                                  assemble_thematic_unitary)

GRID = 256
ROOT_HALF = 1 / np.sqrt(2)


def one_z_column():
    """(1, z)/sqrt(2), an inner column"""
    sym = MatrixSymbol.from_coefficients({0: [[ROOT_HALF], [0.0]], 1: [[0.0], [ROOT_HALF]]})
    return ColumnSymbol.wrap(sym)


def test_outer_factor_recovers_polynomial():
    zeta = grid_points(GRID)
    rho = np.abs(2 + zeta) ** 2
    h = outer_factor(rho)
    assert 'outer' in h.tags
    assert h.coefficient(0)[0, 0] == pytest.approx(2.0, abs=1e-8)
    assert h.coefficient(1)[0, 0] == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(h.coeffs[:h.degree])) <= 1e-8
    assert np.allclose(np.abs(h.values(GRID)) ** 2, rho, rtol=1e-8)


def test_outer_factor_rejects_bad_densities():
    with pytest.raises(DegenerateInputError):
        outer_factor(np.full(16, -1.0))
    with pytest.raises(DegenerateInputError):
        outer_factor(np.zeros(16))


def test_inner_outer_column():
    split = inner_outer_column(ColumnSymbol.wrap(MatrixSymbol.from_coefficients({0: [[1.0], [0.0]],
                                                                                1: [[0.0], [1.0]]})), GRID)
    assert split.outer.coefficient(0)[0, 0] == pytest.approx(np.sqrt(2), abs=1e-8)
    norms = np.linalg.norm(split.inner.values(GRID), axis=1)
    assert np.allclose(norms, 1.0, atol=1e-8)

    with pytest.raises(DegenerateInputError):
        inner_outer_column(ColumnSymbol(np.zeros((1, 2, 1))), GRID)


def test_blaschke_product():
    b = BlaschkeProduct([0.5, 0.0], power=1)
    assert b.power == 2
    assert b.degree == 3
    assert np.allclose(np.abs(b.values(GRID)), 1.0)
    assert abs(b.evaluate(np.array([0.5]))[0]) <= 1e-14
    assert BlaschkeProduct().is_trivial()
    assert b.to_dict() == {'power': 2, 'zeros': [[0.5, 0.0]]}

    symbol = b.as_symbol(GRID)
    assert symbol.negative_energy(relative=False) <= 1e-10

    with pytest.raises(DegenerateInputError):
        BlaschkeProduct([1.5])


def test_blaschke_divide():
    b = BlaschkeProduct(power=2)
    quotient = b.divide(ScalarSymbol.monomial(3), GRID)
    assert np.allclose(quotient.coefficient(1), [[1.0]], atol=1e-12)
    assert quotient.energy() == pytest.approx(1.0)


def test_gcd_inner_divisor():
    first = ScalarSymbol.from_polynomial([0.0, -0.5, 1.0])          # z(z - 0.5)
    second = ScalarSymbol.from_polynomial([0.0, 0.0, -0.5, 1.0])    # z^2 (z - 0.5)
    divisor = gcd_inner_divisor([first, second])
    assert divisor.power == 1
    assert np.allclose(divisor.zeros, [0.5])

    # Roots outside the disk are not inner factors
    outside = ScalarSymbol.from_polynomial([-2.0, 1.0])
    assert gcd_inner_divisor([outside, outside]).is_trivial()

    # Negligible entries do not constrain the divisor
    tiny = ScalarSymbol.from_polynomial([1e-15])
    assert gcd_inner_divisor([first, tiny]).degree == 2

    with pytest.raises(DegenerateInputError):
        gcd_inner_divisor([ScalarSymbol.from_polynomial([0.0])])


def test_unitary_grid_completion():
    values = one_z_column().values(GRID)[:, :, None]
    completed = unitary_grid_completion(values)
    assert completed.shape == (GRID, 2, 2)
    gram = np.conj(completed).transpose(0, 2, 1) @ completed
    assert np.allclose(gram, np.eye(2), atol=1e-10)
    assert np.allclose(completed[:, :, 0], values[:, :, 0])

    with pytest.raises(NotIsometricError):
        unitary_grid_completion(2 * values)


def test_closed_form_completion():
    completion = thematic_complete(one_z_column(), GRID)
    v_c = completion.v_c
    assert v_c.shape == (2, 1)
    assert np.allclose(v_c.coefficient(1)[:, 0], [-ROOT_HALF, 0.0], atol=1e-12)
    assert np.allclose(v_c.coefficient(0)[:, 0], [0.0, ROOT_HALF], atol=1e-12)
    gram = np.conj(completion.unitary).transpose(0, 2, 1) @ completion.unitary
    assert np.allclose(gram, np.eye(2), atol=1e-10)
    assert completion.certificate > 0.5


def test_scalar_completion_is_empty():
    inner = ColumnSymbol.wrap(ScalarSymbol.monomial(1))
    completion = thematic_complete(inner, GRID)
    assert completion.v_c.shape == (1, 0)
    assert completion.unitary.shape == (GRID, 1, 1)
    assert empty_completion(GRID).v_c.shape == (1, 0)


def test_iterative_completion_constant_column():
    inner = ColumnSymbol.wrap(MatrixSymbol.constant([[1.0], [0.0], [0.0]]))
    completion = thematic_complete(inner, 64)
    assert completion.iterations == 1
    assert completion.v_c.shape == (3, 2)
    assert completion.v_c.negative_energy(relative=False) <= 1e-20
    assert np.allclose(completion.v_c.coefficient(0)[0], 0.0, atol=1e-12)
    gram = np.conj(completion.unitary).transpose(0, 2, 1) @ completion.unitary
    assert np.allclose(gram, np.eye(3), atol=1e-10)
    assert co_outer_certificate(completion.v_c) == pytest.approx(1.0, abs=1e-10)


def test_assemble_thematic_unitary():
    upper = one_z_column().values(GRID)
    column = np.concatenate([upper, np.zeros((GRID, 1))], axis=1)
    v_c = thematic_complete(one_z_column(), GRID).v_c
    unitary = assemble_thematic_unitary(column, v_c, 2, GRID)
    assert unitary.shape == (GRID, 3, 3)
    gram = np.conj(unitary).transpose(0, 2, 1) @ unitary
    assert np.allclose(gram, np.eye(3), atol=1e-8)
    assert np.allclose(unitary[:, :, 0], column)
    assert np.allclose(unitary[:, 2, 1], 0.0, atol=1e-12)

    with pytest.raises(ShapeMismatchError):
        assemble_thematic_unitary(column, v_c, 1, GRID)


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
    print("All spectral factorization tests passed!")
