from fractions import Fraction

import numpy as np
import pytest

from nkcert.common import (
    BasisMissingOne,
    BasisNotRing,
    ConfigError,
    NonMonic,
    NotSquarefree,
)
from nkcert.field_core import (
    IntPoly,
    char_poly_mult,
    find_roots,
    inverse,
    irreducibility_witness,
    min_poly_elt,
    mult_matrix,
    norm,
    sigma_K,
    validate_field,
)
from tests.field_setup import (
    ALPHA,
    CUBIC,
    ONE_MINUS_ALPHA,
    QUINTIC,
    SALEM4,
    SALEM4_ROOT,
    load_field,
    random_elements,
)


def test_int_poly():
    P = IntPoly.from_coeffs(SALEM4)
    assert P.degree == 4
    assert P.is_monic
    assert P.is_integral
    assert P.to_list() == SALEM4
    assert str(P) == "X**4 - X**3 - X**2 - X + 1"
    assert P(0) == 1

    # test trailing zeros are dropped
    assert IntPoly.from_coeffs([1, 2, 0, 0]).degree == 1

    # test rational coefficients
    Q = IntPoly.from_coeffs(["1/2", 0, 1])
    assert not Q.is_integral
    assert Q.to_list() == ["1/2", 0, 1]

    with pytest.raises(ValueError, match="Invalid polynomial"):
        IntPoly.from_coeffs([0, 0])


def test_validate_field():
    # test the quartic Salem field
    F = validate_field(IntPoly.from_coeffs(SALEM4))
    assert F.n == 4
    assert F.signature == (2, 1)
    assert F.irreducibility_witness == 2
    assert F.basis_provenance == "power"
    assert F.is_power_basis

    # test other signatures
    assert validate_field(IntPoly.from_coeffs(QUINTIC)).signature == (3, 1)
    assert validate_field(IntPoly.from_coeffs(CUBIC)).signature == (1, 1)
    assert validate_field(IntPoly.from_coeffs([-2, 0, 1])).signature == (2, 0)

    # test degree too small
    with pytest.raises(ConfigError, match="Invalid min_poly"):
        validate_field(IntPoly.from_coeffs([1, 1]))

    # test non-monic
    with pytest.raises(NonMonic, match="Invalid min_poly"):
        validate_field(IntPoly.from_coeffs([1, 0, 2]))

    # test repeated root (X - 1)^2 (X + 1)
    with pytest.raises(NotSquarefree, match="Invalid min_poly"):
        validate_field(IntPoly.from_coeffs([1, -1, -1, 1]))


def test_user_basis():
    P = IntPoly.from_coeffs([-5, 0, 1])

    # test the ring of integers of Q(sqrt 5)
    F = validate_field(P, [[1, 0], ["1/2", "1/2"]])
    assert F.basis_provenance == "user"
    assert not F.is_power_basis
    golden = F.element([0, 1])
    assert golden * golden == golden + F.one
    assert F.generator.coords == (Fraction(-1), Fraction(2))

    # test 1 not a basis element
    with pytest.raises(BasisMissingOne, match="Invalid basis"):
        validate_field(P, [[0, 1], [1, 1]])

    # test not closed under multiplication
    with pytest.raises(BasisNotRing, match="Invalid basis"):
        validate_field(P, [[1, 0], [0, "1/2"]])

    # test dependent columns
    with pytest.raises(BasisNotRing, match="Invalid basis"):
        validate_field(P, [[1, 0], [2, 0]])

    # test wrong shape
    with pytest.raises(BasisNotRing, match="Invalid basis"):
        validate_field(P, [[1, 0]])


def test_irreducibility_witness():
    assert irreducibility_witness(IntPoly.from_coeffs(SALEM4)) == 2
    assert irreducibility_witness(IntPoly.from_coeffs(CUBIC)) == 2
    # X^2 - 2 stays reducible mod 2 but not mod 3
    assert irreducibility_witness(IntPoly.from_coeffs([-2, 0, 1])) == 3
    # X^4 + 1 is reducible mod every prime
    assert irreducibility_witness(IntPoly.from_coeffs([1, 0, 0, 0, 1])) is None


def test_arithmetic():
    F, _ = load_field(SALEM4)
    alpha = F.element(ALPHA)
    assert alpha == F.generator

    # test multiplication matrix of alpha is the companion matrix
    M = mult_matrix(alpha, F)
    assert [list(M.col(j)) for j in range(4)] == [
        [0, 1, 0, 0],
        [0, 0, 1, 0],
        [0, 0, 0, 1],
        [-1, 1, 1, 1],
    ]

    # test norm and inverse
    assert norm(alpha, F) == 1
    assert inverse(alpha, F).to_list() == [1, 1, 1, -1]
    assert alpha**-1 == inverse(alpha, F)
    assert alpha * alpha**-1 == F.one
    assert alpha**4 == F.element([-1, 1, 1, 1])
    assert alpha**0 == F.one

    # test non-invertible element
    with pytest.raises(ZeroDivisionError):
        inverse(F.element([0, 0, 0, 0]), F)

    # test ring axioms on random elements
    rng = np.random.default_rng(7)
    xs = random_elements(F, rng, 6)
    for x, y, z in zip(xs, xs[1:], xs[2:]):
        assert x * y == y * x
        assert (x * y) * z == x * (y * z)
        assert x * (y + z) == x * y + x * z
        assert norm(x * y, F) == norm(x, F) * norm(y, F)


def test_min_poly():
    F, _ = load_field(SALEM4)
    alpha = F.element(ALPHA)

    assert char_poly_mult(alpha, F).to_list() == SALEM4
    assert min_poly_elt(alpha, F).to_list() == SALEM4
    assert min_poly_elt(F.element(ONE_MINUS_ALPHA), F).to_list() == [-1, 2, 2, -3, 1]

    # test rational element
    assert char_poly_mult(F.one, F).to_list() == [1, -4, 6, -4, 1]
    assert min_poly_elt(F.one, F).to_list() == [-1, 1]
    assert min_poly_elt(F.rational("1/2"), F).to_list() == ["-1/2", 1]

    # test quadratic subfield of Q(sqrt 5)
    G, _ = load_field([-5, 0, 1], [[1, 0], ["1/2", "1/2"]])
    assert min_poly_elt(G.element([0, 1]), G).to_list() == [-1, -1, 1]


def test_embeddings():
    F, E = load_field(SALEM4)
    assert (E.s, E.t, E.n) == (2, 1, 4)
    assert E.values[0].real == pytest.approx(SALEM4_ROOT)
    assert E.values[1].real == pytest.approx(1 / SALEM4_ROOT)
    assert abs(E.values[2]) == pytest.approx(1.0)
    assert E.values[2].imag > 0
    assert E.values[3] == pytest.approx(E.values[2].conjugate())
    assert np.allclose(E.real, E.values[:2].real)

    # test sigma_K agrees with evaluation of the power-basis polynomial
    alpha = F.element(ALPHA)
    assert np.allclose(sigma_K(alpha, E), E.values)
    x = F.element([3, -1, 0, 2])
    expected = 3 - E.values + 2 * E.values**3
    assert np.allclose(sigma_K(x, E), expected)

    # test multiplicativity
    assert np.allclose(sigma_K(x * alpha, E), sigma_K(x, E) * E.values)

    # test ordering for three real places
    _, E = load_field(QUINTIC)
    assert (E.s, E.t) == (3, 1)
    assert E.real[0] > E.real[1] > E.real[2]


def test_find_roots():
    P = IntPoly.from_coeffs(CUBIC)
    roots = find_roots(P, 1e-9)
    assert len(roots) == 3
    assert np.allclose(P(roots), 0, atol=1e-9)
    real = roots[np.abs(roots.imag) < 1e-8].real
    assert real == pytest.approx([1.324717957244746])

    # test agreement with numpy on random squarefree polynomials
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        coeffs = [int(c) for c in rng.integers(-5, 6, size=5)] + [1]
        P = IntPoly.from_coeffs(coeffs)
        if coeffs[0] == 0 or not P.to_sympy().is_sqf:
            continue
        ours = find_roots(P, 1e-7)
        theirs = np.roots(coeffs[::-1])
        assert np.abs(ours[:, None] - theirs[None, :]).min(axis=1).max() < 1e-6
        checked += 1
