"""Exact arithmetic in K = Q[X]/<P> and the numeric embeddings of K.

Lattice-side objects (polynomials, basis, elements) are exact rationals; only the
embedding table is floating point.
"""
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import sympy
from loguru import logger
from scipy.spatial.distance import pdist
from sympy.polys.matrices import DomainMatrix

from nkcert.common import (
    MAX_WITNESS_PRIME,
    REAL_GUARD,
    REAL_SPLIT,
    ROOT_MAX_ITER,
    ROOT_STEP_TOL,
    AmbiguousRealComplexSplit,
    BasisMissingOne,
    BasisNotRing,
    ConfigError,
    NonMonic,
    NotSquarefree,
    OracleMismatch,
    RootFindingFailed,
)


X = sympy.Symbol("X")

RationalLike = Union[int, Fraction, str]


def to_fraction(v) -> Fraction:
    if isinstance(v, (sympy.Rational, sympy.Integer)):
        return Fraction(int(v.p), int(v.q))
    return Fraction(v)


@dataclass(frozen=True)
class IntPoly:
    """Polynomial with exact coefficients, constant term first.

    Integer coefficients are the normal case; characteristic and minimal
    polynomials of non-integral elements carry rationals.
    """

    coeffs: tuple[Fraction, ...]

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[RationalLike]) -> "IntPoly":
        cs = [to_fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        if not cs:
            raise ValueError("Invalid polynomial: all coefficients are zero")
        return cls(tuple(cs))

    @classmethod
    def from_sympy(cls, poly: sympy.Poly) -> "IntPoly":
        return cls.from_coeffs(reversed(poly.all_coeffs()))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> Fraction:
        return self.coeffs[-1]

    @property
    def is_monic(self) -> bool:
        return self.leading == 1

    @property
    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coeffs)

    def to_sympy(self) -> sympy.Poly:
        return sympy.Poly([sympy.Rational(c) for c in reversed(self.coeffs)], X)

    def to_list(self) -> list:
        return [int(c) if c.denominator == 1 else str(c) for c in self.coeffs]

    def __call__(self, z):
        return np.polyval([float(c) for c in reversed(self.coeffs)], z)

    def __str__(self) -> str:
        return str(self.to_sympy().as_expr())


@dataclass(frozen=True)
class NumberField:
    min_poly: IntPoly
    # basis[j] holds the power-basis coordinates of the j-th integral basis element
    basis: tuple[tuple[Fraction, ...], ...]
    signature: tuple[int, int]
    irreducibility_witness: Optional[int] = None
    basis_provenance: str = "power"

    @property
    def n(self) -> int:
        return self.min_poly.degree

    @property
    def s(self) -> int:
        return self.signature[0]

    @property
    def t(self) -> int:
        return self.signature[1]

    @cached_property
    def poly(self) -> sympy.Poly:
        return self.min_poly.to_sympy()

    @cached_property
    def basis_matrix(self) -> sympy.Matrix:
        return sympy.Matrix(self.n, self.n, lambda i, j: self.basis[j][i])

    @cached_property
    def basis_inverse(self) -> sympy.Matrix:
        return self.basis_matrix.inv()

    @cached_property
    def is_power_basis(self) -> bool:
        return self.basis_matrix == sympy.eye(self.n)

    def to_power(self, coords: Sequence[Fraction]) -> list:
        if self.is_power_basis:
            return [sympy.Rational(c) for c in coords]
        vec = sympy.Matrix([sympy.Rational(c) for c in coords])
        return list(self.basis_matrix * vec)

    def from_power(self, power_coords: Sequence) -> tuple[Fraction, ...]:
        vec = list(power_coords) + [0] * (self.n - len(power_coords))
        if not self.is_power_basis:
            vec = list(self.basis_inverse * sympy.Matrix(vec))
        return tuple(to_fraction(sympy.Rational(c)) for c in vec)

    def element(self, coords: Iterable[RationalLike]) -> "FieldElement":
        cs = tuple(to_fraction(c) for c in coords)
        if len(cs) != self.n:
            raise ValueError(
                f"Invalid element: expected {self.n} coords, got {len(cs)}"
            )
        return FieldElement(cs, self)

    def from_power_basis(self, power_coords: Iterable[RationalLike]) -> "FieldElement":
        coords = self.from_power([sympy.Rational(c) for c in power_coords])
        return FieldElement(coords, self)

    def rational(self, r: RationalLike) -> "FieldElement":
        return self.from_power_basis([r])

    @cached_property
    def one(self) -> "FieldElement":
        return self.rational(1)

    @cached_property
    def generator(self) -> "FieldElement":
        """The class of X, written α throughout."""
        return self.from_power_basis([0, 1])


@dataclass(frozen=True)
class FieldElement:
    coords: tuple[Fraction, ...]
    field: NumberField = dc_field(repr=False, compare=False)

    @property
    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coords)

    def to_list(self) -> list:
        return [int(c) if c.denominator == 1 else str(c) for c in self.coords]

    def __add__(self, other: "FieldElement") -> "FieldElement":
        coords = tuple(a + b for a, b in zip(self.coords, other.coords))
        return FieldElement(coords, self.field)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        coords = tuple(a - b for a, b in zip(self.coords, other.coords))
        return FieldElement(coords, self.field)

    def __neg__(self) -> "FieldElement":
        return FieldElement(tuple(-a for a in self.coords), self.field)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        return mul(self, other, self.field)

    def __pow__(self, k: int) -> "FieldElement":
        base = self if k >= 0 else inverse(self, self.field)
        result = self.field.one
        for _ in range(abs(k)):
            result = mul(result, base, self.field)
        return result

    def __str__(self) -> str:
        return f"({', '.join(map(str, self.coords))})"


def validate_field(
    P: IntPoly, basis: Optional[Sequence[Sequence[RationalLike]]] = None
) -> NumberField:
    """Check the defining polynomial and integral basis, and compute the signature.

    The basis is given as columns (power-basis coordinates of each basis element)
    and defaults to the power basis.
    """
    if P.degree < 2:
        raise ConfigError(f"Invalid min_poly: degree {P.degree} < 2")
    if not P.is_monic or not P.is_integral:
        raise NonMonic(f"Invalid min_poly {P}: leading coefficient {P.leading}")

    poly = P.to_sympy()
    if not poly.is_sqf:
        g = sympy.gcd(poly, poly.diff(X))
        raise NotSquarefree(f"Invalid min_poly {P}: gcd(P, P') = {g}")

    n = P.degree
    if basis is None:
        columns = tuple(
            tuple(Fraction(int(i == j)) for i in range(n)) for j in range(n)
        )
        provenance = "power"
    else:
        columns = tuple(tuple(to_fraction(c) for c in col) for col in basis)
        provenance = "user"
        if len(columns) != n or any(len(col) != n for col in columns):
            raise BasisNotRing(f"Invalid basis: expected {n} columns of length {n}")

    witness = irreducibility_witness(P)
    if witness is None:
        logger.warning(f"No prime p <= {MAX_WITNESS_PRIME} makes {P} irreducible mod p")
    else:
        logger.debug(f"{P} is irreducible mod {witness}")

    s = sympy.Poly(poly, X).count_roots()
    F = NumberField(P, columns, (s, (n - s) // 2), witness, provenance)
    if provenance == "user":
        _check_basis(F)
    logger.info(
        f"Validated field {P}: n={n}, signature=({F.s}, {F.t}), basis={provenance}"
    )
    return F


def _check_basis(F: NumberField):
    one = tuple(Fraction(int(i == 0)) for i in range(F.n))
    if one not in F.basis:
        raise BasisMissingOne("Invalid basis: 1 is not one of the basis columns")
    if F.basis_matrix.det() == 0:
        raise BasisNotRing("Invalid basis: columns are linearly dependent")

    for i in range(F.n):
        for j in range(i, F.n):
            w = mul(_basis_elt(F, i), _basis_elt(F, j), F)
            if not w.is_integral:
                raise BasisNotRing(f"Invalid basis: w{i}*w{j} = {w} is not integral")


def _basis_elt(F: NumberField, j: int) -> FieldElement:
    return FieldElement(tuple(Fraction(int(i == j)) for i in range(F.n)), F)


def irreducibility_witness(P: IntPoly) -> Optional[int]:
    """Smallest prime p <= 101 with P irreducible over F_p, if any."""
    coeffs = [int(c) for c in reversed(P.coeffs)]
    for p in sympy.primerange(2, MAX_WITNESS_PRIME + 1):
        reduced = sympy.Poly(coeffs, X, modulus=p)
        if reduced.degree() == P.degree and reduced.is_irreducible:
            return int(p)
    return None


def mul(a: FieldElement, b: FieldElement, F: NumberField) -> FieldElement:
    pa = sympy.Poly(list(reversed(F.to_power(a.coords))), X, domain=sympy.QQ)
    pb = sympy.Poly(list(reversed(F.to_power(b.coords))), X, domain=sympy.QQ)
    prod = (pa * pb).rem(F.poly.set_domain(sympy.QQ))
    return FieldElement(F.from_power(list(reversed(prod.all_coeffs()))), F)


def mult_matrix(x: FieldElement, F: NumberField) -> sympy.Matrix:
    """Exact matrix of y -> x*y in the integral basis; column j is x*w_j."""
    cols = [mul(x, _basis_elt(F, j), F).coords for j in range(F.n)]
    return sympy.Matrix(F.n, F.n, lambda i, j: sympy.Rational(cols[j][i]))


def norm(x: FieldElement, F: NumberField) -> Fraction:
    return to_fraction(mult_matrix(x, F).det())


def inverse(x: FieldElement, F: NumberField) -> FieldElement:
    M = mult_matrix(x, F)
    if M.det() == 0:
        raise ZeroDivisionError(f"{x} is not invertible")
    one = sympy.Matrix([sympy.Rational(c) for c in F.one.coords])
    return FieldElement(tuple(to_fraction(c) for c in M.LUsolve(one)), F)


def char_poly_mult(x: FieldElement, F: NumberField) -> IntPoly:
    dM = DomainMatrix.from_Matrix(mult_matrix(x, F)).convert_to(sympy.QQ)
    # highest degree first
    return IntPoly.from_coeffs(
        to_fraction(sympy.QQ.to_sympy(c)) for c in reversed(dM.charpoly())
    )


def min_poly_elt(x: FieldElement, F: NumberField) -> IntPoly:
    """Minimal polynomial of x, computed twice and cross-checked.

    First as the squarefree part of the characteristic polynomial, then as the
    first linear dependency among 1, x, x^2, ...
    """
    sqf = sympy.sqf_part(char_poly_mult(x, F).to_sympy())
    by_charpoly = IntPoly.from_sympy(sqf.monic())
    by_dependency = _min_poly_by_dependency(x, F)
    if by_charpoly != by_dependency:
        raise OracleMismatch(
            f"Minimal polynomial of {x}: sqf(charpoly) = {by_charpoly}, "
            f"linear dependency = {by_dependency}"
        )
    return by_charpoly


def _min_poly_by_dependency(x: FieldElement, F: NumberField) -> IntPoly:
    powers = [F.one]
    for d in range(1, F.n + 1):
        powers.append(mul(powers[-1], x, F))
        M = sympy.Matrix(F.n, d + 1, lambda i, j: sympy.Rational(powers[j].coords[i]))
        null = M.nullspace()
        if null:
            v = null[0] / null[0][d]
            return IntPoly.from_coeffs(to_fraction(c) for c in v)
    raise OracleMismatch(f"No linear dependency among powers of {x} up to degree {F.n}")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Embedding values of the generator, ordered as described in `embeddings`."""

    values: np.ndarray
    s: int
    t: int
    tol: float
    # basis_images[i, j] = sigma_i(w_j)
    basis_images: np.ndarray

    @property
    def n(self) -> int:
        return self.s + 2 * self.t

    @property
    def real(self) -> np.ndarray:
        return self.values[: self.s].real


def embeddings(F: NumberField, tol: float = 1e-9) -> EmbeddingTable:
    """Roots of the defining polynomial, in the order

    real roots descending, then complex roots with positive imaginary part by
    ascending real part, then their conjugates in the same order.
    """
    roots = find_roots(F.min_poly, tol)

    scale = 1 + np.abs(roots)
    im = np.abs(roots.imag)
    ambiguous = (im >= REAL_SPLIT * scale) & (im < REAL_GUARD * scale)
    if ambiguous.any():
        raise AmbiguousRealComplexSplit(
            f"Roots {roots[ambiguous]} of {F.min_poly} sit in the real/complex "
            "guard band"
        )

    is_real = im < REAL_SPLIT * scale
    real = np.sort(roots[is_real].real)[::-1]
    upper = roots[~is_real & (roots.imag > 0)]
    upper = upper[np.argsort(upper.real, kind="stable")]
    s, t = len(real), len(upper)
    if (s, t) != F.signature or s + 2 * t != F.n:
        raise AmbiguousRealComplexSplit(
            f"Numeric split ({s}, {t}) disagrees with Sturm count {F.signature}"
        )

    values = np.concatenate([real.astype(complex), upper, upper.conj()])
    if F.n > 1:
        sep = pdist(np.column_stack([values.real, values.imag])).min()
        if sep <= tol:
            raise RootFindingFailed(f"Roots of {F.min_poly} closer than {tol}: {sep}")

    vander = np.vander(values, F.n, increasing=True)
    basis = np.array(F.basis_matrix.tolist(), dtype=float)
    table = EmbeddingTable(values, s, t, tol, vander @ basis)
    logger.debug(f"Embeddings of {F.min_poly}: {np.round(values, 12)}")
    return table


def find_roots(P: IntPoly, tol: float) -> np.ndarray:
    n = P.degree
    c = np.array([float(v) for v in P.coeffs]) / float(P.leading)
    radius = 1 + np.abs(c[:-1]).max()
    z = radius * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    high_first = c[::-1]

    for _ in range(ROOT_MAX_ITER):
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1)
        step = np.polyval(high_first, z) / diff.prod(axis=1)
        z = z - step
        if np.abs(step).max() < ROOT_STEP_TOL * max(1.0, np.abs(z).max()):
            break
    else:
        raise RootFindingFailed(
            f"Durand-Kerner did not converge for {P} in {ROOT_MAX_ITER} steps"
        )

    deriv = np.polyder(high_first)
    for _ in range(3):
        d = np.polyval(deriv, z)
        z = np.where(d != 0, z - np.polyval(high_first, z) / np.where(d != 0, d, 1), z)

    mags = np.abs(z)[:, None] ** np.arange(n + 1)[None, :]
    scale = (mags * np.abs(c)[None, :]).sum(axis=1)
    residual = np.abs(np.polyval(high_first, z))
    if (residual >= tol * scale).any():
        raise RootFindingFailed(f"Root residuals {residual} of {P} exceed {tol}")
    return z


def sigma_K(x: FieldElement, E: EmbeddingTable) -> np.ndarray:
    return E.basis_images @ np.array([float(c) for c in x.coords])
