"""Quartic Salem polynomials X^4 + q1 X^3 + q2 X^2 + q1 X + 1.

Such a polynomial is X^2 Q(X + 1/X) with Q(y) = y^2 + q1 y + q2 - 2; it has the
Salem root pattern exactly when Q has one root above 2 and one in (-2, 2), i.e.
Q(2) < 0 < Q(-2), which is the band 2(q1 - 1) < q2 < -2(q1 + 1).
"""
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from nkcert.field_core import IntPoly, find_roots, irreducibility_witness


SALEM_CIRCLE_TOL = 1e-9


def salem4_poly(q1: int, q2: int) -> IntPoly:
    return IntPoly.from_coeffs([1, q1, q2, q1, 1])


def q2_band(q1: int) -> range:
    return range(2 * (q1 - 1) + 1, -2 * (q1 + 1))


def salem_root(P: IntPoly, tol: float = SALEM_CIRCLE_TOL) -> Optional[float]:
    """The root > 1 if P has one real root > 1, one in (0, 1), the rest on |z| = 1."""
    roots = find_roots(P, tol)
    on_circle = np.abs(np.abs(roots) - 1) < tol
    off = roots[~on_circle]
    if len(off) != 2 or (np.abs(off.imag) > tol).any():
        return None
    small, large = sorted(off.real)
    if not (0 < small < 1 < large):
        return None
    return float(large)


def is_irreducible(P: IntPoly) -> bool:
    if irreducibility_witness(P) is not None:
        return True
    return bool(P.to_sympy().is_irreducible)


def enum_salem4(q1_min: int, q1_max: int) -> list[IntPoly]:
    """Every band polynomial for q1 in [q1_min, q1_max] with a verified Salem pattern.

    Reducible polynomials (a quadratic unit times a cyclotomic factor) pass the
    pattern test and are kept; see `salem_table` for the irreducibility flag.
    """
    found = []
    for q1 in range(q1_min, q1_max + 1):
        for q2 in q2_band(q1):
            P = salem4_poly(q1, q2)
            if salem_root(P) is None:
                logger.warning(f"Band polynomial {P} fails the Salem root pattern")
                continue
            found.append(P)
    logger.info(
        f"Found {len(found)} quartic Salem polynomials for q1 in [{q1_min}, {q1_max}]"
    )
    return found


def salem_table(q1_min: int, q1_max: int) -> pd.DataFrame:
    rows = []
    for P in enum_salem4(q1_min, q1_max):
        _, q1, q2, _, _ = P.to_list()
        rows.append(
            {
                "q1": q1,
                "q2": q2,
                "salem_number": salem_root(P),
                "irreducible": is_irreducible(P),
                "poly": str(P),
            }
        )
    df = pd.DataFrame(rows, columns=["q1", "q2", "salem_number", "irreducible", "poly"])
    return df.sort_values("salem_number", ignore_index=True)


def smallest_salem4(q1_min: int = -10, q1_max: int = 10) -> Optional[IntPoly]:
    df = salem_table(q1_min, q1_max)
    df = df[df["irreducible"]]
    if df.empty:
        return None
    row = df.iloc[0]
    return salem4_poly(int(row["q1"]), int(row["q2"]))
