"""The real space E spanned by sigma_K(O_K), its subspaces H and H~, and the iota data.

Vectors of E are written in lattice coordinates (coefficients on B_K) unless a
function says otherwise; B'-coordinates split E as R^s x H~.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import null_space
from scipy.spatial.distance import pdist

from nkcert.common import (
    ConjugationCheckFailed,
    IllConditioned,
    InjectivityViolation,
    NoComplexPlace,
    UnsupportedDimension,
    ZeroCoordinate,
)
from nkcert.field_core import EmbeddingTable, NumberField, mult_matrix
from nkcert.unit_lattice import SubgroupW


@dataclass(frozen=True, eq=False)
class AmbientFrame:
    s: int
    t: int
    B_K: np.ndarray
    Bprime: np.ndarray
    # B_K^-1 B', real by construction
    P_BKBprime: np.ndarray
    max_imag: float
    H_basis: np.ndarray
    Htilde_basis: np.ndarray
    condition: float

    @property
    def n(self) -> int:
        return self.s + 2 * self.t


@dataclass(frozen=True)
class SeparationReport:
    min_separation: float
    samples: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.samples < 2 or self.min_separation > self.threshold


def bprime_matrix(s: int, t: int) -> np.ndarray:
    n = s + 2 * t
    eye = np.eye(n, dtype=complex)
    cols = [eye[:, i] for i in range(s)]
    for j in range(t):
        a, b = eye[:, s + j], eye[:, s + t + j]
        cols += [a + b, -1j * (a - b)]
    return np.column_stack(cols)


def build_frame(
    F: NumberField, E: EmbeddingTable, max_condition: float = 1e8
) -> AmbientFrame:
    if E.t == 0:
        raise NoComplexPlace(f"Field {F.min_poly} is totally real, H would be trivial")

    B_K = E.basis_images
    condition = float(np.linalg.cond(B_K))
    if condition > max_condition:
        raise IllConditioned(f"cond(B_K) = {condition:.3e} exceeds {max_condition:.0e}")
    if condition > max_condition / 1e4:
        logger.warning(f"B_K is poorly conditioned: {condition:.3e}")

    Bprime = bprime_matrix(E.s, E.t)
    P = np.linalg.solve(B_K, Bprime)
    max_imag = float(np.abs(P.imag).max())

    targets = np.eye(E.n, dtype=complex)[:, E.s + E.t :]
    H = np.linalg.solve(B_K, targets)
    Htilde = np.column_stack(
        [v for j in range(E.t) for v in (H[:, j].real, H[:, j].imag)]
    )

    logger.debug(f"Frame: cond(B_K)={condition:.3e}, max Im P={max_imag:.2e}")
    return AmbientFrame(E.s, E.t, B_K, Bprime, P.real, max_imag, H, Htilde, condition)


def to_bprime(frame: AmbientFrame, v: np.ndarray) -> np.ndarray:
    """Lattice coordinates -> B'-coordinates (rows of v are vectors)."""
    return np.linalg.solve(frame.P_BKBprime, np.atleast_2d(v).T).T


def pi_htilde(frame: AmbientFrame, v: np.ndarray) -> np.ndarray:
    """E -> E/H~ = R^s. On sigma_K(x) this is (sigma_1(x), ..., sigma_s(x))."""
    return to_bprime(frame, v)[:, : frame.s]


def _lattice_sample(n: int, N: int, height: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = rng.integers(-height, height + 1, size=(N, n))
    return np.unique(pts, axis=0)


def _separation(points: np.ndarray, threshold: float) -> SeparationReport:
    if len(points) < 2:
        return SeparationReport(float("inf"), len(points), threshold)
    dists = pdist(points)
    return SeparationReport(float(dists.min()), len(points), threshold)


def check_pi_h_injective(
    frame: AmbientFrame,
    N: int = 1000,
    height: int = 20,
    seed: int = 0,
    threshold: float = 1e-6,
    points: Optional[np.ndarray] = None,
) -> SeparationReport:
    """Sampled injectivity of z -> (z_1, ..., z_{s+t}) on sigma_K(O_K)."""
    coords = _lattice_sample(frame.n, N, height, seed) if points is None else points
    images = coords @ frame.B_K.T
    head = images[:, : frame.s + frame.t]
    report = _separation(np.column_stack([head.real, head.imag]), threshold)
    if not report.passed:
        raise InjectivityViolation(
            f"pi_H separation {report.min_separation:.3e} <= {threshold}"
        )
    logger.debug(
        f"pi_H min separation {report.min_separation:.3e} over {report.samples}"
    )
    return report


def check_htilde_injective(
    frame: AmbientFrame,
    N: int = 1000,
    height: int = 20,
    seed: int = 0,
    threshold: float = 1e-6,
) -> SeparationReport:
    """Sampled H~ ∩ sigma_K(O_K) = {0}, i.e. injectivity of pi_H~ on the lattice."""
    coords = _lattice_sample(frame.n, N, height, seed)
    report = _separation(pi_htilde(frame, coords.astype(float)), threshold)
    if not report.passed:
        raise InjectivityViolation(
            f"pi_H~ separation {report.min_separation:.3e} <= {threshold}"
        )
    return report


def check_s1_intersection(frame: AmbientFrame, tol: float = 1e-9) -> int:
    """Dimension of {x real : sigma_K-coordinates of x supported on H}; 0 expected."""
    s, t = frame.s, frame.t
    rows = frame.B_K[: s + t]
    system = np.vstack([rows[:s].real, rows[s:].real, rows[s:].imag])
    scale = max(1.0, float(np.abs(system).max()))
    return null_space(system, rcond=tol * scale).shape[1]


def expected_block(frame: AmbientFrame, sigma: np.ndarray) -> np.ndarray:
    """Matrix of multiplication by a unit in B'-coordinates."""
    s, t = frame.s, frame.t
    M = np.zeros((frame.n, frame.n))
    M[range(s), range(s)] = sigma[:s].real
    for j in range(t):
        mu = sigma[s + t + j]
        k = s + 2 * j
        M[k : k + 2, k : k + 2] = [[mu.real, -mu.imag], [mu.imag, mu.real]]
    return M


def action_in_bprime(frame: AmbientFrame, A: np.ndarray) -> np.ndarray:
    P = frame.P_BKBprime
    return np.linalg.solve(P, A @ P)


def check_block_structure(frame: AmbientFrame, W: SubgroupW) -> float:
    """Largest deviation of each generator's B'-matrix from its block form."""
    worst = 0.0
    for g in W.generators:
        A = np.array(mult_matrix(g.elt, g.elt.field).tolist(), dtype=float)
        M = action_in_bprime(frame, A)
        dev = np.abs(M - expected_block(frame, g.sigma)).max()
        worst = max(worst, float(dev / max(1.0, np.abs(M).max())))
    return worst


def check_quotient_diagonal(frame: AmbientFrame, W: SubgroupW) -> float:
    """Deviation of the induced action on E/H~ from diag(sigma_1, ..., sigma_s)."""
    worst = 0.0
    s = frame.s
    for g in W.generators:
        A = np.array(mult_matrix(g.elt, g.elt.field).tolist(), dtype=float)
        M = action_in_bprime(frame, A)
        dev = np.abs(M[:s] - np.diag(g.sigma[:s].real) @ np.eye(s, frame.n)).max()
        worst = max(worst, float(dev / max(1.0, np.abs(M).max())))
    return worst


def ord_map(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if (np.abs(z) == 0).any():
        raise ZeroCoordinate(f"ord undefined: zero coordinate in {z}")
    return -np.log(np.abs(z)) / (2 * np.pi)


def iota_params(frame: AmbientFrame) -> np.ndarray:
    """Row i holds h_i, so iota(z)_j = exp(2 i pi sum_i h_{i,j} z_i)."""
    return frame.H_basis.T.copy()


def iota(frame: AmbientFrame, z: Sequence[complex]) -> np.ndarray:
    return np.exp(2j * np.pi * (np.asarray(z, dtype=complex) @ iota_params(frame)))


def check_iota_conjugation(
    frame: AmbientFrame, W: SubgroupW, tol: float = 1e-9
) -> float:
    """The unit action on iota-coordinates is scaling by sigma_{s+t+i}(eta).

    In lattice coordinates this is A h_i = sigma_{s+t+i}(eta) h_i, with A the
    exact multiplication matrix of eta.
    """
    s, t = frame.s, frame.t
    worst = 0.0
    for g in W.generators:
        A = np.array(mult_matrix(g.elt, g.elt.field).tolist(), dtype=float)
        for i in range(t):
            h = frame.H_basis[:, i]
            lam = g.sigma[s + t + i]
            scale = max(1.0, np.abs(A).max() * np.abs(h).max())
            worst = max(worst, float(np.abs(A @ h - lam * h).max() / scale))
    if worst >= tol:
        raise ConjugationCheckFailed(f"iota conjugation deviates by {worst:.3e}")
    return worst


def htilde_residual(frame: AmbientFrame, v: np.ndarray) -> float:
    """Distance from v to span(H~), relative to |v|."""
    coef, *_ = np.linalg.lstsq(frame.Htilde_basis, v, rcond=None)
    residual = np.linalg.norm(frame.Htilde_basis @ coef - v)
    return float(residual / max(1.0, np.linalg.norm(v)))


def check_ord_spans_htilde(frame: AmbientFrame, tol: float = 1e-9) -> tuple[int, float]:
    """ord of iota(e_i) and iota(i e_i): rank and worst distance to H~."""
    t = frame.t
    images = []
    for i in range(t):
        for z in (np.eye(t)[i], 1j * np.eye(t)[i]):
            images.append(ord_map(iota(frame, z)))
    stack = np.array(images)
    rank = int(np.linalg.matrix_rank(stack, tol=tol * max(1.0, np.abs(stack).max())))
    residual = max(htilde_residual(frame, v) for v in stack)
    return rank, residual


def h_tuple_match(frame: AmbientFrame, reference: np.ndarray, index: int = 0) -> dict:
    """Compare a reference vector for h_index with the solved one.

    Returns the residual of B_K applied to the reference, whether it is collinear
    with the solved vector, and the last coordinate of the solved vector.
    """
    h = frame.H_basis[:, index]
    target = np.eye(frame.n)[:, frame.s + frame.t + index]
    residual = float(np.abs(frame.B_K @ reference - target).max())
    cos = abs(np.vdot(reference, h)) / (np.linalg.norm(reference) * np.linalg.norm(h))
    return {
        "reference_residual": residual,
        "collinear": bool(abs(cos - 1) < 1e-9),
        "scale": complex(np.vdot(h, reference) / np.vdot(h, h)),
        "h_last": complex(h[-1]),
    }


def quartic_h_reference(E: EmbeddingTable) -> np.ndarray:
    """(-beta, beta(1 - beta), conj(beta) - 1, 1) for the complex root beta."""
    if (E.s, E.t) != (2, 1):
        raise UnsupportedDimension(
            f"Reference tuple needs (s, t) = (2, 1), got ({E.s}, {E.t})"
        )
    beta = E.values[2]
    return np.array([-beta, beta * (1 - beta), np.conj(beta) - 1, 1])
