"""The simplex B, the sets W_{>1} and W+, and the domain D = D1 ∪ D2.

D1 = (union over W+ of eta|Sigma|) ∩ B and D2 = |Sigma| ∩ (union over W_{>1} of
eta(B)). Group elements are exponent words over the oriented generators and
every union is taken over the enumeration window.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from nkcert.common import (
    SIGN_TOL,
    DegenerateSimplex,
    exponent_words,
    show_memory,
    unit_rows,
)
from nkcert.fan_engine import CONE_TOL, QuotientFan, cone_contains
from nkcert.unit_lattice import SubgroupW, UnitElt, labeled


GT1_TOL = 1e-12


class Region(str, Enum):
    NONE = "none"
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True)
class DomainHit:
    region: Region
    word: Optional[tuple[int, ...]] = None


@dataclass(eq=False)
class DomainSpec:
    vertices: np.ndarray
    fan: Optional[QuotientFan] = None
    window: int = 64
    _words: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if (self.vertices <= 0).any():
            raise DegenerateSimplex(
                f"Invalid simplex: nonpositive vertex {self.vertices}"
            )
        lifted = np.vstack([self.vertices.T, np.ones(len(self.vertices))])
        if abs(np.linalg.det(lifted)) < SIGN_TOL:
            raise DegenerateSimplex("Invalid simplex: vertices are affinely dependent")
        self._lifted_inv = np.linalg.inv(lifted)

    @property
    def b(self) -> int:
        return self.vertices.shape[1]

    @property
    def W(self) -> SubgroupW:
        if self.fan is None:
            raise ValueError("DomainSpec has no fan attached")
        return self.fan.W

    @property
    def C(self) -> float:
        return float(self.vertices.min())

    @property
    def R_B(self) -> float:
        return float(self.vertices.max())

    def words(self) -> np.ndarray:
        if self._words is None:
            words = list(exponent_words(self.b, self.window))
            self._words = np.array(words, dtype=float).reshape(len(words), self.b)
        return self._words


def build_domain(
    W: SubgroupW, fan: QuotientFan, window: Optional[int] = None
) -> DomainSpec:
    """Vertices c_0 = (1, ..., 1) and c_i = first b labeled coordinates of eta_i."""
    b = W.b
    rows = W.real_action(np.eye(b))[:, :b]
    vertices = np.vstack([np.ones(b), rows])
    spec = DomainSpec(vertices, fan, fan.window if window is None else window)
    logger.info(f"Domain simplex vertices: {np.round(vertices, 9).tolist()}")
    return spec


def barycentric(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(x)[:, : spec.b]
    lifted = np.vstack([pts.T, np.ones(len(pts))])
    return (spec._lifted_inv @ lifted).T


def in_B(x: np.ndarray, spec: DomainSpec, tol: float = 1e-9) -> np.ndarray:
    return (barycentric(spec, x) >= -tol).all(axis=1)


def classify_w(
    eta: UnitElt, b: int, labeling: Optional[Sequence[int]] = None
) -> tuple[bool, bool]:
    """(in W_{>1}, in W+) for a single group element."""
    lab = tuple(labeling) if labeling is not None else tuple(range(eta.s))
    profile = labeled(np.abs(eta.eta_profile), lab, eta.s)
    gt1, plus = _classes(np.log(profile)[None], b)
    return bool(gt1[0]), bool(plus[0])


def _classes(log_profiles: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
    gt1 = (log_profiles[:, :b] >= -GT1_TOL).any(axis=1)
    identity = (np.abs(log_profiles) < SIGN_TOL).all(axis=1)
    rows = log_profiles[:, :b, None] - log_profiles[:, None, b:]
    positive_row = (rows > SIGN_TOL).all(axis=2).any(axis=1)
    return gt1, identity | positive_row


def word_classes(spec: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
    logs = spec.words() @ spec.W.log_profiles()
    return _classes(logs, spec.b)


def in_sigma(x: np.ndarray, spec: DomainSpec, tol: float = CONE_TOL) -> np.ndarray:
    """Membership in |Sigma|, the union of the representative cones only."""
    pts = np.atleast_2d(x)
    hit = np.zeros(len(pts), dtype=bool)
    by_k: dict[int, list[np.ndarray]] = {}
    for c in spec.fan.sigma:
        by_k.setdefault(len(c.rays), []).append(unit_rows(c.matrix))
    for rays in by_k.values():
        hit |= cone_contains(np.stack(rays), pts, tol).any(axis=0)
    return hit


def _act(spec: DomainSpec, words: np.ndarray, x: np.ndarray) -> np.ndarray:
    return spec.W.real_action(words) * x


def in_D(x: np.ndarray, spec: DomainSpec, tol: float = CONE_TOL) -> DomainHit:
    x = np.asarray(x, dtype=float)
    if not x.any():
        return DomainHit(Region.NONE)

    words = spec.words()
    gt1, plus = word_classes(spec)
    if in_B(x, spec, tol)[0]:
        back = _act(spec, -words, x)
        ok = plus & in_sigma(back, spec, tol)
        if ok.any():
            return DomainHit(Region.D1, tuple(int(e) for e in words[np.argmax(ok)]))
    if in_sigma(x, spec, tol)[0]:
        back = _act(spec, -words, x)
        ok = gt1 & in_B(back, spec, tol)
        if ok.any():
            return DomainHit(Region.D2, tuple(int(e) for e in words[np.argmax(ok)]))
    return DomainHit(Region.NONE)


@dataclass
class TilingReport:
    samples: int
    tiled: int
    gaps: list[int]
    C: float
    R_fit: float
    witnesses: list[Optional[tuple[int, ...]]] = field(repr=False, default_factory=list)

    @property
    def passed(self) -> bool:
        return self.tiled == self.samples


def sample_omega(spec: DomainSpec, samples: int, seed: int) -> np.ndarray:
    """Points of Omega minus L+: log-uniform L-part, N-part off a 1e-6 slab."""
    rng = np.random.default_rng(seed)
    s, b = spec.fan.s, spec.b
    lo, hi = np.log(spec.C / 10), np.log(10 * spec.R_B)
    pts = np.empty((samples, s))
    pts[:, :b] = np.exp(rng.uniform(lo, hi, size=(samples, b)))
    Y = 10 * spec.R_B
    direction = rng.normal(size=(samples, s - b))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    pts[:, b:] = direction * rng.uniform(1e-6, Y, size=(samples, 1))
    return pts


def find_witness(
    x: np.ndarray, spec: DomainSpec, tol: float
) -> Optional[tuple[tuple[int, ...], DomainHit]]:
    """First word w, in search order, with w(x) in the closure of D."""
    for w in spec.words():
        hit = in_D(_act(spec, w[None], x)[0], spec, tol)
        if hit.region != Region.NONE:
            return tuple(int(e) for e in w), hit
    return None


def tiling_check(
    spec: DomainSpec, samples: int = 1000, seed: int = 42, tol: float = 1e-7
) -> TilingReport:
    pts = sample_omega(spec, samples, seed)
    gaps, witnesses = [], []
    R_fit = 0.0
    for i, x in enumerate(pts):
        found = find_witness(x, spec, tol)
        if found is None:
            gaps.append(i)
            witnesses.append(None)
            continue
        w, hit = found
        witnesses.append(w)
        if hit.region == Region.D1:
            y = _act(spec, np.array([w], dtype=float), x)[0]
            R_fit = max(R_fit, float(np.linalg.norm(y)))
    show_memory("tiling check")

    report = TilingReport(samples, samples - len(gaps), gaps, spec.C, R_fit, witnesses)
    if gaps:
        logger.warning(f"Tiling gaps at {len(gaps)} samples, first {gaps[:5]}")
    logger.info(
        f"Tiling: {report.tiled}/{samples} points tiled, C={spec.C}, R_fit={R_fit:.4f}"
    )
    return report


def norm_lower_bound(spec: DomainSpec, samples: int = 1000, seed: int = 0) -> float:
    """min ||eta(x)|| over sampled x in B and eta in W_{>1}; at least C expected."""
    rng = np.random.default_rng(seed)
    s, b = spec.fan.s, spec.b
    weights = rng.dirichlet(np.ones(b + 1), size=samples)
    x = np.empty((samples, s))
    x[:, :b] = weights @ spec.vertices
    x[:, b:] = rng.uniform(-10 * spec.R_B, 10 * spec.R_B, size=(samples, s - b))
    gt1, _ = word_classes(spec)
    words = spec.words()[gt1]
    chosen = words[rng.integers(0, len(words), size=samples)]
    return float(np.linalg.norm(_act(spec, chosen, x), axis=1).min())


def equivariance_check(
    spec: DomainSpec, points: np.ndarray, tol: float = CONE_TOL
) -> int:
    """Count violations of: x in D1 via eta implies (g eta)^-1 g(x) in |Sigma|.

    g runs over the generators and their inverses; pairs whose word leaves the
    window are skipped.
    """
    bad = 0
    for x in points:
        hit = in_D(x, spec, tol)
        if hit.region != Region.D1:
            continue
        eta = np.array(hit.word, dtype=float)
        for g in np.vstack([np.eye(spec.b), -np.eye(spec.b)]):
            moved = eta + g
            if np.abs(moved).max() > spec.window:
                continue
            gx = _act(spec, g[None], x)[0]
            back = _act(spec, -moved[None], gx)
            bad += int(not in_sigma(back, spec, tol)[0])
    return bad


def tiling_of_Bb(
    spec: DomainSpec, samples: int = 1000, seed: int = 0, window: int = 4
) -> bool:
    """Coverage of the log-lattice fundamental domain by translates of ln B_b."""
    if spec.b == 0:
        return True
    lattice = np.log(spec.vertices[1:])
    if abs(np.linalg.det(lattice)) < SIGN_TOL:
        raise DegenerateSimplex("Invalid simplex: log-lattice is degenerate")

    rng = np.random.default_rng(seed)
    y = rng.uniform(0, 1, size=(samples, spec.b)) @ lattice
    words = np.array(list(exponent_words(spec.b, window)), dtype=float)
    shifts = words @ lattice
    covered = np.zeros(samples, dtype=bool)
    for shift in shifts:
        todo = ~covered
        if not todo.any():
            break
        covered[todo] = in_B(np.exp(y[todo] - shift), spec)
    logger.debug(f"B_b tiling coverage {covered.sum()}/{samples}")
    return bool(covered.all())
