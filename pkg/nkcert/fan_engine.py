"""Cones in R^s, quotient fans Sigma + W, and the checks run on them.

R^s is E/H~ in labeled coordinates: the b labeled real places first. A ray may
carry its lattice preimage as a tag; tags move by exact field multiplication,
vectors by the diagonal action.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import null_space
from scipy.optimize import linprog, nnls

from nkcert.ambient import AmbientFrame, pi_htilde
from nkcert.common import (
    CollapseFailed,
    ConfigError,
    NonPositiveProfile,
    RayNotInFan,
    WrongSignature,
    exponent_words,
    unit_rows,
)
from nkcert.field_core import EmbeddingTable, FieldElement, sigma_K
from nkcert.unit_lattice import SubgroupW, UnitElt, labeled


CONE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Ray:
    vector: np.ndarray
    tag: Optional[FieldElement] = None

    def unit(self) -> np.ndarray:
        return self.vector / np.linalg.norm(self.vector)


@dataclass(frozen=True, eq=False)
class Cone:
    rays: tuple[Ray, ...]

    def __post_init__(self):
        if any(np.linalg.norm(r.vector) == 0 for r in self.rays):
            raise ValueError("Invalid cone: zero ray")

    @property
    def matrix(self) -> np.ndarray:
        """Ray vectors as rows."""
        return np.array([r.vector for r in self.rays], dtype=float)

    @property
    def dim(self) -> int:
        return int(np.linalg.matrix_rank(unit_rows(self.matrix), tol=CONE_TOL))

    @property
    def is_simplicial(self) -> bool:
        return self.dim == len(self.rays)

    def key(self) -> np.ndarray:
        return cone_key(self.matrix)

    def contains(self, points: np.ndarray, tol: float = CONE_TOL) -> np.ndarray:
        rays = unit_rows(self.matrix)[None]
        return cone_contains(rays, np.atleast_2d(points), tol)[0]


def cone_key(rays: np.ndarray) -> np.ndarray:
    """Unit rays sorted lexicographically; two cones are equal iff keys agree."""
    units = unit_rows(rays)
    order = np.lexsort(np.round(units, 9).T[::-1])
    return units[order]


def same_cone(a: np.ndarray, b: np.ndarray, tol: float = CONE_TOL) -> bool:
    return a.shape == b.shape and bool(np.abs(a - b).max() < tol)


def cone_contains(
    rays: np.ndarray, points: np.ndarray, tol: float = CONE_TOL
) -> np.ndarray:
    """Membership of points in a stack of cones with the same ray count.

    rays: (C, k, s) unit rays, points: (N, s). Returns a (C, N) mask. Points are
    normalized first so the slack is relative.
    """
    pts = unit_rows(points)
    C, k, s = rays.shape
    ranks = np.linalg.matrix_rank(rays, tol=tol)
    mask = np.zeros((C, len(pts)), dtype=bool)
    simplicial = ranks == k
    if simplicial.any():
        R = rays[simplicial]
        coef = np.einsum("ckn,pn->cpk", np.linalg.pinv(np.transpose(R, (0, 2, 1))), pts)
        recon = np.einsum("cpk,cks->cps", coef, R)
        resid = np.linalg.norm(recon - pts[None], axis=2)
        mask[simplicial] = (coef >= -tol).all(axis=2) & (resid < tol)
    for c in np.flatnonzero(~simplicial):
        for p, x in enumerate(pts):
            _, resid = nnls(rays[c].T, x)
            mask[c, p] = resid < tol
    # the origin belongs to every cone
    mask[:, np.linalg.norm(points, axis=1) == 0] = True
    return mask


@dataclass(frozen=True)
class OmegaCone:
    """Omega = N x L+, with L the first b coordinates and N the last s - b."""

    s: int
    b: int

    @classmethod
    def from_subgroup(cls, W: SubgroupW) -> "OmegaCone":
        return cls(W.s, W.b)

    @property
    def h(self) -> int:
        return self.s - self.b

    def in_omega(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x)[:, : self.b] > 0).all(axis=1)

    def in_l_plus(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.in_omega(x) & (x[:, self.b :] == 0).all(axis=1)

    def in_support(self, x: np.ndarray) -> np.ndarray:
        """(Omega minus L+) union {0}."""
        x = np.atleast_2d(x)
        zero = (x == 0).all(axis=1)
        return zero | (self.in_omega(x) & ~self.in_l_plus(x))


@dataclass
class QuotientFan:
    sigma: list[Cone]
    W: SubgroupW
    omega: OmegaCone
    window: int = 64
    _orbit: Optional[list] = field(default=None, repr=False)

    @property
    def s(self) -> int:
        return self.omega.s

    def orbit(self) -> list["OrbitCone"]:
        if self._orbit is None:
            self._orbit = enumerate_orbit(self, self.window)
        return self._orbit


@dataclass(frozen=True, eq=False)
class OrbitCone:
    word: tuple[int, ...]
    base: int
    rays: np.ndarray

    def key(self) -> np.ndarray:
        return cone_key(self.rays)


def _action(W: SubgroupW, words: np.ndarray) -> np.ndarray:
    return W.real_action(np.atleast_2d(words))


def act(eta: UnitElt, c: Cone, labeling: Optional[Sequence[int]] = None) -> Cone:
    lab = tuple(labeling) if labeling is not None else tuple(range(eta.s))
    diag = labeled(eta.sigma[: eta.s].real, lab, eta.s)
    rays = tuple(
        Ray(r.vector * diag, None if r.tag is None else r.tag * eta.elt) for r in c.rays
    )
    return Cone(rays)


def enumerate_orbit(fan: QuotientFan, window: int) -> list[OrbitCone]:
    words = list(exponent_words(fan.W.b, window))
    diag = _action(fan.W, np.array(words).reshape(len(words), fan.W.b))
    orbit = []
    seen: set[bytes] = set()
    for w, d in zip(words, diag):
        for i, c in enumerate(fan.sigma):
            rays = unit_rows(c.matrix * d)
            key = (cone_key(rays) + 0.0).tobytes()
            if key in seen:
                continue
            seen.add(key)
            orbit.append(OrbitCone(w, i, rays))
    logger.debug(f"Orbit of {len(fan.sigma)} cones over window {window}: {len(orbit)}")
    return orbit


def build_fan_s2(W: SubgroupW) -> QuotientFan:
    """Sigma = {cone{(1,1), eta}, cone{(1,-1), (eta_1, -eta_2)}} for W = <eta>."""
    if W.s != 2 or W.b != 1:
        raise WrongSignature(f"Invalid W for the planar fan: s={W.s}, b={W.b}")
    eta = W.generators[0]
    e1, e2 = labeled(eta.sigma[:2].real, W.labeling, 2)
    if e1 <= 1 or e2 <= 0:
        raise NonPositiveProfile(
            f"Invalid generator {eta.name}: labeled profile ({e1}, {e2})"
        )

    one = eta.elt.field.one
    upper = Cone((Ray(np.array([1.0, 1.0]), one), Ray(np.array([e1, e2]), eta.elt)))
    lower = Cone((Ray(np.array([1.0, -1.0])), Ray(np.array([e1, -e2]))))
    logger.info(f"Built planar fan for {eta.name}: eta=({e1:.6f}, {e2:.6f})")
    return QuotientFan([upper, lower], W, OmegaCone.from_subgroup(W))


def tag_vector(
    tag: FieldElement, E: EmbeddingTable, labeling: Sequence[int]
) -> np.ndarray:
    return labeled(sigma_K(tag, E)[: E.s].real, labeling, E.s)


def validate_sigma(
    cones: Sequence[Sequence[Ray]],
    W: SubgroupW,
    E: EmbeddingTable,
    frame: Optional[AmbientFrame] = None,
) -> QuotientFan:
    """Build a QuotientFan from user-supplied rays.

    Tagged rays get their vector from the tag; if both are given they must agree
    in direction. Vectors are in labeled coordinates.
    """
    built = []
    for rays in cones:
        fixed = []
        for r in rays:
            if r.tag is not None:
                v = tag_vector(r.tag, E, W.labeling)
                if frame is not None:
                    lift = labeled(
                        pi_htilde(frame, np.array([float(c) for c in r.tag.coords]))[0],
                        W.labeling,
                        E.s,
                    )
                    if np.abs(unit_rows(lift) - unit_rows(v)).max() > 1e-9:
                        raise ConfigError(f"Invalid tag {r.tag}: pi_H~ lift disagrees")
                if r.vector.size and not same_cone(
                    unit_rows(r.vector[None]), unit_rows(v[None])
                ):
                    raise ConfigError(
                        f"Invalid ray: tag {r.tag} does not match {r.vector}"
                    )
                fixed.append(Ray(v, r.tag))
            else:
                if len(r.vector) != E.s:
                    raise ConfigError(f"Invalid ray {r.vector}: expected length {E.s}")
                fixed.append(r)
        cone = Cone(tuple(fixed))
        if len(fixed) <= E.s and not cone.is_simplicial:
            raise ConfigError(f"Invalid cone {cone.matrix.tolist()}: rays dependent")
        built.append(cone)
    return QuotientFan(built, W, OmegaCone.from_subgroup(W))


def _sign_separated(n_parts: np.ndarray) -> bool:
    """Some N-coordinate has the same strict sign on every ray."""
    return bool(((n_parts > 0).all(axis=0) | (n_parts < 0).all(axis=0)).any())


def cone_in_support(rays: np.ndarray, omega: OmegaCone) -> bool:
    """cone minus {0} lies in Omega minus L+."""
    b = omega.b
    if not (rays[:, :b] > 0).all():
        return False
    n_parts = rays[:, b:]
    if (n_parts == 0).all(axis=1).any():
        return False
    if _sign_separated(n_parts):
        return True
    # rescale rays so the N-parts have unit length, then look for a combination
    # with vanishing N-part
    scaled = n_parts / np.linalg.norm(n_parts, axis=1, keepdims=True)
    k = len(rays)
    res = linprog(
        np.zeros(k),
        A_eq=np.vstack([scaled.T, np.ones((1, k))]),
        b_eq=np.r_[np.zeros(scaled.shape[1]), 1.0],
        bounds=[(0, None)] * k,
        method="highs",
    )
    return res.status != 0


def _separated_by_facet(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    """A facet normal of the full-dimensional simplicial cone a separates b."""
    if a.shape[0] != a.shape[1] or np.linalg.matrix_rank(a, tol=tol) < a.shape[0]:
        return False
    normals = np.linalg.inv(a.T)
    return bool(((normals @ b.T) < -tol).all(axis=1).any())


def overlap_beyond_faces(a: np.ndarray, b: np.ndarray, tol: float = CONE_TOL) -> bool:
    """Whether cone(a) and cone(b) meet outside the cone of their common rays."""
    if _separated_by_facet(a, b, tol) or _separated_by_facet(b, a, tol):
        return False
    common = [i for i, r in enumerate(a) if (np.abs(b - r).max(axis=1) < tol).any()]
    free = [i for i in range(len(a)) if i not in common]
    if not free:
        return False
    ka, kb, s = len(a), len(b), a.shape[1]
    row = np.zeros(ka + kb)
    row[free] = 1
    res = linprog(
        np.zeros(ka + kb),
        A_eq=np.vstack([np.hstack([a.T, -b.T]), row]),
        b_eq=np.r_[np.zeros(s), 1.0],
        bounds=[(0, None)] * (ka + kb),
        method="highs",
    )
    return res.status == 0


def meets(a: np.ndarray, b: np.ndarray, tol: float = CONE_TOL) -> bool:
    """cone(a) and cone(b) share a nonzero point."""
    if _separated_by_facet(a, b, tol) or _separated_by_facet(b, a, tol):
        return False
    ka, kb, s = len(a), len(b), a.shape[1]
    res = linprog(
        np.zeros(ka + kb),
        A_eq=np.vstack([np.hstack([a.T, -b.T]), np.r_[np.ones(ka), np.zeros(kb)]]),
        b_eq=np.r_[np.zeros(s), 1.0],
        bounds=[(0, None)] * (ka + kb),
        method="highs",
    )
    return res.status == 0


@dataclass
class ActionReport:
    free: bool
    properly_discontinuous: bool
    invariant: bool
    witnesses: list[str] = field(default_factory=list)


def check_action(fan: QuotientFan) -> ActionReport:
    """Freeness, proper discontinuity and invariance of W on the window orbit."""
    W, window = fan.W, fan.window
    witnesses = []
    orbit = fan.orbit()
    keys = [o.key() for o in orbit]

    invariant = True
    for o in orbit:
        if not cone_in_support(o.rays, fan.omega):
            invariant = False
            base = fan.sigma[o.base].matrix.tolist()
            witnesses.append(f"cone {base} moved by {o.word} leaves the support")
            break
    for g in range(W.b):
        for sign in (1, -1):
            word = np.zeros(W.b)
            word[g] = sign
            d = _action(W, word)[0]
            for i, c in enumerate(fan.sigma):
                acted = cone_key(c.matrix * d)
                if not any(same_cone(acted, k) for k in keys):
                    invariant = False
                    witnesses.append(f"g{g + 1}^{sign} maps cone {i} outside the orbit")

    free = True
    identity = tuple([0] * W.b)
    words = np.array([w for w in exponent_words(W.b, window) if w != identity])
    if W.b and len(words):
        diag = _action(W, words)
        for c in fan.sigma:
            units = unit_rows(c.matrix)
            for r in units:
                moved = unit_rows(r[None] * diag)
                fixed = np.abs(moved - r).max(axis=1) < CONE_TOL
                if fixed.any():
                    free = False
                    word = tuple(int(e) for e in words[fixed][0])
                    witnesses.append(f"word {word} fixes ray {r.tolist()}")
                    break

    proper = True
    touching = []
    for o in orbit:
        if o.word == identity:
            continue
        for j, c in enumerate(fan.sigma):
            base = unit_rows(c.matrix)
            if meets(o.rays, base):
                touching.append(o.word)
                if overlap_beyond_faces(o.rays, base):
                    proper = False
                    witnesses.append(f"word {o.word} overlaps cone {j} outside a face")
    if touching and max(max(map(abs, w)) for w in touching) >= window:
        proper = False
        witnesses.append("overlapping words reach the window boundary")

    report = ActionReport(free, proper, invariant, witnesses)
    logger.info(
        f"Action on window {window}: free={free}, properly_discontinuous={proper}, "
        f"invariant={invariant}"
    )
    return report


def in_support(x: np.ndarray, fan: QuotientFan, tol: float = CONE_TOL) -> np.ndarray:
    """Membership of points in |W.Sigma| over the enumeration window."""
    return orbit_membership(x, fan, tol).any(axis=0)


def orbit_membership(
    x: np.ndarray, fan: QuotientFan, tol: float = CONE_TOL
) -> np.ndarray:
    orbit = fan.orbit()
    pts = np.atleast_2d(x)
    mask = np.zeros((len(orbit), len(pts)), dtype=bool)
    by_k: dict[int, list[int]] = {}
    for i, o in enumerate(orbit):
        by_k.setdefault(len(o.rays), []).append(i)
    for idx in by_k.values():
        mask[idx] = cone_contains(np.stack([orbit[i].rays for i in idx]), pts, tol)
    return mask


def check_fan_property(
    fan: QuotientFan, samples: int = 1000, seed: int = 0, tol: float = CONE_TOL
) -> dict:
    """Sampled points of Omega minus L+ lie in the orbit, in at most one open cone."""
    rng = np.random.default_rng(seed)
    s, b = fan.s, fan.omega.b
    pts = np.empty((samples, s))
    pts[:, :b] = rng.uniform(0.5, 2.0, size=(samples, b))
    n_part = rng.uniform(-1.0, 1.0, size=(samples, s - b))
    # keep clear of a 1e-6 slab around L+
    small = np.linalg.norm(n_part, axis=1) < 1e-6
    n_part[small] = 1e-6
    pts[:, b:] = n_part

    orbit = fan.orbit()
    mask = orbit_membership(pts, fan, tol)
    covered = mask.any(axis=0)

    interior_hits = np.zeros(samples, dtype=int)
    for i, o in enumerate(orbit):
        hits = np.flatnonzero(mask[i])
        if not hits.size or np.linalg.matrix_rank(o.rays, tol=tol) < len(o.rays):
            continue
        coef = unit_rows(pts[hits]) @ np.linalg.pinv(o.rays)
        interior_hits[hits] += (coef > tol).all(axis=1)

    report = {
        "samples": samples,
        "covered": int(covered.sum()),
        "multiply_covered_interior": int((interior_hits > 1).sum()),
    }
    report["passed"] = (
        report["covered"] == samples and report["multiply_covered_interior"] == 0
    )
    logger.debug(f"Fan property sampling: {report}")
    return report


def _collapse_ratio(v: np.ndarray, b: int) -> np.ndarray:
    return (v[:, :b] ** 2).sum(axis=1) / (v[:, b:] ** 2).sum(axis=1)


@dataclass
class CollapseReport:
    fitted_N: Optional[float]
    min_margin: float
    k_max: int
    contained: bool


def cone_collapse_check(
    delta: float,
    eta: UnitElt,
    k_max: int,
    b: int = 1,
    labeling: Optional[Sequence[int]] = None,
    samples: int = 200,
    seed: int = 0,
) -> CollapseReport:
    """Fit N with eta^k C_delta inside C_{N^k delta} for k <= k_max.

    C_delta = {v in Omega : sum_{i<=b} v_i^2 >= delta sum_{j>b} v_j^2}.
    """
    s = eta.s
    lab = tuple(labeling) if labeling is not None else tuple(range(s))
    diag = labeled(eta.sigma[:s].real, lab, s)

    rng = np.random.default_rng(seed)
    v = rng.uniform(-1, 1, size=(samples, s))
    v[:, :b] = np.abs(v[:, :b]) + 1e-3
    v[:, b:] += np.where(v[:, b:] >= 0, 1e-3, -1e-3)
    # push every sample onto or inside C_delta, half of them onto its boundary
    ratio = _collapse_ratio(v, b)
    spread = rng.uniform(1, 10, samples)
    target = delta * np.where(np.arange(samples) % 2 == 0, 1.0, spread)
    v[:, b:] *= np.sqrt(ratio / target)[:, None]

    if k_max == 0:
        return CollapseReport(None, 0.0, 0, True)

    Ns, margins = [], []
    for k in range(1, k_max + 1):
        ratio_k = _collapse_ratio(v * diag**k, b)
        worst = ratio_k.min() / delta
        Ns.append(worst ** (1 / k))
        margins.append(worst - 1)
    N = float(min(Ns))
    if N <= 1:
        raise CollapseFailed(
            f"{eta.name} does not push C_{delta} towards L+ (N={N:.4f})"
        )
    logger.debug(f"Cone collapse for {eta.name}: N={N:.4f}")
    return CollapseReport(N, float(min(margins)), k_max, True)


@dataclass
class DivisorReport:
    ray: list[float]
    tag: Optional[list] = None
    star_cones: int = 0
    quotient_rays: int = 0
    complete: bool = False
    kind: str = "generalized LVMB"
    dimension: int = 0
    lift_consistent: Optional[bool] = None
    elliptic_residual: Optional[float] = None


def elliptic_identity(E: EmbeddingTable) -> float:
    """|(1 - conj(beta)) - (beta - 1)/beta| for beta the first complex place."""
    beta = E.values[E.s]
    return float(abs((1 - np.conj(beta)) - (beta - 1) / beta))


def _direction_cover(proj: list[np.ndarray], dim: int, samples: int, seed: int) -> bool:
    if dim == 1:
        signs = {int(np.sign(r[0, 0])) for r in proj if abs(r[0, 0]) > CONE_TOL}
        return {-1, 1} <= signs
    rng = np.random.default_rng(seed)
    dirs = unit_rows(rng.normal(size=(samples, dim)))
    covered = np.zeros(samples, dtype=bool)
    for rays in proj:
        covered |= cone_contains(unit_rows(rays)[None], dirs, 1e-7)[0]
    return bool(covered.all())


def divisor_certificate(
    fan: QuotientFan,
    ray: Ray,
    frame: Optional[AmbientFrame] = None,
    E: Optional[EmbeddingTable] = None,
    samples: int = 1000,
    seed: int = 0,
) -> DivisorReport:
    """Star quotient of the fan at a ray, and its completeness.

    The projection along span(ray) is taken in R^s = E/H~; this is the same as
    projecting the lifted cones along the ray and then along the image of H~.
    """
    target = unit_rows(ray.vector[None])[0]
    star = []
    for o in fan.orbit():
        hit = np.abs(o.rays - target).max(axis=1) < CONE_TOL
        if hit.any():
            star.append(o.rays[~hit])
    if not star:
        raise RayNotInFan(
            f"Ray {ray.vector.tolist()} is not a ray of the enumerated orbit"
        )

    Q = null_space(target[None])
    proj = [unit_rows(rest @ Q) for rest in star if len(rest)]
    distinct: list[np.ndarray] = []
    for rays in proj:
        for r in rays:
            if not any(np.abs(r - d).max() < CONE_TOL for d in distinct):
                distinct.append(r)
    complete = _direction_cover(proj, fan.s - 1, samples, seed)

    report = DivisorReport(
        ray=ray.vector.tolist(),
        tag=ray.tag.to_list() if ray.tag is not None else None,
        star_cones=len(star),
        quotient_rays=len(distinct),
        complete=complete,
    )
    if E is not None:
        report.dimension = E.s + E.t - 1
        if E.t == 1:
            report.elliptic_residual = elliptic_identity(E)
        if fan.s - 1 == 1 and E.t == 1 and complete and len(distinct) == 2:
            report.kind = "Hopf surface"
    if frame is not None and ray.tag is not None:
        lift = pi_htilde(frame, np.array([float(c) for c in ray.tag.coords]))[0]
        lift = labeled(lift, fan.W.labeling, fan.s)
        gap = np.abs(unit_rows(lift[None])[0] - target).max()
        report.lift_consistent = bool(gap < 1e-9)
    logger.info(
        f"Divisor at {np.round(ray.vector, 6).tolist()}: {report.kind}, "
        f"complete={complete}"
    )
    return report
