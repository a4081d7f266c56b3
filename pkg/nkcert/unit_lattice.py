"""Units of O_K, their logarithmic embeddings and the Assumption C machinery."""
import concurrent.futures
from dataclasses import dataclass, field
from enum import Enum
from itertools import permutations
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from nkcert.common import (
    SIGN_TOL,
    NonPositiveProfile,
    NotAUnit,
    RankTooLarge,
    WrongRank,
    batch_items,
    exponent_words,
)
from nkcert.field_core import (
    EmbeddingTable,
    FieldElement,
    NumberField,
    inverse,
    min_poly_elt,
    sigma_K,
)


WORD_BATCH_SIZE = 4096


class AssumptionStatus(str, Enum):
    EXACT = "Exact"
    WINDOW_VERIFIED = "WindowVerified"
    REFUTED = "Refuted"


@dataclass(frozen=True, eq=False)
class UnitElt:
    """A unit together with its complex embedding values.

    The embedding values of products are propagated multiplicatively instead of
    being re-evaluated from the (possibly huge) exact coordinates.
    """

    elt: FieldElement
    sigma: np.ndarray
    s: int
    t: int
    name: str = ""

    @property
    def eta_profile(self) -> np.ndarray:
        return np.concatenate(
            [self.sigma[: self.s].real, np.abs(self.sigma[self.s : self.s + self.t])]
        )

    @property
    def is_totally_positive(self) -> bool:
        return bool((self.sigma[: self.s].real > 0).all())

    def negative_places(self) -> list[int]:
        return [i + 1 for i in range(self.s) if self.sigma[i].real < 0]

    def __mul__(self, other: "UnitElt") -> "UnitElt":
        return UnitElt(
            self.elt * other.elt,
            self.sigma * other.sigma,
            self.s,
            self.t,
            f"{self.name}*{other.name}",
        )

    def inverse(self) -> "UnitElt":
        inv = inverse(self.elt, self.elt.field)
        return UnitElt(inv, 1 / self.sigma, self.s, self.t, f"({self.name})^-1")

    def __pow__(self, k: int) -> "UnitElt":
        base = self if k >= 0 else self.inverse()
        elt = base.elt ** abs(k)
        return UnitElt(elt, base.sigma ** abs(k), self.s, self.t, f"({self.name})^{k}")


def validate_unit(x: FieldElement, E: EmbeddingTable, name: str = "") -> UnitElt:
    if not x.is_integral:
        raise NotAUnit(f"Invalid unit {x}: not an algebraic integer")
    constant = min_poly_elt(x, x.field).coeffs[0]
    if abs(constant) != 1:
        raise NotAUnit(f"Invalid unit {x}: minimal polynomial constant term {constant}")
    return UnitElt(x, sigma_K(x, E), E.s, E.t, name or str(x))


@dataclass(frozen=True)
class SignReport:
    name: str
    negative_places: tuple[int, ...]
    squared: bool = False

    @property
    def totally_positive(self) -> bool:
        return not self.negative_places


def sign_report(u: UnitElt) -> SignReport:
    """Real places (1-based) where u is negative; squaring is needed iff any."""
    negative = tuple(u.negative_places())
    return SignReport(u.name, negative, squared=bool(negative))


def unit_word(units: Sequence[UnitElt], exponents: Sequence[int]) -> UnitElt:
    F = units[0].elt.field
    result = UnitElt(F.one, np.ones_like(units[0].sigma), units[0].s, units[0].t, "1")
    for u, e in zip(units, exponents):
        if e:
            result = result * u**e
    name = word_name(units, exponents)
    return UnitElt(result.elt, result.sigma, result.s, result.t, name)


def word_name(units: Sequence[UnitElt], exponents: Sequence[int]) -> str:
    names = [
        u.name if e == 1 else f"{u.name}^{e}" for u, e in zip(units, exponents) if e
    ]
    return "*".join(names) or "1"


def log_embedding(u: UnitElt) -> np.ndarray:
    s, t = u.s, u.t
    mags = np.abs(u.sigma[: s + t])
    if (mags == 0).any():
        raise NotAUnit(f"Invalid unit {u.elt}: zero embedding")
    return np.concatenate([np.log(mags[:s]), 2 * np.log(mags[s:])])


def check_independence(units: Sequence[UnitElt], tol: float = 1e-9) -> int:
    """Numeric rank of the log vectors."""
    if not units:
        return 0
    logs = np.array([log_embedding(u) for u in units])
    return int(np.linalg.matrix_rank(logs, tol=tol * max(1.0, np.abs(logs).max())))


def labeled(profile: np.ndarray, labeling: Sequence[int], s: int) -> np.ndarray:
    """Reorder the real places so that the labeled ones come first."""
    order = list(labeling) + [i for i in range(profile.shape[-1]) if i >= s]
    return profile[..., order]


def full_labeling(chosen: Sequence[int], s: int) -> tuple[int, ...]:
    return tuple(chosen) + tuple(i for i in range(s) if i not in chosen)


@dataclass(frozen=True)
class PhiMatrix:
    entries: np.ndarray

    def qualifying_rows(self) -> list[int]:
        rows = []
        for i, row in enumerate(self.entries):
            if row.size and (np.abs(row) >= SIGN_TOL).all():
                if (row > 0).all() or (row < 0).all():
                    rows.append(i)
        return rows

    def margin(self) -> float:
        rows = self.qualifying_rows()
        if not rows:
            return 0.0
        return float(max(np.abs(self.entries[i]).min() for i in rows))


def _phi_from_profile(profile: np.ndarray, b: int) -> np.ndarray:
    logs = np.log(profile)
    return logs[..., :b, None] - logs[..., None, b:]


def phi_b(u: UnitElt, b: int, labeling: Sequence[int]) -> PhiMatrix:
    if not u.is_totally_positive:
        raise NonPositiveProfile(
            f"Invalid unit {u.name}: negative at real places {u.negative_places()}"
        )
    profile = labeled(u.eta_profile, full_labeling(labeling[:b], u.s), u.s)
    return PhiMatrix(_phi_from_profile(profile, b))


@dataclass
class AssumptionC:
    status: AssumptionStatus
    labeling: tuple[int, ...]
    window: int = 0
    witness: Optional[tuple[int, ...]] = None


@dataclass
class SubgroupW:
    generators: list[UnitElt]
    s: int
    t: int
    labeling: tuple[int, ...] = ()
    assumption_c: Optional[AssumptionC] = None
    # exponent vectors over the fundamental units, when W came from search_w
    words: list[tuple[int, ...]] = field(default_factory=list)

    def __post_init__(self):
        if not self.labeling:
            self.labeling = tuple(range(self.s))

    @property
    def b(self) -> int:
        return len(self.generators)

    def log_profiles(self) -> np.ndarray:
        """ln of the labeled eta profiles, one row per generator."""
        if not self.generators:
            return np.zeros((0, self.s + self.t))
        profiles = np.array([u.eta_profile for u in self.generators])
        return np.log(labeled(np.abs(profiles), self.labeling, self.s))

    def word_profiles(self, words: np.ndarray) -> np.ndarray:
        return np.exp(np.asarray(words, dtype=float) @ self.log_profiles())

    def real_action(self, words: np.ndarray) -> np.ndarray:
        """Diagonal of the action on R^s (labeled coordinates) for each word."""
        return self.word_profiles(words)[..., : self.s]

    def word(self, exponents: Sequence[int]) -> UnitElt:
        return unit_word(self.generators, exponents)


def _refuting_words(
    phis: np.ndarray, words: list[tuple[int, ...]]
) -> Optional[tuple[int, ...]]:
    w = np.array(words, dtype=float)
    # phis: (b, b, g) per generator; word phi is linear in the exponents
    word_phi = np.einsum("nk,kij->nij", w, phis)
    ok = (np.abs(word_phi) >= SIGN_TOL).all(axis=2) & (
        (word_phi > 0).all(axis=2) | (word_phi < 0).all(axis=2)
    )
    bad = ~ok.any(axis=1)
    nontrivial = np.abs(w).sum(axis=1) > 0
    idx = np.flatnonzero(bad & nontrivial)
    return words[idx[0]] if idx.size else None


def _window_check(W: SubgroupW, chosen: tuple[int, ...], window: int):
    profiles = np.array([u.eta_profile for u in W.generators])
    full = full_labeling(chosen, W.s)
    phis = _phi_from_profile(labeled(profiles, full, W.s), W.b)

    batches = batch_items(exponent_words(W.b, window), WORD_BATCH_SIZE)
    with concurrent.futures.ThreadPoolExecutor(4) as executor:
        found = list(executor.map(lambda ws: _refuting_words(phis, ws), batches))
    # batches come back in word order, the first refutation wins
    return next((w for w in found if w is not None), None)


def check_assumption_c(W: SubgroupW, window: int = 10) -> AssumptionC:
    """Search the labelings of real places for one satisfying Assumption C.

    For b = 1 the answer is exact since phi(u^k) = k phi(u); for b >= 2 every
    nontrivial word in the exponent window is tested. The result is also stored
    on W together with the labeling it found.
    """
    s, b = W.s, W.b
    trivial = all(np.allclose(np.abs(u.sigma), 1, atol=SIGN_TOL) for u in W.generators)
    if b == 0 or trivial:
        result = AssumptionC(AssumptionStatus.EXACT, tuple(range(s)))
        W.assumption_c, W.labeling = result, result.labeling
        return result

    for u in W.generators:
        if not u.is_totally_positive:
            raise NonPositiveProfile(
                f"Invalid generator {u.name}: negative at real places "
                f"{u.negative_places()}"
            )

    first_witness = None
    for chosen in permutations(range(s), b):
        if b == 1:
            if phi_b(W.generators[0], 1, chosen).qualifying_rows():
                result = AssumptionC(AssumptionStatus.EXACT, full_labeling(chosen, s))
                break
            first_witness = first_witness or (1,)
            continue

        witness = _window_check(W, chosen, window)
        if witness is None:
            result = AssumptionC(
                AssumptionStatus.WINDOW_VERIFIED, full_labeling(chosen, s), window
            )
            break
        first_witness = first_witness or witness
    else:
        result = AssumptionC(
            AssumptionStatus.REFUTED, tuple(range(s)), window, first_witness
        )

    W.assumption_c, W.labeling = result, result.labeling
    logger.info(
        f"Assumption C for W of rank {b}: {result.status.value} "
        f"(labeling {[i + 1 for i in result.labeling]})"
    )
    return result


def orient(W: SubgroupW) -> SubgroupW:
    """Replace generators by their inverses where the qualifying phi-row is negative.

    After orientation every generator has a row with eta_i > eta_j for all j > b.
    """
    oriented, words = [], []
    for k, u in enumerate(W.generators):
        phi = phi_b(u, W.b, W.labeling)
        rows = phi.qualifying_rows()
        flip = bool(rows) and bool((phi.entries[rows[0]] < 0).all())
        oriented.append(u.inverse() if flip else u)
        if W.words:
            words.append(tuple(-e for e in W.words[k]) if flip else W.words[k])
    return SubgroupW(oriented, W.s, W.t, W.labeling, W.assumption_c, words)


def search_w(
    F: NumberField,
    E: EmbeddingTable,
    fundamental_units: Sequence[UnitElt],
    b: int,
    window: int = 3,
    assumption_window: int = 10,
) -> Optional[SubgroupW]:
    """Greedy inductive search for a rank-b subgroup satisfying Assumption C.

    Candidates are unit words with exponents in the window, squared when not
    totally positive. At each step the admissible extensions are ranked by word
    length, then by phi margin (largest first), then lexicographically.
    """
    s, t = E.s, E.t
    if b >= s:
        raise RankTooLarge(f"Invalid rank b={b}: construction mode requires b < s={s}")
    if b == 0:
        return SubgroupW([], s, t)

    r = len(fundamental_units)
    candidates = []
    for exps in exponent_words(r, window):
        if not any(exps):
            continue
        u = unit_word(fundamental_units, exps)
        signs = sign_report(u)
        if signs.squared:
            logger.warning(
                f"Unit {u.name} is negative at real places "
                f"{list(signs.negative_places)}, using its square"
            )
            exps = tuple(2 * e for e in exps)
            squared = u**2
            u = UnitElt(
                squared.elt, squared.sigma, s, t, word_name(fundamental_units, exps)
            )
        candidates.append((exps, u))

    chosen: list[tuple[tuple[int, ...], UnitElt]] = []
    for level in range(1, b + 1):
        ranked = []
        for exps, u in candidates:
            trial = [c[1] for c in chosen] + [u]
            if check_independence(trial) < level:
                continue
            W = SubgroupW(trial, s, t)
            status = check_assumption_c(W, assumption_window).status
            if status == AssumptionStatus.REFUTED:
                continue
            margin = phi_b(u, level, W.labeling).margin()
            ranked.append((sum(map(abs, exps)), -margin, exps, u))
        if not ranked:
            logger.warning(f"No extension of W to rank {level} in window {window}")
            return None
        _, _, exps, u = min(ranked, key=lambda c: (c[0], c[1], c[2]))
        chosen.append((exps, u))
        logger.info(f"search_w level {level}: chose {u.name}")

    W = SubgroupW([c[1] for c in chosen], s, t, words=[c[0] for c in chosen])
    check_assumption_c(W, assumption_window)
    return W


def is_reciprocal(u: UnitElt) -> bool:
    m = min_poly_elt(u.elt, u.elt.field)
    c = m.coeffs[0]
    if abs(c) != 1:
        raise NotAUnit(f"Invalid unit {u.elt}: minimal polynomial constant term {c}")
    d = m.degree
    return all(m.coeffs[d - k] == c * m.coeffs[k] for k in range(d + 1))


def invariant_pair_detector(
    W: SubgroupW, E: EmbeddingTable, tol: float = 1e-9
) -> set[tuple[int, int]]:
    """Pairs (i, j), 1-based, with sigma_i(g) sigma_j(g) = 1 for every generator."""
    n = E.n
    pairs = set()
    for i in range(n):
        for j in range(i + 1, n):
            if all(abs(g.sigma[i] * g.sigma[j] - 1) < tol for g in W.generators):
                pairs.add((i + 1, j + 1))
    return pairs


def ot_determinant(A: SubgroupW) -> float:
    logs = np.array([log_embedding(u)[: A.s] for u in A.generators])
    return float(np.linalg.det(logs))


def check_ot_admissible(A: SubgroupW, E: EmbeddingTable, tol: float = 1e-9) -> bool:
    if A.b != E.s:
        raise WrongRank(f"Invalid OT subgroup: rank {A.b} != s={E.s}")
    det = ot_determinant(A)
    logger.info(f"OT log determinant: {det:.6f}")
    return abs(det) > tol
