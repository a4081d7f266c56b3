import numpy as np
import pytest

from nkcert.common import NonPositiveProfile, NotAUnit, RankTooLarge, WrongRank
from nkcert.field_core import min_poly_elt, sigma_K
from nkcert.unit_lattice import (
    AssumptionStatus,
    SubgroupW,
    UnitElt,
    check_assumption_c,
    check_independence,
    check_ot_admissible,
    invariant_pair_detector,
    is_reciprocal,
    labeled,
    log_embedding,
    orient,
    ot_determinant,
    phi_b,
    search_w,
    sign_report,
    unit_word,
    validate_unit,
    word_name,
)
from tests.field_setup import (
    QUINTIC,
    SALEM4,
    SALEM4_ROOT,
    identity_unit,
    load_field,
    quintic_units,
    random_elements,
    random_words,
    salem4_units,
    subgroup,
)


@pytest.fixture(scope="module")
def salem4():
    F, E = load_field(SALEM4)
    return F, E, salem4_units(F, E)


@pytest.fixture(scope="module")
def quintic():
    F, E = load_field(QUINTIC)
    return F, E, quintic_units(F, E)


def test_validate_unit(salem4):
    F, E, (alpha, one_minus) = salem4
    assert alpha.name == "alpha"
    assert alpha.eta_profile == pytest.approx([SALEM4_ROOT, 1 / SALEM4_ROOT, 1.0])
    assert alpha.is_totally_positive
    assert not one_minus.is_totally_positive
    assert one_minus.negative_places() == [1]

    # test default name
    assert validate_unit(F.one, E).name == str(F.one)

    # test non-integral element
    with pytest.raises(NotAUnit, match="Invalid unit"):
        validate_unit(F.rational("1/2"), E)

    # test integer of norm != +-1
    with pytest.raises(NotAUnit, match="Invalid unit"):
        validate_unit(F.rational(2), E)


def test_sign_report(salem4):
    _, _, (alpha, one_minus) = salem4
    report = sign_report(alpha)
    assert report.totally_positive
    assert not report.squared

    report = sign_report(one_minus)
    assert report.name == "1-alpha"
    assert report.negative_places == (1,)
    assert report.squared
    assert sign_report(one_minus**2).totally_positive


def test_unit_words(salem4):
    F, E, units = salem4
    alpha, one_minus = units

    # test exact element and propagated embeddings agree
    u = unit_word(units, (2, -3))
    assert u.name == "alpha^2*1-alpha^-3"
    assert u.elt == alpha.elt**2 * one_minus.elt**-3
    assert np.allclose(u.sigma, sigma_K(u.elt, E))

    # test inverse
    inv = alpha.inverse()
    assert inv.elt.to_list() == [1, 1, 1, -1]
    assert np.allclose(inv.sigma * alpha.sigma, 1)

    # test names
    assert word_name(units, (1, 0)) == "alpha"
    assert word_name(units, (0, 0)) == "1"
    assert unit_word(units, (0, 0)).elt == F.one


def test_log_embedding(salem4):
    _, _, units = salem4
    alpha, one_minus = units
    assert log_embedding(alpha) == pytest.approx(
        [np.log(SALEM4_ROOT), -np.log(SALEM4_ROOT), 0.0], abs=1e-12
    )

    # test independence
    assert check_independence(units) == 2
    assert check_independence([alpha, alpha**2]) == 1
    assert check_independence([]) == 0

    # test coordinate sum vanishes for units
    rng = np.random.default_rng(1)
    for w in random_words(rng, 50, 2, 4):
        assert abs(log_embedding(unit_word(units, w)).sum()) < 1e-9


def test_multiplicativity(salem4):
    F, E, _ = salem4
    rng = np.random.default_rng(2)
    xs = random_elements(F, rng, 101, height=10)
    for x, y in zip(xs, xs[1:]):
        expected = sigma_K(x, E) * sigma_K(y, E)
        assert np.allclose(sigma_K(x * y, E), expected, rtol=1e-9, atol=1e-9)


def test_min_poly_agreement(salem4):
    # min_poly_elt raises OracleMismatch when its two computations differ
    F, _, _ = salem4
    rng = np.random.default_rng(3)
    for x in random_elements(F, rng, 50, height=4):
        m = min_poly_elt(x, F)
        assert m.is_monic
        assert m.degree in (1, 2, 4)


def test_phi_b(salem4):
    _, _, (alpha, one_minus) = salem4
    phi = phi_b(alpha, 1, (0, 1))
    assert phi.entries.shape == (1, 2)
    log_alpha = np.log(SALEM4_ROOT)
    assert phi.entries[0] == pytest.approx([2 * log_alpha, log_alpha])
    assert phi.qualifying_rows() == [0]
    assert phi.margin() == pytest.approx(np.log(SALEM4_ROOT))

    # test no qualifying row
    assert phi_b(one_minus**2, 1, (0, 1)).qualifying_rows() == []
    assert phi_b(one_minus**2, 1, (0, 1)).margin() == 0.0

    # test negative unit
    with pytest.raises(NonPositiveProfile, match="Invalid unit"):
        phi_b(one_minus, 1, (0, 1))

    # test additivity on random totally positive words
    gens = [alpha, one_minus**2]
    rng = np.random.default_rng(4)
    words = random_words(rng, 100, 2, 3)
    for w1, w2 in zip(words[::2], words[1::2]):
        u, v = unit_word(gens, w1), unit_word(gens, w2)
        total = phi_b(u * v, 1, (1, 0)).entries
        parts = phi_b(u, 1, (1, 0)).entries + phi_b(v, 1, (1, 0)).entries
        assert np.abs(total - parts).max() < 1e-9


def test_check_assumption_c(salem4):
    F, E, (alpha, one_minus) = salem4

    # test W = <alpha>
    W = SubgroupW([alpha], 2, 1)
    result = check_assumption_c(W)
    assert result.status == AssumptionStatus.EXACT
    assert result.labeling == (0, 1)
    assert W.labeling == (0, 1)

    # test W = <(1-alpha)^2> needs the second real place first
    W = SubgroupW([one_minus**2], 2, 1)
    assert W.generators[0].eta_profile == pytest.approx(
        [0.52141, 0.17582, 3.30280], rel=1e-3
    )
    result = check_assumption_c(W)
    assert result.status == AssumptionStatus.EXACT
    assert result.labeling == (1, 0)

    # test trivial and empty subgroups
    assert check_assumption_c(SubgroupW([], 2, 1)).status == AssumptionStatus.EXACT
    W = SubgroupW([identity_unit(F, E)], 2, 1)
    assert check_assumption_c(W).status == AssumptionStatus.EXACT

    # test refuted when both real places move together
    fake = UnitElt(F.one, np.array([2, 2, 0.5j, -0.5j]), 2, 1, "fake")
    result = check_assumption_c(SubgroupW([fake], 2, 1))
    assert result.status == AssumptionStatus.REFUTED
    assert result.witness == (1,)

    # test negative generator
    with pytest.raises(NonPositiveProfile, match="Invalid generator"):
        check_assumption_c(SubgroupW([one_minus], 2, 1))


def test_orient(salem4):
    _, _, units = salem4
    W = subgroup(units, [(0, 2)], oriented=False)
    assert W.labeling == (1, 0)

    oriented = orient(W)
    assert oriented.words == [(0, -2)]
    assert oriented.labeling == (1, 0)
    profile = labeled(oriented.generators[0].eta_profile, oriented.labeling, 2)
    assert profile[:2] == pytest.approx([5.688, 1.918], rel=1e-3)
    assert phi_b(oriented.generators[0], 1, oriented.labeling).entries.min() > 0

    # test already oriented
    W = subgroup(units, [(1, 0)])
    assert W.words == [(1, 0)]
    assert W.generators[0].elt == units[0].elt


def test_search_w(salem4, quintic):
    F, E, units = salem4

    # test a single negative unit is squared
    W = search_w(F, E, units[1:], 1)
    assert W.words == [(-2,)]
    assert W.assumption_c.status == AssumptionStatus.EXACT
    assert W.labeling == (1, 0)

    # test shortest words win
    W = search_w(F, E, units, 1)
    assert W.words[0] in [(-1, 0), (1, 0)]
    assert W.assumption_c.status == AssumptionStatus.EXACT

    # test rank zero
    assert search_w(F, E, units, 0).b == 0

    # test rank too large
    with pytest.raises(RankTooLarge, match="Invalid rank"):
        search_w(F, E, units, 2)

    # test rank two in a field with three real places: both generators have
    # ln eta_1 + ln eta_2 + 3 ln eta_3 close to 0, so labeling (1, 2) holds
    F, E, units = quintic
    gens = [unit_word(units, (1, 1, 5)), unit_word(units, (2, -4, 2))]
    assert all(g.is_totally_positive for g in gens)
    W = search_w(F, E, gens, 2, window=1, assumption_window=3)
    assert W is not None
    assert W.b == 2
    assert W.assumption_c.status == AssumptionStatus.WINDOW_VERIFIED
    assert W.labeling == (0, 1, 2)
    assert check_independence(W.generators) == 2


def test_reciprocity(salem4, quintic):
    _, E, (alpha, one_minus) = salem4
    assert is_reciprocal(alpha)
    assert not is_reciprocal(one_minus**2)

    # test invariant pairs
    W = SubgroupW([alpha], 2, 1)
    assert invariant_pair_detector(W, E) == {(1, 2), (3, 4)}
    W = SubgroupW([one_minus**2], 2, 1)
    assert invariant_pair_detector(W, E) == set()

    # test no reciprocal unit when s is odd
    F, E, units = quintic
    assert F.s == 3
    rng = np.random.default_rng(5)
    for w in random_words(rng, 100, 3, 2):
        assert not is_reciprocal(unit_word(units, w))


def test_ot_admissible(salem4, quintic):
    _, E, (alpha, one_minus) = salem4
    A = SubgroupW([alpha, one_minus**2], 2, 1)
    assert ot_determinant(A) == pytest.approx(-1.2987, abs=1e-3)
    assert check_ot_admissible(A, E)

    # test dependent generators
    assert not check_ot_admissible(SubgroupW([alpha, alpha**2], 2, 1), E)

    # test wrong rank
    with pytest.raises(WrongRank, match="Invalid OT subgroup"):
        check_ot_admissible(SubgroupW([alpha], 2, 1), E)

    # test quintic with squared units
    F, E, units = quintic
    A = SubgroupW([u**2 for u in units], 3, 1)
    assert check_ot_admissible(A, E)
