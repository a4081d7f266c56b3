import json

import pytest

from nkcert.certificate import (
    BY_THEOREM,
    NOT_APPLICABLE,
    UNCERTIFIED,
    UNKNOWN,
    Certificate,
    Invariants,
    PipelineReports,
    assemble,
    failure_certificate,
    from_json,
    gated_invariants,
    ot_certificate,
    to_json,
)
from nkcert.common import (
    CheckResult,
    ConfigError,
    IncompletePipeline,
    NotAdmissible,
    WrongRank,
)
from nkcert.unit_lattice import SubgroupW, invariant_pair_detector
from tests.field_setup import (
    QUINTIC,
    SALEM4,
    load_field,
    quintic_units,
    salem4_units,
    subgroup,
)


@pytest.fixture(scope="module")
def salem4():
    F, E = load_field(SALEM4)
    return F, E, salem4_units(F, E)


def test_gated_invariants():
    # test construction without the hypotheses
    inv = gated_invariants("construction", 2, 1, 1, False, False)
    assert inv.dim_Y == 3
    assert inv.b1 == 1
    assert inv.kodaira == "-infinity"
    assert inv.kodaira_basis == BY_THEOREM
    assert inv.h1_lower_bound == 1
    assert inv.h2_U0modW == UNCERTIFIED
    assert inv.algebraic_dimension == UNKNOWN
    assert inv.non_kahler == BY_THEOREM
    assert inv.b2_OT == NOT_APPLICABLE

    # test one hypothesis is not enough
    inv = gated_invariants("construction", 2, 1, 1, True, False)
    assert inv.h2_U0modW == UNCERTIFIED

    # test with both hypotheses
    inv = gated_invariants("construction", 3, 1, 2, True, True)
    assert inv.h2_U0modW == 1
    assert inv.algebraic_dimension == 0

    # test LVMB
    inv = gated_invariants("LVMB", 2, 1, 0, False, True)
    assert inv.b1 == 0
    assert inv.kodaira == NOT_APPLICABLE
    assert inv.non_kahler == NOT_APPLICABLE

    # test OT
    assert gated_invariants("OT", 2, 1, 2, False, False).b2_OT == UNCERTIFIED
    assert gated_invariants("OT", 2, 1, 2, True, True).b2_OT == 1
    assert gated_invariants("OT", 3, 1, 3, False, False).b2_OT == 3


def test_certificate_validation():
    inv = gated_invariants("construction", 2, 1, 1, True, True)

    # test claims without supporting checks
    with pytest.raises(Exception, match="Invalid certificate"):
        Certificate(status="failed", mode="construction", invariants=inv)

    # test passed with a failing mandatory check
    checks = {"fan.free": CheckResult(passed=False)}
    with pytest.raises(Exception, match="Invalid certificate"):
        Certificate(status="passed", mode="construction", checks=checks)

    # test failing advisory check is fine
    checks = {"units.independent": CheckResult(passed=False, mandatory=False)}
    cert = Certificate(status="passed", mode="construction", checks=checks)
    assert cert.schema_version == "1"

    # test unknown status
    with pytest.raises(Exception):
        Certificate(status="maybe", mode="construction")

    # test invariants reject extra keys
    with pytest.raises(Exception):
        Invariants(**inv.model_dump(), b3=0)


def test_assemble(salem4):
    F, E, units = salem4

    # test missing field data
    with pytest.raises(IncompletePipeline):
        assemble(PipelineReports(mode="construction"))

    # test missing subgroup
    with pytest.raises(IncompletePipeline):
        assemble(PipelineReports(mode="construction", F=F, E=E))

    # test W = <alpha> keeps h2 uncertified
    W = subgroup(units, [(1, 0)])
    reports = PipelineReports(
        mode="construction",
        F=F,
        E=E,
        W=W,
        checks={"fan.free": CheckResult(passed=True)},
        reciprocal=[True],
        invariant_pairs=invariant_pair_detector(W, E),
    )
    cert = assemble(reports)
    assert cert.status == "passed"
    assert cert.field.s == 2
    assert cert.field.embeddings[0][0] == pytest.approx(1.7220838057)
    assert cert.subgroup.labeling == [1, 2]
    assert cert.subgroup.assumption_c == "Exact"
    assert cert.subgroup.invariant_pairs == [[1, 2], [3, 4]]
    assert not cert.checks["subgroup.non_reciprocal"].passed
    assert not cert.checks["subgroup.invariant_pairs"].mandatory
    assert cert.invariants.h2_U0modW == UNCERTIFIED

    # test W = <(1 - alpha)^-2> certifies h2 and the algebraic dimension
    W = subgroup(units, [(0, 2)])
    reports.W = W
    reports.reciprocal = [False]
    reports.invariant_pairs = invariant_pair_detector(W, E)
    cert = assemble(reports)
    assert cert.subgroup.generators[0].word == [0, -2]
    assert cert.subgroup.labeling == [2, 1]
    assert cert.invariants.h2_U0modW == 0
    assert cert.invariants.algebraic_dimension == 0

    # test a failing mandatory check fails the certificate
    reports.checks["domain.tiling"] = CheckResult(passed=False)
    assert assemble(reports).status == "failed"


def test_ot_certificate(salem4):
    F, E, (alpha, one_minus) = salem4
    A = SubgroupW([alpha, one_minus**2], 2, 1)
    cert = ot_certificate(F, E, A)
    assert cert.mode == "OT"
    assert cert.status == "passed"
    assert cert.invariants.b2_OT == 1
    assert "log determinant -1.298" in cert.checks["ot.admissible"].detail
    assert cert.subgroup.invariant_pairs == []

    # test dependent generators
    with pytest.raises(NotAdmissible):
        ot_certificate(F, E, SubgroupW([alpha, alpha**2], 2, 1))

    # test wrong rank
    with pytest.raises(WrongRank):
        ot_certificate(F, E, SubgroupW([alpha], 2, 1))

    # test odd s needs no reciprocity hypothesis
    F, E = load_field(QUINTIC)
    A = SubgroupW([u**2 for u in quintic_units(F, E)], 3, 1)
    cert = ot_certificate(F, E, A)
    assert cert.invariants.b2_OT == 3


def test_json(salem4):
    F, E, (alpha, one_minus) = salem4
    cert = ot_certificate(F, E, SubgroupW([alpha, one_minus**2], 2, 1), warnings=["w"])
    text = to_json(cert)
    assert text.endswith("\n")
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data["warnings"] == ["w"]
    assert from_json(text) == cert

    # test failure certificates
    cert = failure_certificate(ConfigError("Invalid mode 'x'"), "OT")
    assert cert.status == "error"
    assert cert.mode == "OT"
    assert cert.error == "ConfigError: Invalid mode 'x'"
    assert cert.invariants is None
    assert from_json(to_json(cert)) == cert
