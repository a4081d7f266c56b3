import json
from dataclasses import dataclass, field as dc_field
from math import comb
from typing import Literal, Optional, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator

from nkcert.common import (
    SCHEMA_VERSION,
    CheckResult,
    IncompletePipeline,
    NotAdmissible,
    WrongRank,
)
from nkcert.fan_engine import DivisorReport
from nkcert.field_core import EmbeddingTable, NumberField
from nkcert.unit_lattice import (
    SubgroupW,
    check_ot_admissible,
    invariant_pair_detector,
    is_reciprocal,
    ot_determinant,
)


NOT_APPLICABLE = "not-applicable"
UNCERTIFIED = "uncertified"
UNKNOWN = "unknown"
BY_THEOREM = "by-theorem"

Count = Union[int, str]


class FieldSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_poly: list[Union[int, str]]
    n: int
    s: int
    t: int
    basis_provenance: str
    basis_maximality: str = "not certified"
    irreducibility_witness: Optional[int] = None
    embeddings: list[list[float]]


class GeneratorSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    coords: list[Union[int, str]]
    reciprocal: bool
    word: Optional[list[int]] = None


class SubgroupSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    b: int
    generators: list[GeneratorSummary]
    labeling: list[int]
    assumption_c: str
    assumption_window: Optional[int] = None
    invariant_pairs: list[list[int]]


class Invariants(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim_Y: int
    b1: Count
    kodaira: str
    kodaira_basis: str
    h1_lower_bound: Count
    h2_U0modW: Count
    algebraic_dimension: Count
    non_kahler: str
    b2_OT: Count = NOT_APPLICABLE


class DivisorSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ray: list[float]
    tag: Optional[list[Union[int, str]]] = None
    star_cones: int
    quotient_rays: int
    complete: bool
    kind: str
    dimension: int
    lift_consistent: Optional[bool] = None
    elliptic_residual: Optional[float] = None


class Certificate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal["1"] = SCHEMA_VERSION
    status: Literal["passed", "failed", "error"]
    mode: str
    field: Optional[FieldSummary] = None
    subgroup: Optional[SubgroupSummary] = None
    checks: dict[str, CheckResult] = {}
    invariants: Optional[Invariants] = None
    divisors: list[DivisorSummary] = []
    warnings: list[str] = []
    error: Optional[str] = None

    @model_validator(mode="after")
    def gated_claims(self):
        inv = self.invariants
        if inv is not None:
            hypotheses = ("subgroup.invariant_pairs", "subgroup.non_reciprocal")
            certified = all(
                k in self.checks and self.checks[k].passed for k in hypotheses
            )
            if isinstance(inv.h2_U0modW, int) and not certified:
                raise ValueError(
                    "Invalid certificate: h2 claimed without its hypotheses"
                )
            if isinstance(inv.algebraic_dimension, int) and not certified:
                raise ValueError(
                    "Invalid certificate: algebraic dimension claimed without "
                    "its hypotheses"
                )
            if isinstance(inv.b2_OT, int) and self.field is not None:
                reciprocal_free = self.checks.get("subgroup.non_reciprocal")
                certified_b2 = reciprocal_free is not None and reciprocal_free.passed
                if self.field.s % 2 == 0 and not certified_b2:
                    raise ValueError(
                        "Invalid certificate: b2 claimed for even s without hypothesis"
                    )
        if self.status == "passed":
            failed = [k for k, c in self.checks.items() if c.mandatory and not c.passed]
            if failed:
                raise ValueError(
                    f"Invalid certificate: passed with failing checks {failed}"
                )
        return self


@dataclass
class PipelineReports:
    """Everything assemble needs, filled in by the pipeline as stages finish."""

    mode: str
    F: Optional[NumberField] = None
    E: Optional[EmbeddingTable] = None
    W: Optional[SubgroupW] = None
    checks: dict[str, CheckResult] = dc_field(default_factory=dict)
    reciprocal: list[bool] = dc_field(default_factory=list)
    invariant_pairs: Optional[set[tuple[int, int]]] = None
    divisors: list[DivisorReport] = dc_field(default_factory=list)
    warnings: list[str] = dc_field(default_factory=list)


def summarize_field(F: NumberField, E: EmbeddingTable) -> FieldSummary:
    return FieldSummary(
        min_poly=F.min_poly.to_list(),
        n=F.n,
        s=F.s,
        t=F.t,
        basis_provenance=F.basis_provenance,
        irreducibility_witness=F.irreducibility_witness,
        embeddings=[[round(z.real, 12), round(z.imag, 12)] for z in E.values],
    )


def summarize_subgroup(
    W: SubgroupW, reciprocal: list[bool], pairs: set[tuple[int, int]]
) -> SubgroupSummary:
    status = W.assumption_c.status.value if W.assumption_c else UNCERTIFIED
    window = W.assumption_c.window if W.assumption_c and W.b >= 2 else None
    return SubgroupSummary(
        b=W.b,
        generators=[
            GeneratorSummary(
                name=g.name,
                coords=g.elt.to_list(),
                reciprocal=r,
                word=list(W.words[i]) if W.words else None,
            )
            for i, (g, r) in enumerate(zip(W.generators, reciprocal))
        ],
        labeling=[i + 1 for i in W.labeling],
        assumption_c=status,
        assumption_window=window,
        invariant_pairs=sorted([list(p) for p in pairs]),
    )


def gated_invariants(
    mode: str, s: int, t: int, b: int, non_reciprocal: bool, pairs_empty: bool
) -> Invariants:
    certified = non_reciprocal and pairs_empty
    if mode == "LVMB":
        return Invariants(
            dim_Y=s + t,
            b1=0,
            kodaira=NOT_APPLICABLE,
            kodaira_basis=NOT_APPLICABLE,
            h1_lower_bound=0,
            h2_U0modW=UNCERTIFIED,
            algebraic_dimension=UNKNOWN,
            non_kahler=NOT_APPLICABLE,
        )
    b2_ot: Count = NOT_APPLICABLE
    if mode == "OT":
        b2_ot = comb(s, 2) if s % 2 == 1 or non_reciprocal else UNCERTIFIED
    return Invariants(
        dim_Y=s + t,
        b1=b,
        kodaira="-infinity",
        kodaira_basis=BY_THEOREM,
        h1_lower_bound=b,
        h2_U0modW=comb(b, 2) if certified else UNCERTIFIED,
        algebraic_dimension=0 if certified else UNKNOWN,
        non_kahler=BY_THEOREM,
        b2_OT=b2_ot,
    )


def _hypothesis_checks(reciprocal: list[bool], pairs: set) -> dict[str, CheckResult]:
    return {
        "subgroup.non_reciprocal": CheckResult(
            passed=not all(reciprocal) if reciprocal else False,
            mandatory=False,
            detail=f"reciprocal generators: {reciprocal}",
        ),
        "subgroup.invariant_pairs": CheckResult(
            passed=not pairs,
            mandatory=False,
            witness=str(sorted(pairs)) if pairs else None,
            detail="pairs (i, j) with sigma_i(g) sigma_j(g) = 1 for all generators",
        ),
    }


def _status(checks: dict[str, CheckResult]) -> str:
    ok = all(c.passed for c in checks.values() if c.mandatory)
    return "passed" if ok else "failed"


def assemble(reports: PipelineReports) -> Certificate:
    """Gate every invariant claim on the detectors that support it."""
    if reports.F is None or reports.E is None:
        raise IncompletePipeline("Cannot assemble a certificate without field data")
    missing_w = reports.W is None or reports.invariant_pairs is None
    if reports.mode != "LVMB" and missing_w:
        raise IncompletePipeline(
            f"Cannot assemble a {reports.mode} certificate without W"
        )

    F, E = reports.F, reports.E
    checks = dict(reports.checks)
    subgroup = None
    pairs: set = set()
    if reports.W is not None and reports.invariant_pairs is not None:
        pairs = reports.invariant_pairs
        checks.update(_hypothesis_checks(reports.reciprocal, pairs))
        subgroup = summarize_subgroup(reports.W, reports.reciprocal, pairs)

    b = reports.W.b if reports.W is not None else 0
    non_reciprocal = bool(reports.reciprocal) and not all(reports.reciprocal)
    invariants = gated_invariants(reports.mode, F.s, F.t, b, non_reciprocal, not pairs)

    cert = Certificate(
        status=_status(checks),
        mode=reports.mode,
        field=summarize_field(F, E),
        subgroup=subgroup,
        checks=checks,
        invariants=invariants,
        divisors=[DivisorSummary(**vars(d)) for d in reports.divisors],
        warnings=list(reports.warnings),
    )
    logger.info(f"Certificate assembled: mode={cert.mode}, status={cert.status}")
    return cert


def ot_certificate(
    F: NumberField,
    E: EmbeddingTable,
    A: SubgroupW,
    checks: Optional[dict[str, CheckResult]] = None,
    warnings: Optional[list[str]] = None,
) -> Certificate:
    """Certificate for the OT manifold of an admissible A of rank s."""
    if A.b != F.s:
        raise WrongRank(f"Invalid OT subgroup: rank {A.b} != s={F.s}")
    if not check_ot_admissible(A, E):
        names = [g.name for g in A.generators]
        raise NotAdmissible(f"Subgroup {names} is not admissible")

    det = ot_determinant(A)
    reports = PipelineReports(
        mode="OT",
        F=F,
        E=E,
        W=A,
        checks=dict(checks or {}),
        reciprocal=[is_reciprocal(g) for g in A.generators],
        invariant_pairs=invariant_pair_detector(A, E),
        warnings=list(warnings or []),
    )
    reports.checks["ot.admissible"] = CheckResult(
        passed=True, tolerance=1e-9, detail=f"log determinant {det:.12f}"
    )
    return assemble(reports)


def failure_certificate(exc: Exception, mode: str = "construction") -> Certificate:
    return Certificate(status="error", mode=mode, error=f"{type(exc).__name__}: {exc}")


def to_json(cert: Certificate) -> str:
    data = cert.model_dump(mode="json")
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def from_json(text: str) -> Certificate:
    return Certificate.model_validate_json(text)
