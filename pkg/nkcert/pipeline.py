"""Run configuration and the end-to-end certification pipeline."""
import concurrent.futures
import os
import tempfile
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np
from loguru import logger
from pydantic import (
    BaseModel,
    ConfigDict,
    ValidationError,
    field_validator,
    model_validator,
)

from nkcert.ambient import (
    AmbientFrame,
    build_frame,
    check_block_structure,
    check_htilde_injective,
    check_iota_conjugation,
    check_ord_spans_htilde,
    check_pi_h_injective,
    check_quotient_diagonal,
    check_s1_intersection,
    h_tuple_match,
    quartic_h_reference,
)
from nkcert.certificate import (
    Certificate,
    PipelineReports,
    assemble,
    failure_certificate,
    ot_certificate,
    to_json,
)
from nkcert.common import (
    MODES,
    CheckFailure,
    CheckResult,
    ConfigError,
    InputError,
    RankTooLarge,
    SubgroupNotFound,
    Tolerances,
    UnsupportedDimension,
    WrongRank,
    show_memory,
    unit_rows,
)
from nkcert.fan_engine import (
    QuotientFan,
    Ray,
    build_fan_s2,
    check_action,
    check_fan_property,
    cone_collapse_check,
    divisor_certificate,
    tag_vector,
    validate_sigma,
)
from nkcert.field_core import (
    EmbeddingTable,
    IntPoly,
    NumberField,
    embeddings,
    validate_field,
)
from nkcert.fundamental_domain import (
    build_domain,
    equivariance_check,
    norm_lower_bound,
    sample_omega,
    tiling_check,
    tiling_of_Bb,
)
from nkcert.plot import render_svg
from nkcert.unit_lattice import (
    AssumptionStatus,
    SubgroupW,
    UnitElt,
    check_assumption_c,
    check_independence,
    invariant_pair_detector,
    is_reciprocal,
    orient,
    search_w,
    sign_report,
    unit_word,
    validate_unit,
)


CHECK_WORKERS = 4
COLLAPSE_DELTA = 1.0
COLLAPSE_K_MAX = 8
EQUIVARIANCE_POINTS = 100
LATTICE_HEIGHT = 20

Rational = Union[int, str]


class RayConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vector: Optional[list[float]] = None
    tag: Optional[list[Rational]] = None

    @model_validator(mode="after")
    def vector_or_tag(self):
        if self.vector is None and self.tag is None:
            raise ValueError("Invalid ray: give a vector or a tag")
        return self


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    certificate: str = "certificate.json"
    plot: str = "domain.svg"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_poly: list[int]
    basis: Optional[list[list[Rational]]] = None
    units: list[list[int]] = []
    words: Optional[list[list[int]]] = None
    mode: str = "construction"
    b: int = 1
    window: int = 64
    search_window: int = 3
    assumption_window: int = 10
    samples: int = 1000
    seed: int = 42
    tolerances: Tolerances = Tolerances()
    sigma: Optional[list[list[RayConfig]]] = None
    divisor_rays: Optional[list[RayConfig]] = None
    output: OutputConfig = OutputConfig()

    @field_validator("min_poly")
    def valid_min_poly(cls, v):
        if len(v) < 3:
            raise ValueError(f"Invalid min_poly {v}: degree must be at least 2")
        return v

    @field_validator("mode")
    def valid_mode(cls, v):
        if v not in MODES:
            raise ValueError(f"Invalid mode {v}, expected one of {MODES}")
        return v

    @field_validator("b", "window", "search_window", "assumption_window")
    def non_negative(cls, v):
        if v < 0:
            raise ValueError(f"Invalid value {v}, must be non-negative")
        return v

    @field_validator("samples")
    def valid_samples(cls, v):
        if v <= 0:
            raise ValueError(f"Invalid samples '{v}', must be positive.")
        return v

    @model_validator(mode="after")
    def consistent_shapes(self):
        n = len(self.min_poly) - 1
        for u in self.units:
            if len(u) != n:
                raise ValueError(f"Invalid unit {u}: expected {n} coordinates")
        if self.basis is not None and (
            len(self.basis) != n or any(len(col) != n for col in self.basis)
        ):
            raise ValueError(f"Invalid basis: expected {n} columns of length {n}")
        if self.words is not None and not self.units:
            raise ValueError("Invalid words: no units to build them from")
        for w in self.words or []:
            if len(w) != len(self.units):
                raise ValueError(
                    f"Invalid word {w}: expected {len(self.units)} exponents"
                )
        rays = [r for cone in self.sigma or [] for r in cone]
        rays += self.divisor_rays or []
        for r in rays:
            if r.tag is not None and len(r.tag) != n:
                raise ValueError(f"Invalid ray tag {r.tag}: expected {n} coordinates")
        if self.mode == "LVMB" and self.b != 0:
            raise ValueError(f"Invalid b={self.b}: LVMB mode has b = 0")
        return self


def load_config(path: str, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Read a TOML config; non-None overrides replace top-level keys."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "tol":
            data.setdefault("tolerances", {})["check"] = value
        elif key == "out":
            data.setdefault("output", {})["certificate"] = value
        elif key == "plot_out":
            data.setdefault("output", {})["plot"] = value
        else:
            data[key] = value
    return parse_config(data)


def parse_config(data: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def write_atomic(path: str, text: str):
    target = os.path.abspath(path)
    directory = os.path.dirname(target)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nkcert-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info(f"Wrote '{path}'")


@dataclass
class Stage:
    """Field, units and subgroup as set up from a config."""

    F: NumberField
    E: EmbeddingTable
    units: list[UnitElt]
    W: Optional[SubgroupW] = None
    checks: dict[str, CheckResult] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def setup(config: RunConfig) -> Stage:
    tol = config.tolerances
    F = validate_field(IntPoly.from_coeffs(config.min_poly), config.basis)
    E = embeddings(F, tol.root)
    show_memory("embeddings")

    stage = Stage(F, E, [])
    stage.checks["field.signature"] = CheckResult(
        passed=True, detail=f"(s, t) = ({F.s}, {F.t}) by Sturm count and root split"
    )
    witness = F.irreducibility_witness
    stage.checks["field.irreducibility_witness"] = CheckResult(
        passed=witness is not None,
        mandatory=False,
        witness=None if witness is None else str(witness),
        detail="prime p with P irreducible mod p",
    )
    if witness is None:
        stage.warnings.append("irreducibility_uncertified")

    stage.units = [
        validate_unit(F.element(u), E, f"u{i + 1}") for i, u in enumerate(config.units)
    ]
    if stage.units:
        rank = check_independence(stage.units, tol.check)
        stage.checks["units.independent"] = CheckResult(
            passed=rank == len(stage.units),
            mandatory=False,
            tolerance=tol.check,
            detail=f"log rank {rank} of {len(stage.units)} units",
        )

    if config.mode != "LVMB":
        stage.W = choose_subgroup(config, stage)
    return stage


def choose_subgroup(config: RunConfig, stage: Stage) -> SubgroupW:
    s, t = stage.E.s, stage.E.t
    if config.mode == "construction":
        if config.b >= s:
            raise RankTooLarge(
                f"Invalid rank b={config.b}: construction mode requires b < s={s}"
            )
        if config.b < 1:
            raise WrongRank("Invalid rank b=0 in construction mode, use mode LVMB")

    words = config.words
    if words is None and config.mode == "OT":
        r = len(stage.units)
        words = [[int(i == j) for j in range(r)] for i in range(r)]

    if words is None:
        W = search_w(
            stage.F,
            stage.E,
            stage.units,
            config.b,
            config.search_window,
            config.assumption_window,
        )
        if W is None:
            raise SubgroupNotFound(
                f"No rank {config.b} subgroup in exponent window {config.search_window}"
            )
    else:
        W = SubgroupW(
            [unit_word(stage.units, w) for w in words],
            s,
            t,
            words=[tuple(w) for w in words],
        )
        if config.mode == "construction" and W.b != config.b:
            raise WrongRank(f"Invalid words: {W.b} generators but b={config.b}")

    rank = check_independence(W.generators, config.tolerances.check)
    stage.checks["subgroup.rank"] = CheckResult(
        passed=rank == W.b,
        tolerance=config.tolerances.check,
        detail=f"log rank {rank} for {W.b} generators",
    )
    signs = [sign_report(g) for g in W.generators]
    negative = {r.name: list(r.negative_places) for r in signs if r.squared}
    stage.checks["subgroup.totally_positive"] = CheckResult(
        passed=not negative,
        witness=str(negative) if negative else None,
        detail="negative real places per generator",
    )
    return W


def _guarded(fn: Callable[[], CheckResult]) -> CheckResult:
    try:
        return fn()
    except CheckFailure as e:
        return CheckResult(passed=False, witness=f"{type(e).__name__}: {e}")


def ambient_checks(
    frame: AmbientFrame, W: Optional[SubgroupW], config: RunConfig
) -> dict[str, CheckResult]:
    tol = config.tolerances
    seed, n = config.seed, min(config.samples, 1000)

    def pi_h():
        r = check_pi_h_injective(frame, n, LATTICE_HEIGHT, seed, tol.separation)
        return CheckResult(
            passed=r.passed,
            tolerance=tol.separation,
            detail=f"min separation {r.min_separation:.6e} over {r.samples} points",
        )

    def htilde():
        r = check_htilde_injective(frame, n, LATTICE_HEIGHT, seed, tol.separation)
        return CheckResult(
            passed=r.passed,
            tolerance=tol.separation,
            detail=f"min separation {r.min_separation:.6e} over {r.samples} points",
        )

    def s1():
        dim = check_s1_intersection(frame, tol.check)
        return CheckResult(
            passed=dim == 0, tolerance=tol.check, detail=f"nullspace dim {dim}"
        )

    def ord_span():
        rank, residual = check_ord_spans_htilde(frame, tol.check)
        return CheckResult(
            passed=rank == 2 * frame.t and residual < tol.check,
            tolerance=tol.check,
            detail=f"rank {rank}, residual {residual:.3e}",
        )

    jobs: dict[str, Callable[[], CheckResult]] = {
        "ambient.pi_h_injective": pi_h,
        "ambient.htilde_injective": htilde,
        "ambient.s1_intersection": s1,
        "ambient.ord_spans_htilde": ord_span,
    }

    if W is not None and W.generators:

        def deviation(dev: float) -> CheckResult:
            return CheckResult(
                passed=dev < tol.check, tolerance=tol.check, detail=f"{dev:.3e}"
            )

        def block():
            return deviation(check_block_structure(frame, W))

        def diagonal():
            return deviation(check_quotient_diagonal(frame, W))

        def conjugation():
            dev = check_iota_conjugation(frame, W, tol.check)
            return CheckResult(passed=True, tolerance=tol.check, detail=f"{dev:.3e}")

        jobs.update(
            {
                "ambient.block_structure": block,
                "ambient.quotient_diagonal": diagonal,
                "ambient.iota_conjugation": conjugation,
            }
        )

    with concurrent.futures.ThreadPoolExecutor(CHECK_WORKERS) as executor:
        futures = {name: executor.submit(_guarded, fn) for name, fn in jobs.items()}
    checks = {name: futures[name].result() for name in sorted(futures)}

    checks["ambient.realness"] = CheckResult(
        passed=frame.max_imag < tol.check,
        tolerance=tol.check,
        detail=f"max |Im P_BK,B'| = {frame.max_imag:.3e}",
    )
    checks["ambient.condition"] = CheckResult(
        passed=frame.condition <= tol.condition / 1e4,
        mandatory=False,
        tolerance=tol.condition,
        detail=f"cond(B_K) = {frame.condition:.6e}",
    )
    return checks


def h_reference_check(frame: AmbientFrame, E: EmbeddingTable) -> CheckResult:
    match = h_tuple_match(frame, quartic_h_reference(E))
    return CheckResult(
        passed=match["collinear"],
        mandatory=False,
        detail=(
            f"residual {match['reference_residual']:.3e}, "
            f"scale {match['scale']:.6f}"
        ),
    )


def config_ray(r: RayConfig, F: NumberField, E: EmbeddingTable, W: SubgroupW) -> Ray:
    tag = None if r.tag is None else F.element(r.tag)
    if r.vector is not None:
        return Ray(np.array(r.vector, dtype=float), tag)
    assert tag is not None
    return Ray(tag_vector(tag, E, W.labeling), tag)


def build_fan(
    config: RunConfig, stage: Stage, W: SubgroupW, frame: AmbientFrame
) -> QuotientFan:
    if config.sigma is not None:
        cones = [
            [
                Ray(
                    np.array(r.vector or [], dtype=float),
                    None if r.tag is None else stage.F.element(r.tag),
                )
                for r in cone
            ]
            for cone in config.sigma
        ]
        fan = validate_sigma(cones, W, stage.E, frame)
    elif W.s == 2:
        fan = build_fan_s2(W)
    else:
        raise ConfigError(f"Invalid config: sigma is required for s={W.s}")
    fan.window = config.window
    return fan


def fan_checks(fan: QuotientFan, config: RunConfig) -> dict[str, CheckResult]:
    action = check_action(fan)
    witness = "; ".join(action.witnesses) or None
    checks = {
        "fan.invariant": CheckResult(passed=action.invariant, witness=witness),
        "fan.free": CheckResult(passed=action.free, witness=witness),
        "fan.properly_discontinuous": CheckResult(
            passed=action.properly_discontinuous,
            witness=witness,
            detail=f"window {fan.window}",
        ),
    }
    sampled = check_fan_property(fan, config.samples, config.seed)
    checks["fan.support"] = CheckResult(
        passed=sampled["passed"],
        tolerance=1e-9,
        detail=(
            f"{sampled['covered']}/{sampled['samples']} covered, "
            f"{sampled['multiply_covered_interior']} in two open cones"
        ),
    )

    W = fan.W
    for i, g in enumerate(W.generators):
        name = f"fan.cone_collapse.{g.name}"
        try:
            r = cone_collapse_check(
                COLLAPSE_DELTA, g, COLLAPSE_K_MAX, W.b, W.labeling, seed=config.seed
            )
            checks[name] = CheckResult(
                passed=r.contained,
                mandatory=W.b == 1,
                detail=f"fitted N {r.fitted_N:.6f}, min margin {r.min_margin:.6f}",
            )
        except CheckFailure as e:
            checks[name] = CheckResult(passed=False, mandatory=W.b == 1, witness=str(e))
    show_memory("fan checks")
    return checks


def domain_checks(fan: QuotientFan, config: RunConfig) -> dict[str, CheckResult]:
    tol = config.tolerances
    spec = build_domain(fan.W, fan)

    tiling = tiling_check(spec, config.samples, config.seed, tol.closure)
    first_gap = str(tiling.gaps[0]) if tiling.gaps else None
    checks = {
        "domain.tiling": CheckResult(
            passed=tiling.passed,
            tolerance=tol.closure,
            witness=None if first_gap is None else f"TilingGap at sample {first_gap}",
            detail=(
                f"{tiling.tiled}/{tiling.samples} tiled, C = {tiling.C:.9f}, "
                f"R_fit = {tiling.R_fit:.6f}"
            ),
        )
    }

    bound = norm_lower_bound(spec, config.samples, config.seed)
    checks["domain.norm_lower_bound"] = CheckResult(
        passed=bound >= spec.C - tol.check,
        tolerance=tol.check,
        detail=f"min |eta(x)| = {bound:.9f} against C = {spec.C:.9f}",
    )

    n = min(config.samples, EQUIVARIANCE_POINTS)
    points = sample_omega(spec, n, config.seed + 1)
    bad = equivariance_check(spec, points, tol.closure)
    checks["domain.equivariance"] = CheckResult(
        passed=bad == 0, tolerance=tol.closure, detail=f"{bad} violations"
    )

    covered = tiling_of_Bb(spec, config.samples, config.seed)
    checks["domain.tiling_of_Bb"] = CheckResult(passed=covered)
    return checks


def default_divisor_rays(fan: QuotientFan) -> list[Ray]:
    rays: list[Ray] = []
    for c in fan.sigma:
        for r in c.rays:
            u = unit_rows(r.vector[None])[0]
            seen = [unit_rows(o.vector[None])[0] for o in rays]
            if not any(np.abs(v - u).max() < 1e-9 for v in seen):
                rays.append(r)
    return rays


def divisor_checks(
    fan: QuotientFan,
    rays: list[Ray],
    frame: AmbientFrame,
    stage: Stage,
    config: RunConfig,
):
    reports, checks = [], {}
    for i, ray in enumerate(rays):
        name = f"divisor.{i + 1}"
        try:
            report = divisor_certificate(
                fan, ray, frame, stage.E, config.samples, config.seed
            )
        except CheckFailure as e:
            checks[f"{name}.complete"] = CheckResult(passed=False, witness=str(e))
            continue
        reports.append(report)
        checks[f"{name}.complete"] = CheckResult(
            passed=report.complete, detail=f"{report.kind}, {report.quotient_rays} rays"
        )
        if report.lift_consistent is not None:
            checks[f"{name}.lift_consistent"] = CheckResult(
                passed=report.lift_consistent
            )
        if report.elliptic_residual is not None:
            checks[f"{name}.elliptic_identity"] = CheckResult(
                passed=report.elliptic_residual < config.tolerances.check,
                mandatory=False,
                tolerance=config.tolerances.check,
                detail=f"residual {report.elliptic_residual:.3e}",
            )
    return reports, checks


def verify(config: RunConfig) -> Certificate:
    stage = setup(config)
    F, E = stage.F, stage.E
    tol = config.tolerances
    frame = build_frame(F, E, tol.condition)
    if frame.condition > tol.condition / 1e4:
        stage.warnings.append(f"ill-conditioned B_K: {frame.condition:.3e}")

    if config.mode == "LVMB":
        reports = PipelineReports(
            mode="LVMB", F=F, E=E, checks=dict(stage.checks), warnings=stage.warnings
        )
        reports.checks.update(ambient_checks(frame, None, config))
        return assemble(reports)

    W = stage.W
    assert W is not None
    if config.mode == "OT":
        checks = dict(stage.checks)
        checks.update(ambient_checks(frame, W, config))
        return ot_certificate(F, E, W, checks, stage.warnings)

    reports = PipelineReports(
        mode="construction",
        F=F,
        E=E,
        checks=dict(stage.checks),
        warnings=stage.warnings,
    )
    assumption = check_assumption_c(W, config.assumption_window)
    labels = [i + 1 for i in assumption.labeling]
    reports.checks["subgroup.assumption_c"] = CheckResult(
        passed=assumption.status != AssumptionStatus.REFUTED,
        witness=None if assumption.witness is None else str(assumption.witness),
        detail=f"{assumption.status.value}, labeling {labels}",
    )
    if assumption.status == AssumptionStatus.WINDOW_VERIFIED:
        reports.warnings.append(
            f"Assumption C verified on exponent window {assumption.window} only"
        )

    reports.reciprocal = [is_reciprocal(g) for g in W.generators]
    reports.invariant_pairs = invariant_pair_detector(W, E, tol.check)
    reports.checks.update(ambient_checks(frame, W, config))
    if (E.s, E.t) == (2, 1) and F.is_power_basis:
        reports.checks["ambient.h_reference_tuple"] = h_reference_check(frame, E)
    if assumption.status == AssumptionStatus.REFUTED:
        reports.W = W
        return assemble(reports)

    W = orient(W)
    reports.W = W
    fan = build_fan(config, stage, W, frame)
    reports.checks.update(fan_checks(fan, config))
    reports.checks.update(domain_checks(fan, config))

    if config.divisor_rays is not None:
        rays = [config_ray(r, F, E, W) for r in config.divisor_rays]
    else:
        rays = default_divisor_rays(fan)
    divisors, checks = divisor_checks(fan, rays, frame, stage, config)
    reports.divisors = divisors
    reports.checks.update(checks)
    return assemble(reports)


def run(config: RunConfig) -> tuple[Certificate, int]:
    """Run the pipeline and always write a certificate; returns it and the exit code."""
    try:
        cert = verify(config)
        code = 0 if cert.status == "passed" else 1
    except InputError as e:
        logger.error(f"{type(e).__name__}: {e}")
        cert, code = failure_certificate(e, config.mode), 2
    except CheckFailure as e:
        logger.error(f"{type(e).__name__}: {e}")
        cert, code = failure_certificate(e, config.mode), 1
    except Exception as e:
        logger.exception(f"Pipeline aborted: {type(e).__name__}: {e}")
        cert, code = failure_certificate(e, config.mode), 1

    write_atomic(config.output.certificate, to_json(cert))
    logger.info(f"Certificate status {cert.status}, exit code {code}")
    return cert, code


def plot(config: RunConfig) -> str:
    """Write the domain SVG for an s = 2 construction config; returns its path."""
    stage = setup(config)
    if stage.E.s != 2 or stage.W is None:
        raise UnsupportedDimension(
            f"Plotting needs s = 2 and b = 1, got s = {stage.E.s}, mode {config.mode}"
        )
    W = stage.W
    check_assumption_c(W, config.assumption_window)
    W = orient(W)
    svg = render_svg(W, config.window)
    write_atomic(config.output.plot, svg)
    return config.output.plot
