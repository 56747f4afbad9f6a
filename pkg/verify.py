from enum import Enum
from typing import Callable

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

import solver
from core import (
    InvalidArgumentError,
    PerturbationError,
    ScalarField,
    Problem,
    ToleranceConfig,
    WeightFunction,
    random_smooth_field,
    sample_function,
)
from quadrature import QuadratureRule, apply_volterra_operator, operator_allowance
from stability import Certificate

MAX_RESCALINGS = 20


class PerturbationKind(str, Enum):
    CONSTANT_DEFECT = "constant-defect"
    SCALED_SHAPE = "scaled-shape"
    RANDOM_SMOOTH = "random-smooth"


class VerifyReport(BaseModel):
    """Empirical check of a certificate on one approximate solution y."""

    defect_admissible: bool
    max_defect_ratio: float
    bound_satisfied: bool
    tightness: float
    sharp_tightness: float
    max_deviation: float
    allowance: float
    converged: bool
    iterations: int


class Admissibility(BaseModel):
    model_config = ConfigDict(frozen=True)

    admissible: bool
    max_defect_ratio: float
    allowance: float


def defect(problem: Problem, y: ScalarField, rule: QuadratureRule | None = None) -> ScalarField:
    """|y(t) - (Θy)(t)| at every node."""
    return y.like(np.abs(y.values - apply_volterra_operator(problem, y, rule).values))


def bielecki_distance(
    g1: ScalarField,
    g2: ScalarField,
    eta: float,
    weight: WeightFunction,
    mono_tol: float = 1e-12,
) -> float:
    """Grid form of inf{C : |g1 - g2|·e^{-η(t-t0)} <= C·φ(t)}; the max over nodes attains the inf."""
    g2.require_grid(g1.grid)
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    grid = g1.grid
    phi = weight.sample(grid, mono_tol).values
    scaled = np.abs(g1.values - g2.values) * np.exp(-eta * (grid.nodes - grid.t0)) / phi
    return float(np.max(scaled))


def check_admissible(
    problem: Problem,
    y: ScalarField,
    weight: WeightFunction,
    tol: ToleranceConfig | None = None,
) -> Admissibility:
    """defect <= φ + verify_slack + quadrature allowance at every node."""
    tol = tol or ToleranceConfig()
    residual = defect(problem, y, QuadratureRule(kind=tol.quad_order)).values
    phi = weight.sample(problem.grid, tol.mono_tol).values
    allowance = operator_allowance(problem, y)
    return Admissibility(
        admissible=bool(np.all(residual <= phi + tol.verify_slack + allowance)),
        max_defect_ratio=float(np.max(residual / phi)),
        allowance=allowance,
    )


def gaussian_shape(t0: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: np.exp((t - t0) ** 2 / 2.0)


def make_perturbation(
    problem: Problem,
    y0: ScalarField,
    kind: PerturbationKind,
    magnitude: float,
    seed: int = 0,
    target: WeightFunction | None = None,
    tol: ToleranceConfig | None = None,
    shape: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ScalarField:
    """Build an approximate solution near y0 whose defect stays below `target`.

    The magnitude is halved until the field is admissible for `target`
    (default: the constant weight `magnitude`).
    """
    if not magnitude > 0:
        raise InvalidArgumentError(f"Perturbation magnitude must be positive, got {magnitude}")
    y0.require_grid(problem.grid)
    tol = tol or ToleranceConfig()
    target = target or WeightFunction.constant(magnitude)
    grid = problem.grid
    rule = QuadratureRule(kind=tol.quad_order)

    if kind is PerturbationKind.CONSTANT_DEFECT:
        base_defect = y0.values - apply_volterra_operator(problem, y0, rule).values

        def build(scale: float) -> ScalarField:
            # y = (y0 - Θy0) + scale + Θy has defect exactly |y0 - Θy0 + scale|
            forcing = y0.like(base_defect + scale)
            result = solver.picard_solve(
                problem, y0, 2.0 * problem.lipschitz, WeightFunction.constant(1.0), tol, forcing=forcing
            )
            return result.solution

    else:
        if kind is PerturbationKind.SCALED_SHAPE:
            profile = sample_function(shape or gaussian_shape(grid.t0), grid).values
        else:
            profile = random_smooth_field(grid, np.random.default_rng(seed)).values

        def build(scale: float) -> ScalarField:
            return y0.like(y0.values + scale * profile)

    scale = magnitude
    for attempt in range(MAX_RESCALINGS + 1):
        candidate = build(scale)
        check = check_admissible(problem, candidate, target, tol)
        if check.admissible:
            logger.debug(
                f"{kind.value} perturbation admissible at scale {scale:.3e} "
                f"after {attempt} rescalings (defect ratio {check.max_defect_ratio:.4f})"
            )
            return candidate
        logger.debug(f"{kind.value} perturbation at scale {scale:.3e} has defect ratio {check.max_defect_ratio:.4f}")
        scale *= 0.5
    raise PerturbationError(
        f"Could not bring the {kind.value} perturbation under {target.name} in {MAX_RESCALINGS} rescalings"
    )


def verify_stability(
    problem: Problem,
    y: ScalarField,
    weight: WeightFunction,
    cert: Certificate,
    tol: ToleranceConfig | None = None,
) -> VerifyReport:
    """Solve from y, then compare |y - y0| with the certificate's bound at every node."""
    tol = tol or ToleranceConfig()
    if cert.lipschitz < problem.lipschitz:
        raise InvalidArgumentError(
            f"Certificate uses L={cert.lipschitz}, below the problem's L={problem.lipschitz}"
        )
    if not np.isclose(cert.r, problem.grid.r):
        raise InvalidArgumentError(f"Certificate built for r={cert.r}, problem interval has r={problem.grid.r}")
    if cert.bound_field is None or cert.sharp_bound_field is None:
        raise InvalidArgumentError("Certificate carries no bound field; build it on the problem grid")
    cert.bound_field.require_grid(problem.grid)
    y.require_grid(problem.grid)
    contraction = solver.discrete_contraction_factor(problem.lipschitz, cert.eta, problem.grid)
    if not contraction < 1.0:
        raise InvalidArgumentError(
            f"Trapezoid operator does not contract at eta={cert.eta:.9g}, h={problem.grid.h:.6g} "
            f"(factor {contraction:.6g}); refine the grid or raise eta"
        )

    check = check_admissible(problem, y, weight, tol)
    result = solver.picard_solve(problem, y, cert.eta, weight, tol)
    deviation = np.abs(y.values - result.solution.values)
    bound = cert.bound_field.values
    grid = problem.grid
    # Picard truncation, in Bielecki units converted back to nodal values
    truncation = result.error_bound * weight.sample(grid, tol.mono_tol).values * np.exp(
        cert.eta * (grid.nodes - grid.t0)
    )
    slack = tol.verify_slack + check.allowance + truncation
    report = VerifyReport(
        defect_admissible=check.admissible,
        max_defect_ratio=check.max_defect_ratio,
        bound_satisfied=bool(np.all(deviation <= bound + slack)),
        tightness=float(np.max(deviation / bound)),
        sharp_tightness=float(np.max(deviation / cert.sharp_bound_field.values)),
        max_deviation=float(np.max(deviation)),
        allowance=check.allowance,
        converged=result.converged,
        iterations=result.iterations,
    )
    if report.defect_admissible and not report.bound_satisfied:
        logger.error(f"Bound violated on an admissible perturbation: tightness {report.tightness:.6f}")
    else:
        logger.info(
            f"Verification: admissible={report.defect_admissible}, bound satisfied={report.bound_satisfied}, "
            f"tightness {report.tightness:.4g}"
        )
    return report
