import math
from enum import Enum

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize_scalar

from core import Grid, InvalidArgumentError, KernelForm, KernelTag, NumericDomainError, ScalarField, WeightFunction
from quadrature import QuadratureRule

_K_TOLERANCE = 1e-9


class CertificateForm(str, Enum):
    HU = "HU"
    HUR = "HUR"


class Certificate(BaseModel):
    """Stability certificate |y - y0| <= factor·φ(t) with factor = e^{ηr}/(1 - L/η)."""

    model_config = ConfigDict(frozen=True)

    eta: float
    lipschitz: float
    r: float
    factor: float
    form: CertificateForm
    weight_name: str
    epsilon: float | None = None
    lipschitz_source: str = "declared"
    bound_field: ScalarField | None = None
    sharp_bound_field: ScalarField | None = None
    """φ(t)·e^{η(t-t0)}/(1 - L/η); never above bound_field."""

    @property
    def bound_constant(self) -> float | None:
        return self.factor * self.epsilon if self.epsilon is not None else None


class ClassicReport(BaseModel):
    """Applicability of the classical conditions Lr < 1, ∫φ <= Kφ and KL < 1."""

    lr_product: float
    hu_applicable: bool
    k_min: float | None = None
    kl_product: float | None = None
    hur_applicable: bool | None = None
    k_declared: float | None = None
    k_declared_admissible: bool | None = None
    k_declared_product: float | None = None
    notes: list[str] = []


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise InvalidArgumentError(f"{name} must be positive and finite, got {value}")


def bound_factor(lipschitz: float, r: float, eta: float) -> float:
    """e^{ηr}/(1 - L/η)."""
    _require_positive(L=lipschitz, r=r)
    if not eta > lipschitz:
        raise InvalidArgumentError(f"Certificate requires eta > L, got eta={eta}, L={lipschitz}")
    try:
        growth = math.exp(eta * r)
    except OverflowError as e:
        raise NumericDomainError(f"e^(eta*r) overflows a double at eta*r={eta * r:.6g}") from e
    return growth / (1.0 - lipschitz / eta)


def optimal_eta(lipschitz: float, r: float) -> float:
    """Minimizer of e^{ηr}/(1 - L/η) over η > L: the root of η(η - L) = L/r."""
    _require_positive(L=lipschitz, r=r)
    return (lipschitz + math.sqrt(lipschitz * lipschitz + 4.0 * lipschitz / r)) / 2.0


def golden_section_eta(lipschitz: float, r: float) -> float:
    """Bracketed golden-section search for the factor's minimizer.

    Searches |d/dη log factor| = |r - L/(η(η - L))|, unimodal on (L, ∞) with the same
    argmin as the factor but a sharp minimum, so the search resolves it to rounding level.
    """
    _require_positive(L=lipschitz, r=r)

    def slope(eta: float) -> float:
        return abs(r - lipschitz / (eta * (eta - lipschitz)))

    lo = lipschitz * (1.0 + 1e-12)
    hi = lipschitz + 2.0 / r
    candidates = np.linspace(lo, hi, 66)[1:-1]
    mid = float(candidates[np.argmin([slope(c) for c in candidates])])
    result = minimize_scalar(slope, bracket=(lo, mid, hi), method="golden", tol=1e-14)
    return float(result.x)


def _certificate(
    weight: WeightFunction,
    lipschitz: float,
    grid: Grid,
    eta: float,
    factor: float,
    phi: np.ndarray,
    lipschitz_source: str,
) -> Certificate:
    bound = factor * phi
    return Certificate(
        eta=eta,
        lipschitz=lipschitz,
        r=grid.r,
        factor=factor,
        form=CertificateForm.HU if weight.kind == "constant" else CertificateForm.HUR,
        weight_name=weight.name,
        epsilon=weight.epsilon,
        lipschitz_source=lipschitz_source,
        bound_field=ScalarField(grid=grid, values=bound),
        # e^{ηr}·e^{η(t - t_end)} = e^{η(t - t0)}; equal to the bound at t_end
        sharp_bound_field=ScalarField(grid=grid, values=bound * np.exp(eta * (grid.nodes - grid.t_end))),
    )


def hur_bound(
    weight: WeightFunction,
    lipschitz: float,
    grid: Grid,
    eta: float,
    mono_tol: float = 1e-12,
    lipschitz_source: str = "declared",
) -> Certificate:
    factor = bound_factor(lipschitz, grid.r, eta)
    phi = weight.sample(grid, mono_tol).values
    cert = _certificate(weight, lipschitz, grid, eta, factor, phi, lipschitz_source)
    logger.info(f"{cert.form.value} certificate for {weight.name}: eta={eta:.9g}, factor={factor:.9g}")
    return cert


def hu_bound(
    epsilon: float,
    lipschitz: float,
    r: float,
    eta: float,
    grid: Grid | None = None,
    lipschitz_source: str = "declared",
) -> Certificate:
    """Constant-weight certificate ε·e^{ηr}/(1 - L/η); bound fields are filled when a grid is given."""
    _require_positive(epsilon=epsilon)
    weight = WeightFunction.constant(epsilon)
    factor = bound_factor(lipschitz, r, eta)
    if grid is not None:
        if not math.isclose(grid.r, r):
            raise InvalidArgumentError(f"Grid interval length {grid.r} does not match r={r}")
        return _certificate(weight, lipschitz, grid, eta, factor, weight.sample(grid).values, lipschitz_source)
    return Certificate(
        eta=eta,
        lipschitz=lipschitz,
        r=r,
        factor=factor,
        form=CertificateForm.HU,
        weight_name=weight.name,
        epsilon=epsilon,
        lipschitz_source=lipschitz_source,
    )


def minimal_K(
    weight: WeightFunction,
    grid: Grid,
    rule: QuadratureRule | None = None,
    mono_tol: float = 1e-12,
) -> float:
    """Smallest K with |∫_{t0}^{t} φ(s) ds| <= K·φ(t) at every node."""
    phi = weight.sample(grid, mono_tol)
    integral = (rule or QuadratureRule()).cumulative(phi.values, grid.h)
    # the absolute value matters only for t < t0, which a grid on [t0, t0 + r] never has
    return float(np.max(np.abs(integral) / phi.values))


def check_classic_conditions(
    lipschitz: float,
    grid: Grid,
    weight: WeightFunction | None = None,
    k_declared: float | None = None,
    rule: QuadratureRule | None = None,
) -> ClassicReport:
    _require_positive(L=lipschitz)
    lr_product = lipschitz * grid.r
    report = ClassicReport(lr_product=lr_product, hu_applicable=lr_product < 1.0)
    if not report.hu_applicable:
        report.notes.append(
            f"L*r = {lr_product:.6g} >= 1 on [t0, t0 + r]; the classical Hyers-Ulam result "
            "(stated on [a - r, a + r]) does not apply"
        )
    if weight is None:
        return report

    k_min = minimal_K(weight, grid, rule)
    report.k_min = k_min
    report.kl_product = k_min * lipschitz
    report.hur_applicable = report.kl_product < 1.0
    if not report.hur_applicable:
        report.notes.append(
            f"smallest admissible K = {k_min:.6g} gives K*L = {report.kl_product:.6g} >= 1; "
            "the classical Hyers-Ulam-Rassias result does not apply"
        )
    if k_declared is not None:
        _require_positive(K=k_declared)
        report.k_declared = k_declared
        report.k_declared_admissible = k_min <= k_declared * (1.0 + _K_TOLERANCE)
        report.k_declared_product = k_declared * lipschitz
    return report


def estimate_lipschitz(
    kernel: KernelForm,
    grid: Grid,
    y_box: tuple[float, float],
    samples: int = 1000,
    seed: int = 0,
) -> float:
    """Sampled max of |f(., y1) - f(., y2)|/|y1 - y2|.

    This is a lower estimate of the true constant; certificates built from it are
    labeled empirical.
    """
    y_lo, y_hi = y_box
    if not y_lo < y_hi:
        raise InvalidArgumentError(f"y_box must satisfy y_lo < y_hi, got {y_box}")
    if samples < 2:
        raise InvalidArgumentError(f"Need at least 2 samples, got {samples}")
    rng = np.random.default_rng(seed)
    t = rng.uniform(grid.t0, grid.t_end, samples)
    s = t if kernel.tag is KernelTag.STATE_ONLY else grid.t0 + (t - grid.t0) * rng.uniform(0.0, 1.0, samples)
    y1 = rng.uniform(y_lo, y_hi, samples)
    y2 = rng.uniform(y_lo, y_hi, samples)
    keep = y1 != y2
    with np.errstate(all="ignore"):
        quotients = np.abs(kernel(t, s, y1) - kernel(t, s, y2))[keep] / np.abs(y1 - y2)[keep]
    quotients = quotients[np.isfinite(quotients)]
    estimate = float(np.max(quotients)) if quotients.size else 0.0
    logger.warning(
        f"Empirical Lipschitz estimate {estimate:.6g} for {kernel.name} from {samples} samples "
        "is a lower bound, not a certified constant"
    )
    return estimate
