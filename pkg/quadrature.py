import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy.integrate import cumulative_trapezoid

from core import (
    Grid,
    InvalidArgumentError,
    KernelTag,
    NumericDomainError,
    Problem,
    QuadOrder,
    ScalarField,
    WeightFunction,
)


class QuadratureRule(BaseModel):
    """Composite rule for prefix integrals t -> ∫_{t0}^{t} g(s) ds on a uniform grid.

    Simpson is applied on the largest even prefix; odd prefixes close the last
    panel with a trapezoid step.
    """

    model_config = ConfigDict(frozen=True)

    kind: QuadOrder = QuadOrder.TRAPEZOID

    def cumulative(self, values: np.ndarray, h: float) -> np.ndarray:
        """Prefix integrals along the last axis; output[..., 0] = 0."""
        values = np.asarray(values, dtype=float)
        if self.kind is QuadOrder.TRAPEZOID:
            return cumulative_trapezoid(values, dx=h, axis=-1, initial=0.0)

        out = np.zeros_like(values)
        m = values.shape[-1]
        if m < 2:
            return out
        panels = h / 3.0 * (values[..., 0:-2:2] + 4.0 * values[..., 1:-1:2] + values[..., 2::2])
        out[..., 2::2] = np.cumsum(panels, axis=-1)
        out[..., 1::2] = out[..., 0:-1:2] + 0.5 * h * (values[..., 0:-1:2] + values[..., 1::2])
        return out

    def prefix_weights(self, grid: Grid, index: int) -> np.ndarray:
        """Weights w_j with ∫_{t0}^{t_index} g ≈ Σ_j w_j g(t_j), j = 0..index."""
        if not 0 <= index <= grid.n:
            raise InvalidArgumentError(f"Prefix index {index} outside 0..{grid.n}")
        h = grid.h
        weights = np.zeros(index + 1)
        if index == 0:
            return weights
        if self.kind is QuadOrder.TRAPEZOID:
            weights[:] = h
            weights[0] = weights[-1] = h / 2.0
            return weights
        even = index - index % 2
        if even:
            weights[0 : even + 1 : 2] += 2.0 * h / 3.0
            weights[0] -= h / 3.0
            weights[even] -= h / 3.0
            weights[1:even:2] += 4.0 * h / 3.0
        if even < index:
            weights[index - 1] += h / 2.0
            weights[index] += h / 2.0
        return weights


class WeightedIntegralReport(BaseModel):
    max_violation: float
    allowance: float
    passed: bool


def quadrature_allowance(values: np.ndarray, grid: Grid, lower_triangular: bool = False) -> float:
    """Trapezoid error allowance r·max|g''|·h²/12 with g'' from divided second differences.

    With `lower_triangular`, row i of a matrix only counts columns j <= i (its own prefix).
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] < 3:
        return 0.0
    second = np.abs(values[..., 2:] - 2.0 * values[..., 1:-1] + values[..., :-2])
    if lower_triangular:
        rows = np.arange(values.shape[0])[:, None]
        second = np.where(np.arange(second.shape[-1])[None, :] + 2 <= rows, second, 0.0)
    return float(grid.r * np.max(second) / 12.0)


def cumulative_integral(g: ScalarField, rule: QuadratureRule | None = None) -> ScalarField:
    rule = rule or QuadratureRule()
    return g.like(rule.cumulative(g.values, g.grid.h))


def _integrand(problem: Problem, y: ScalarField) -> np.ndarray:
    """Kernel samples: a vector f(s_j, y_j) for STATE_ONLY, a matrix f(t_i, s_j, y_j) for BIVARIATE."""
    y.require_grid(problem.grid)
    nodes = problem.grid.nodes
    with np.errstate(all="ignore"):
        if problem.kernel.tag is KernelTag.STATE_ONLY:
            samples = np.array(problem.kernel(nodes, nodes, y.values), dtype=float)
        else:
            samples = np.array(problem.kernel(nodes[:, None], nodes[None, :], y.values[None, :]), dtype=float)

    bad = np.argwhere(~np.isfinite(samples))
    if bad.size:
        if samples.ndim == 1:
            j = int(bad[0][0])
            t, s = nodes[j], nodes[j]
        else:
            i, j = (int(k) for k in bad[0])
            t, s = nodes[i], nodes[j]
        raise NumericDomainError(f"Kernel {problem.kernel.name} is not finite at (t={t:.17g}, s={s:.17g})")
    return samples


def apply_volterra_operator(
    problem: Problem,
    y: ScalarField,
    rule: QuadratureRule | None = None,
) -> ScalarField:
    """(Θy)(t_i) = ∫_{t0}^{t_i} f(t_i, s, y(s)) ds, by prefix quadrature."""
    rule = rule or QuadratureRule()
    samples = _integrand(problem, y)
    h = problem.grid.h
    if samples.ndim == 1:
        return y.like(rule.cumulative(samples, h))
    # Row i integrates f(t_i, ., y) over its own prefix [t0, t_i].
    prefixes = rule.cumulative(samples, h)
    return y.like(np.diagonal(prefixes).copy())


def operator_allowance(problem: Problem, y: ScalarField) -> float:
    """Quadrature allowance c·h² for the integrand(s) of Θ at y."""
    samples = _integrand(problem, y)
    return quadrature_allowance(samples, problem.grid, lower_triangular=samples.ndim == 2)


def check_weighted_integral_inequality(
    weight: WeightFunction,
    eta: float,
    grid: Grid,
    rule: QuadratureRule | None = None,
    mono_tol: float = 1e-12,
) -> WeightedIntegralReport:
    """Check ∫_{t0}^{t} φ(s)e^{η(s−t0)} ds ≤ (φ(t)/η)·e^{η(t−t0)} at every node."""
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    phi = weight.sample(grid, mono_tol).values
    growth = np.exp(eta * (grid.nodes - grid.t0))
    integrand = phi * growth
    lhs = (rule or QuadratureRule()).cumulative(integrand, grid.h)
    rhs = phi / eta * growth
    max_violation = float(np.max(lhs - rhs))
    allowance = quadrature_allowance(integrand, grid)
    passed = max_violation <= allowance
    logger.debug(
        f"Weighted integral check for {weight.name}, eta={eta:.6g}: "
        f"max violation {max_violation:.3e}, allowance {allowance:.3e}"
    )
    return WeightedIntegralReport(max_violation=max_violation, allowance=allowance, passed=passed)
