import warnings

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy.optimize import newton

import verify
from core import (
    Grid,
    InvalidArgumentError,
    KernelTag,
    Problem,
    ScalarField,
    ScalarSolveError,
    ToleranceConfig,
    WeightFunction,
    random_smooth_field,
)
from quadrature import QuadratureRule, apply_volterra_operator

_SCALAR_TOL = 1e-14
_RESIDUAL_TOL = 1e-12


class SolveResult(BaseModel):
    """Outcome of Picard iteration y_{k+1} = g + Θy_k."""

    model_config = ConfigDict(frozen=True)

    solution: ScalarField
    iterations: int
    final_step_distance: float
    converged: bool
    eta_used: float
    error_bound: float
    """Bound on the Bielecki distance from `solution` to the discrete fixed point."""
    distance_history: list[float]


def discrete_contraction_factor(lipschitz: float, eta: float, grid: Grid) -> float:
    """Contraction factor of the trapezoid operator in the grid Bielecki metric.

    The trapezoid sum of e^{η(s-t0)} exceeds the exact integral by at most a factor
    1 + (ηh)²/12, which is all the discretization costs relative to L/η.
    """
    return lipschitz / eta * (1.0 + (eta * grid.h) ** 2 / 12.0)


def contraction_allowance(lipschitz: float, eta: float, grid: Grid) -> float:
    return discrete_contraction_factor(lipschitz, eta, grid) - lipschitz / eta


def picard_solve(
    problem: Problem,
    y_init: ScalarField,
    eta: float,
    weight: WeightFunction,
    tol: ToleranceConfig | None = None,
    forcing: ScalarField | None = None,
) -> SolveResult:
    """Iterate y_{k+1} = Θy_k (+ forcing) until the Bielecki step distance is below picard_tol.

    Running out of iterations is reported through `converged=False`, not raised.
    """
    tol = tol or ToleranceConfig()
    if not eta > problem.lipschitz:
        raise InvalidArgumentError(
            f"eta={eta} must exceed the Lipschitz constant L={problem.lipschitz} for a contraction"
        )
    y_init.require_grid(problem.grid)
    if forcing is not None:
        forcing.require_grid(problem.grid)
    rule = QuadratureRule(kind=tol.quad_order)

    y = y_init
    history: list[float] = []
    converged = False
    for iteration in range(1, tol.max_iter + 1):
        y_next = apply_volterra_operator(problem, y, rule)
        if forcing is not None:
            y_next = y_next.like(y_next.values + forcing.values)
        distance = verify.bielecki_distance(y_next, y, eta, weight, tol.mono_tol)
        history.append(distance)
        y = y_next
        logger.trace(f"Picard iteration {iteration}: step distance {distance:.3e}")
        if distance <= tol.picard_tol:
            converged = True
            break

    contraction = discrete_contraction_factor(problem.lipschitz, eta, problem.grid)
    error_bound = contraction / (1.0 - contraction) * history[-1] if contraction < 1.0 else float("inf")
    if converged:
        logger.debug(f"Picard converged in {len(history)} iterations (step distance {history[-1]:.3e})")
    else:
        logger.warning(
            f"Picard did not converge in {tol.max_iter} iterations (step distance {history[-1]:.3e})"
        )
    return SolveResult(
        solution=y,
        iterations=len(history),
        final_step_distance=history[-1],
        converged=converged,
        eta_used=eta,
        error_bound=error_bound,
        distance_history=history,
    )


def stepping_solve(
    problem: Problem,
    grid: Grid | None = None,
    forcing: ScalarField | None = None,
) -> ScalarField:
    """March the trapezoid discretization of the equation node by node.

    Every node solves y_i = g_i + h·(f_i0/2 + Σ_{0<j<i} f_ij) + (h/2)·f(t_i, t_i, y_i)
    for its implicit diagonal term with the secant method. The result is the
    fixed point of the trapezoid Picard operator, computed independently.
    """
    if grid is not None and not grid.same_as(problem.grid):
        problem = problem.on_grid(grid)
    grid = problem.grid
    h = grid.h
    if not h * problem.lipschitz / 2.0 < 1.0:
        raise InvalidArgumentError(
            f"Step h={h:.3g} too coarse for L={problem.lipschitz}: need h·L/2 < 1 for the implicit solve"
        )
    if forcing is not None:
        forcing.require_grid(grid)
    g = forcing.values if forcing is not None else np.zeros(grid.n + 1)

    nodes = grid.nodes
    kernel = problem.kernel
    y = np.zeros(grid.n + 1)
    y[0] = g[0]
    f_state = np.zeros(grid.n + 1)
    if kernel.tag is KernelTag.STATE_ONLY:
        f_state[0] = float(kernel(nodes[0], nodes[0], y[0]))
    interior_sum = 0.0

    for i in range(1, grid.n + 1):
        t = nodes[i]
        if kernel.tag is KernelTag.STATE_ONLY:
            known = h * (0.5 * f_state[0] + interior_sum)
        else:
            row = np.asarray(kernel(t, nodes[:i], y[:i]), dtype=float)
            known = h * (0.5 * row[0] + row[1:].sum())
        c = g[i] + known

        def residual(v: float) -> float:
            return v - c - 0.5 * h * float(kernel(t, t, v))

        value = c
        if residual(value) != 0.0:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    value = float(newton(residual, c, tol=_SCALAR_TOL, maxiter=100))
            except (RuntimeError, OverflowError) as e:
                raise ScalarSolveError(f"Implicit step diverged at node t={t:.17g}: {e}") from e
        if not np.isfinite(value) or abs(residual(value)) > _RESIDUAL_TOL * max(1.0, abs(c)):
            raise ScalarSolveError(f"Implicit step did not converge at node t={t:.17g} (value {value})")
        y[i] = value

        if kernel.tag is KernelTag.STATE_ONLY:
            f_state[i] = float(kernel(t, t, value))
            if i < grid.n:
                interior_sum += f_state[i]

    logger.debug(f"Stepping solve finished on {grid.n} subintervals")
    return ScalarField(grid=grid, values=y)


def estimate_contraction_factor(
    problem: Problem,
    eta: float,
    weight: WeightFunction,
    trials: int,
    seed: int = 0,
    tol: ToleranceConfig | None = None,
) -> float:
    """Largest observed d(Θg1, Θg2)/d(g1, g2) over random smooth field pairs."""
    if trials < 1:
        raise InvalidArgumentError(f"trials must be at least 1, got {trials}")
    tol = tol or ToleranceConfig()
    rule = QuadratureRule(kind=tol.quad_order)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        g1 = random_smooth_field(problem.grid, rng)
        g2 = random_smooth_field(problem.grid, rng)
        base = verify.bielecki_distance(g1, g2, eta, weight, tol.mono_tol)
        if base == 0.0:
            continue
        image = verify.bielecki_distance(
            apply_volterra_operator(problem, g1, rule),
            apply_volterra_operator(problem, g2, rule),
            eta,
            weight,
            tol.mono_tol,
        )
        worst = max(worst, image / base)
    logger.info(f"Measured contraction factor {worst:.6f} over {trials} pairs (L/eta = {problem.lipschitz / eta:.6f})")
    return worst
