from enum import Enum
from typing import Annotated, Callable, Literal, Self

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, NonNegativeFloat, PositiveFloat, PositiveInt, field_validator, model_validator


class VolterraError(Exception):
    pass


class InvalidArgumentError(VolterraError, ValueError):
    pass


class NumericDomainError(VolterraError, ArithmeticError):
    pass


class ScalarSolveError(NumericDomainError):
    pass


class PerturbationError(VolterraError):
    pass


class ConfigError(VolterraError):
    pass


class QuadOrder(str, Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


class KernelTag(str, Enum):
    STATE_ONLY = "state"
    BIVARIATE = "bivariate"


class ToleranceConfig(BaseModel):
    """Numerical tolerances shared by the solver and the verification pipeline."""

    model_config = ConfigDict(frozen=True)

    picard_tol: PositiveFloat = 1e-12
    max_iter: PositiveInt = 200
    quad_order: QuadOrder = QuadOrder.TRAPEZOID
    mono_tol: NonNegativeFloat = 1e-12
    verify_slack: NonNegativeFloat = 1e-8


class Grid(BaseModel):
    """Uniform partition of I = [t0, t0 + r] into n subintervals."""

    model_config = ConfigDict(frozen=True)

    t0: FiniteFloat
    r: Annotated[FiniteFloat, Field(gt=0)]
    n: Annotated[int, Field(ge=2)]

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.t0 + self.r, self.n + 1)

    @property
    def h(self) -> float:
        return self.r / self.n

    @property
    def t_end(self) -> float:
        return self.t0 + self.r

    def same_as(self, other: "Grid") -> bool:
        return (self.t0, self.r, self.n) == (other.t0, other.r, other.n)

    def refined(self, factor: int = 2) -> "Grid":
        return make_grid(self.t0, self.r, self.n * factor)


class ScalarField(BaseModel):
    """Real values sampled at every node of a grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, values: object) -> np.ndarray:
        array = np.array(values, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.values.shape != (self.grid.n + 1,):
            raise ValueError(
                f"Field needs {self.grid.n + 1} values for grid n={self.grid.n}, got shape {self.values.shape}"
            )
        bad = np.flatnonzero(~np.isfinite(self.values))
        if bad.size:
            t = self.grid.nodes[bad[0]]
            raise NumericDomainError(f"Non-finite field value {self.values[bad[0]]} at t={t:.17g}")
        return self

    def like(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(grid=self.grid, values=values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def require_grid(self, grid: Grid) -> None:
        if not self.grid.same_as(grid):
            raise InvalidArgumentError(
                f"Field lives on grid (t0={self.grid.t0}, r={self.grid.r}, n={self.grid.n}), "
                f"expected (t0={grid.t0}, r={grid.r}, n={grid.n})"
            )


class KernelForm(BaseModel):
    """Kernel f of the Volterra equation.

    STATE_ONLY evaluators take (s, y), BIVARIATE evaluators take (t, s, y). Evaluators
    must accept numpy arrays and broadcast.
    """

    model_config = ConfigDict(frozen=True)

    tag: KernelTag
    evaluator: Callable[..., np.ndarray]
    name: str = "kernel"

    def as_bivariate(self) -> "KernelForm":
        if self.tag is KernelTag.BIVARIATE:
            return self
        f = self.evaluator
        return KernelForm(tag=KernelTag.BIVARIATE, evaluator=lambda t, s, y: f(s, y), name=self.name)

    def __call__(self, t: np.ndarray | float, s: np.ndarray | float, y: np.ndarray | float) -> np.ndarray:
        """Evaluate with the bivariate signature; STATE_ONLY kernels ignore t."""
        if self.tag is KernelTag.STATE_ONLY:
            out = self.evaluator(s, y)
        else:
            out = self.evaluator(t, s, y)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(t, s, y).shape)


class Problem(BaseModel):
    model_config = ConfigDict(frozen=True)

    kernel: KernelForm
    grid: Grid
    lipschitz: PositiveFloat
    lipschitz_source: Literal["declared", "empirical-L"] = "declared"

    def on_grid(self, grid: Grid) -> "Problem":
        return self.model_copy(update={"grid": grid})


class WeightFunction(BaseModel):
    """Positive nondecreasing weight φ on I."""

    model_config = ConfigDict(frozen=True)

    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: Literal["constant", "general"] = "general"
    epsilon: PositiveFloat | None = None
    name: str = "phi"

    @classmethod
    def constant(cls, epsilon: float) -> "WeightFunction":
        if not epsilon > 0:
            raise InvalidArgumentError(f"Constant weight must be positive, got {epsilon}")
        return cls(
            evaluator=lambda t: np.full_like(np.asarray(t, dtype=float), epsilon),
            kind="constant",
            epsilon=epsilon,
            name=f"constant({epsilon:g})",
        )

    @classmethod
    def general(cls, evaluator: Callable[[np.ndarray], np.ndarray], name: str = "phi") -> "WeightFunction":
        return cls(evaluator=evaluator, kind="general", name=name)

    def sample(self, grid: Grid, mono_tol: float = 1e-12) -> ScalarField:
        """Sample φ on the grid, checking positivity and (sampled) monotonicity."""
        field = sample_function(self.evaluator, grid)
        values = field.values
        if np.any(values <= 0):
            i = int(np.flatnonzero(values <= 0)[0])
            raise InvalidArgumentError(f"Weight {self.name} is not positive at t={grid.nodes[i]:.17g}")
        drops = np.flatnonzero(values[1:] < values[:-1] - mono_tol)
        if drops.size:
            i = int(drops[0])
            raise InvalidArgumentError(
                f"Weight {self.name} decreases between t={grid.nodes[i]:.17g} and t={grid.nodes[i + 1]:.17g}"
            )
        return field


def make_grid(t0: float, r: float, n: int) -> Grid:
    if not (np.isfinite(r) and r > 0):
        raise InvalidArgumentError(f"Interval length must be positive and finite, got r={r}")
    if n < 2:
        raise InvalidArgumentError(f"Grid needs at least 2 subintervals, got n={n}")
    if not np.isfinite(t0):
        raise InvalidArgumentError(f"Left endpoint must be finite, got t0={t0}")
    return Grid(t0=t0, r=r, n=n)


def sample_function(h: Callable[[np.ndarray], np.ndarray], grid: Grid) -> ScalarField:
    """Evaluate h at every grid node."""
    nodes = grid.nodes
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(h(nodes), dtype=float), nodes.shape).copy()
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        logger.debug(f"Sampling produced {bad.size} non-finite values")
        raise NumericDomainError(f"Function is not finite at node t={nodes[bad[0]]:.17g}")
    return ScalarField(grid=grid, values=values)


def zeros(grid: Grid) -> ScalarField:
    return ScalarField(grid=grid, values=np.zeros(grid.n + 1))


def random_smooth_field(grid: Grid, rng: np.random.Generator, degree: int = 5, scale: float = 1.0) -> ScalarField:
    """Polynomial of degree <= `degree` in x = (t - t0)/r with coefficients uniform in [-1, 1]."""
    coefficients = rng.uniform(-1.0, 1.0, size=rng.integers(1, degree + 2))
    x = (grid.nodes - grid.t0) / grid.r
    return ScalarField(grid=grid, values=scale * np.polynomial.polynomial.polyval(x, coefficients))
