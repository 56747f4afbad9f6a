from pathlib import Path
from typing import Any, Literal, Self

from pydantic import BaseModel, NonNegativeFloat, PositiveFloat, PositiveInt, model_validator
from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from core import KernelTag, Problem, ToleranceConfig, WeightFunction, make_grid
from kernels import PROBLEM_PRESETS, build_kernel, build_weight
from stability import estimate_lipschitz, optimal_eta
from verify import PerturbationKind


class ProblemSpec(BaseModel):
    """Kernel (preset name or expression), interval, resolution and Lipschitz constant."""

    kernel: str = "jung-example"
    form: KernelTag | None = None
    t0: float | None = None
    r: PositiveFloat | None = None
    n: int = 1000
    lipschitz: PositiveFloat | Literal["estimate"] | None = None
    y_box: tuple[float, float] | None = None
    lipschitz_samples: PositiveInt = 2000

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.r is not None and self.r <= 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.lipschitz == "estimate":
            if self.y_box is None:
                raise ValueError("lipschitz = 'estimate' needs y_box = [y_lo, y_hi]")
            if not self.y_box[0] < self.y_box[1]:
                raise ValueError(f"y_box must satisfy y_lo < y_hi, got {list(self.y_box)}")
        if self.kernel not in PROBLEM_PRESETS:
            missing = [name for name in ("form", "t0", "r", "lipschitz") if getattr(self, name) is None]
            if missing:
                raise ValueError(f"expression kernel {self.kernel!r} needs {', '.join(missing)}")
        return self

    @property
    def declared_lipschitz(self) -> float | None:
        if isinstance(self.lipschitz, float):
            return self.lipschitz
        if self.lipschitz is None and self.kernel in PROBLEM_PRESETS:
            return PROBLEM_PRESETS[self.kernel].lipschitz
        return None

    def build(self, seed: int = 0) -> Problem:
        preset = PROBLEM_PRESETS.get(self.kernel)
        if preset is not None:
            kernel = build_kernel(preset.expression, self.form or preset.form, name=self.kernel)
            t0 = preset.t0 if self.t0 is None else self.t0
            r = preset.r if self.r is None else self.r
        else:
            kernel = build_kernel(self.kernel, self.form)
            t0, r = self.t0, self.r
        grid = make_grid(t0, r, self.n)

        declared = self.declared_lipschitz
        if declared is not None:
            return Problem(kernel=kernel, grid=grid, lipschitz=declared)
        estimate = estimate_lipschitz(kernel, grid, self.y_box, self.lipschitz_samples, seed)
        return Problem(kernel=kernel, grid=grid, lipschitz=estimate, lipschitz_source="empirical-L")


class WeightSpec(BaseModel):
    name: str = "constant"
    epsilon: PositiveFloat = 1.0
    k_declared: PositiveFloat | None = None

    def build(self) -> WeightFunction:
        return build_weight(self.name, self.epsilon)


class PerturbationSpec(BaseModel):
    kind: PerturbationKind = PerturbationKind.SCALED_SHAPE
    magnitude: NonNegativeFloat = 0.01
    sweep: PositiveInt = 1


class OutputSpec(BaseModel):
    path: Path | None = None
    format: Literal["csv", "json"] | None = None


class RunConfig(BaseSettings):
    """Layered run configuration: overrides > VOLTERRA_* environment > config file."""

    model_config = SettingsConfigDict(env_prefix="VOLTERRA_", env_nested_delimiter="__", extra="forbid")

    problem: ProblemSpec = ProblemSpec()
    weight: WeightSpec = WeightSpec()
    eta: Literal["optimal"] | PositiveFloat = "optimal"
    tolerances: ToleranceConfig = ToleranceConfig()
    perturbation: PerturbationSpec = PerturbationSpec()
    output: OutputSpec = OutputSpec()
    seed: int = 0

    @model_validator(mode="after")
    def _check_eta(self) -> Self:
        declared = self.problem.declared_lipschitz
        if self.eta != "optimal" and declared is not None and not self.eta > declared:
            raise ValueError(f"eta = {self.eta} must exceed the Lipschitz constant {declared}")
        return self

    def resolve_eta(self, problem: Problem) -> float:
        if self.eta == "optimal":
            return optimal_eta(problem.lipschitz, problem.grid.r)
        return float(self.eta)


def load_run_config(
    path: Path | None = None,
    config_format: Literal["toml", "json"] | None = None,
    **overrides: Any,
) -> RunConfig:
    """Build a RunConfig from an optional TOML/JSON file, the environment and explicit overrides."""
    if path is not None and config_format is None:
        config_format = "json" if path.suffix.lower() == ".json" else "toml"

    class _FileRunConfig(RunConfig):
        @classmethod
        def settings_customise_sources(
            cls,
            settings_cls: type[BaseSettings],
            init_settings: PydanticBaseSettingsSource,
            env_settings: PydanticBaseSettingsSource,
            dotenv_settings: PydanticBaseSettingsSource,
            file_secret_settings: PydanticBaseSettingsSource,
        ) -> tuple[PydanticBaseSettingsSource, ...]:
            if path is None:
                return (init_settings, env_settings)
            if config_format == "json":
                file_source = JsonConfigSettingsSource(settings_cls, json_file=path)
            else:
                file_source = TomlConfigSettingsSource(settings_cls, toml_file=path)
            return (init_settings, env_settings, file_source)

    if path is not None and not path.is_file():
        raise FileNotFoundError(f"Config file {path} does not exist")
    return _FileRunConfig(**overrides)


class SolveArtifact(BaseModel):
    t: list[float]
    y0_picard: list[float]
    y0_stepping: list[float]
    gap: list[float]
    converged: bool
    iterations: int
    eta: float
    final_step_distance: float
    error_bound: float


class CertificateArtifact(BaseModel):
    eta: float
    factor: float
    lipschitz: float
    lipschitz_source: str
    form: str
    weight: str
    lr_product: float
    hu_applicable: bool
    k_min: float | None = None
    kl_product: float | None = None
    hur_applicable: bool | None = None
    k_declared: float | None = None
    k_declared_admissible: bool | None = None
    k_declared_product: float | None = None
    bound_constant: float | None = None
    t: list[float]
    bound: list[float]
    sharp_bound: list[float]
    notes: list[str] = []


class VerifyArtifact(BaseModel):
    seed: int
    perturbation: str
    magnitude: float
    defect_admissible: bool
    max_defect_ratio: float
    bound_satisfied: bool
    tightness: float
    sharp_tightness: float
    max_deviation: float
    converged: bool
    iterations: int


class CompareArtifact(BaseModel):
    lr_product: float
    hu_applicable: bool
    k_min: float | None = None
    kl_product: float | None = None
    hur_applicable: bool | None = None
    eta: float
    factor: float
    form: str
    certificate_exists: bool
    classical_applicable: bool
    notes: list[str] = []


class ReproduceArtifact(BaseModel):
    example: str
    eta: float
    golden_section_eta: float
    factor: float
    lr_product: float
    k_min: float | None = None
    k_declared_product: float | None = None
    tightness: float
    random_tightness: float
    checks: dict[str, bool]
    passed: bool


class VerifySweepArtifact(BaseModel):
    cases: list[VerifyArtifact]
    violations: int
