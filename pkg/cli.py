import functools
import io
import json
import math
import sys
import tomllib
from pathlib import Path
from typing import Any, Callable, Literal

import click
import numpy as np
from loguru import logger
from pydantic import BaseModel, ValidationError

from core import (
    ConfigError,
    InvalidArgumentError,
    NumericDomainError,
    Problem,
    QuadOrder,
    ToleranceConfig,
    WeightFunction,
    zeros,
)
from kernels import PROBLEM_PRESETS, build_weight
from models import (
    CertificateArtifact,
    CompareArtifact,
    ProblemSpec,
    ReproduceArtifact,
    RunConfig,
    SolveArtifact,
    VerifyArtifact,
    VerifySweepArtifact,
    load_run_config,
)
from quadrature import QuadratureRule
from solver import picard_solve, stepping_solve
from stability import check_classic_conditions, golden_section_eta, hur_bound, optimal_eta
from verify import PerturbationKind, make_perturbation, verify_stability

EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_VIOLATION = 4

_CONFIG_ERRORS = (
    ValidationError,
    ConfigError,
    InvalidArgumentError,
    tomllib.TOMLDecodeError,
    json.JSONDecodeError,
    FileNotFoundError,
)
_REPRODUCE_EXAMPLES = ("example-3-1", "example-3-2")


@click.group()
@click.option(
    "-v", "--verbose", count=True, help="Verbosity: -v INFO, -vv DEBUG, -vvv TRACE"
)
def cli(verbose: int) -> None:
    levels = {0: "WARNING", 1: "INFO", 2: "DEBUG"}
    logger.remove()
    logger.add(sys.stderr, level=levels.get(verbose, "TRACE"))


def _fail(error: str, code: int) -> None:
    click.echo(json.dumps({"success": False, "error": error}))
    raise SystemExit(code)


def _exit_codes(command: Callable[..., None]) -> Callable[..., None]:
    """Map library exceptions onto the exit-code contract (2 config, 3 numeric, 4 anything else)."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except _CONFIG_ERRORS as e:
            logger.debug(f"Configuration error: {e!r}")
            _fail(f"Invalid configuration: {e}", EXIT_CONFIG)
        except NumericDomainError as e:
            _fail(f"Numerical failure: {e}", EXIT_NOT_CONVERGED)
        except Exception as e:
            logger.exception("Command failed")
            _fail(str(e), EXIT_VIOLATION)

    return wrapper


def _run_options(command: Callable[..., None]) -> Callable[..., None]:
    options = [
        click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="TOML or JSON run config"),
        click.option("--config-format", type=click.Choice(["toml", "json"]), default=None, help="Override format detection"),
        click.option("--kernel", default=None, help=f"Built-in problem ({', '.join(PROBLEM_PRESETS)}) or expression"),
        click.option("--n", "n", type=int, default=None, help="Number of grid subintervals"),
        click.option("--eta", default=None, help="Bielecki weight: a number > L, or 'optimal'"),
        click.option("--weight", "weight_name", default=None, help="constant, exp, one-plus-t2 or an expression in t"),
        click.option("--epsilon", type=float, default=None, help="Level of the constant weight"),
        click.option("--seed", type=int, default=None, help="Random seed (default 0)"),
        click.option("--out", type=click.Path(path_type=Path), default=None, help="Artifact path (default: stdout)"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _load(
    config_path: Path | None,
    config_format: Literal["toml", "json"] | None,
    kernel: str | None = None,
    n: int | None = None,
    eta: str | None = None,
    weight_name: str | None = None,
    epsilon: float | None = None,
    seed: int | None = None,
    out: Path | None = None,
    output_format: str | None = None,
    **perturbation: Any,
) -> RunConfig:
    overrides: dict[str, Any] = {}
    sections = {
        "problem": {"kernel": kernel, "n": n},
        "weight": {"name": weight_name, "epsilon": epsilon},
        "output": {"path": out, "format": output_format},
        "perturbation": perturbation,
    }
    for section, values in sections.items():
        values = {key: value for key, value in values.items() if value is not None}
        if values:
            overrides[section] = values
    if eta is not None:
        overrides["eta"] = eta
    if seed is not None:
        overrides["seed"] = seed
    config = load_run_config(config_path, config_format, **overrides)
    logger.debug(f"Run config: {config.model_dump_json()}")
    return config


def _csv(header: list[str], columns: list[np.ndarray]) -> str:
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.column_stack(columns),
        fmt="%.17g",
        delimiter=",",
        header=",".join(header),
        comments="",
    )
    return buffer.getvalue()


def _json(model: BaseModel) -> str:
    return model.model_dump_json(indent=2) + "\n"


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        click.echo(text, nl=False)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, newline="\n")
    logger.info(f"Wrote {path}")


def _report(config: RunConfig, success: bool, **fields: Any) -> None:
    """Status line: stdout when the artifact went to a file, stderr when stdout carries the artifact."""
    click.echo(json.dumps({"success": success, **fields}), err=config.output.path is None)


def _prepare(config: RunConfig) -> tuple[Problem, WeightFunction, float]:
    problem = config.problem.build(config.seed)
    weight = config.weight.build()
    eta = config.resolve_eta(problem)
    logger.info(
        f"Problem {problem.kernel.name} on [{problem.grid.t0}, {problem.grid.t_end}] with n={problem.grid.n}, "
        f"L={problem.lipschitz} ({problem.lipschitz_source}), eta={eta:.9g}"
    )
    return problem, weight, eta


@cli.command("solve")
@_run_options
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default=None, help="Artifact format (default csv)")
@_exit_codes
def solve_cmd(config_path: Path | None, config_format: str | None, **options: Any) -> None:
    """Solve by Picard iteration and cross-check against implicit trapezoid stepping."""
    config = _load(config_path, config_format, **options)
    if config.tolerances.quad_order is not QuadOrder.TRAPEZOID:
        raise InvalidArgumentError(
            "solve cross-checks against trapezoid stepping; set tolerances.quad_order = \"trapezoid\""
        )
    problem, weight, eta = _prepare(config)
    result = picard_solve(problem, zeros(problem.grid), eta, weight, config.tolerances)
    stepped = stepping_solve(problem)
    gap = np.abs(result.solution.values - stepped.values)
    nodes = problem.grid.nodes

    if (config.output.format or "csv") == "csv":
        text = _csv(
            ["t", "y0_picard", "y0_stepping", "gap"],
            [nodes, result.solution.values, stepped.values, gap],
        )
    else:
        text = _json(
            SolveArtifact(
                t=nodes.tolist(),
                y0_picard=result.solution.values.tolist(),
                y0_stepping=stepped.values.tolist(),
                gap=gap.tolist(),
                converged=result.converged,
                iterations=result.iterations,
                eta=eta,
                final_step_distance=result.final_step_distance,
                error_bound=result.error_bound,
            )
        )
    _emit(text, config.output.path)

    if not result.converged:
        _report(
            config,
            False,
            error=f"Picard iteration did not converge in {result.iterations} iterations",
            final_step_distance=result.final_step_distance,
        )
        raise SystemExit(EXIT_NOT_CONVERGED)
    _report(config, True, iterations=result.iterations, max_gap=float(np.max(gap)))


@cli.command("certify")
@_run_options
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default=None, help="Artifact format (default json)")
@_exit_codes
def certify_cmd(config_path: Path | None, config_format: str | None, **options: Any) -> None:
    """Build the HU/HUR certificate and report the classical conditions."""
    config = _load(config_path, config_format, **options)
    problem, weight, eta = _prepare(config)
    tol = config.tolerances
    cert = hur_bound(weight, problem.lipschitz, problem.grid, eta, tol.mono_tol, problem.lipschitz_source)
    report = check_classic_conditions(
        problem.lipschitz,
        problem.grid,
        weight if weight.kind == "general" else None,
        config.weight.k_declared,
        QuadratureRule(kind=tol.quad_order),
    )
    nodes = problem.grid.nodes

    if (config.output.format or "json") == "csv":
        text = _csv(["t", "bound", "sharp_bound"], [nodes, cert.bound_field.values, cert.sharp_bound_field.values])
    else:
        text = _json(
            CertificateArtifact(
                eta=cert.eta,
                factor=cert.factor,
                lipschitz=cert.lipschitz,
                lipschitz_source=cert.lipschitz_source,
                form=cert.form.value,
                weight=cert.weight_name,
                **report.model_dump(exclude={"notes"}),
                bound_constant=cert.bound_constant,
                t=nodes.tolist(),
                bound=cert.bound_field.values.tolist(),
                sharp_bound=cert.sharp_bound_field.values.tolist(),
                notes=report.notes,
            )
        )
    _emit(text, config.output.path)
    for note in report.notes:
        click.echo(f"NOTE: {note}", err=True)
    if config.output.path is not None:
        _report(config, True, eta=cert.eta, factor=cert.factor)


@cli.command("verify")
@_run_options
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default=None, help="Artifact format (default json)")
@click.option(
    "--perturbation",
    "kind",
    type=click.Choice([kind.value for kind in PerturbationKind]),
    default=None,
    help="Perturbation family (default scaled-shape)",
)
@click.option("--magnitude", type=float, default=None, help="Perturbation size; 0 verifies the solution itself")
@click.option("--sweep", type=int, default=None, help="Number of consecutive seeds to verify")
@_exit_codes
def verify_cmd(config_path: Path | None, config_format: str | None, **options: Any) -> None:
    """Perturb the solution, check admissibility, re-solve and test the certificate's bound."""
    config = _load(config_path, config_format, **options)
    problem, weight, eta = _prepare(config)
    tol = config.tolerances
    spec = config.perturbation
    cert = hur_bound(weight, problem.lipschitz, problem.grid, eta, tol.mono_tol, problem.lipschitz_source)
    y0 = stepping_solve(problem)

    cases: list[VerifyArtifact] = []
    for seed in range(config.seed, config.seed + spec.sweep):
        if spec.magnitude == 0:
            y = y0
        else:
            y = make_perturbation(problem, y0, spec.kind, spec.magnitude, seed=seed, target=weight, tol=tol)
        report = verify_stability(problem, y, weight, cert, tol)
        cases.append(
            VerifyArtifact(
                seed=seed,
                perturbation=spec.kind.value,
                magnitude=spec.magnitude,
                **report.model_dump(exclude={"allowance"}),
            )
        )
    violations = sum(not case.bound_satisfied for case in cases)

    if (config.output.format or "json") == "csv":
        fields = [
            "seed",
            "magnitude",
            "defect_admissible",
            "max_defect_ratio",
            "bound_satisfied",
            "tightness",
            "sharp_tightness",
            "max_deviation",
            "converged",
            "iterations",
        ]
        rows = np.array([[float(getattr(case, field)) for field in fields] for case in cases])
        text = _csv(fields, list(rows.T))
    elif spec.sweep == 1:
        text = _json(cases[0])
    else:
        text = _json(VerifySweepArtifact(cases=cases, violations=violations))
    _emit(text, config.output.path)

    if violations:
        _report(config, False, error=f"Certificate bound violated in {violations} of {len(cases)} cases")
        raise SystemExit(EXIT_VIOLATION)
    if config.output.path is not None:
        _report(config, True, cases=len(cases), max_tightness=max(case.tightness for case in cases))


@cli.command("compare")
@_run_options
@_exit_codes
def compare_cmd(config_path: Path | None, config_format: str | None, **options: Any) -> None:
    """Set the classical conditions next to the contraction-based certificate."""
    config = _load(config_path, config_format, **options)
    problem, weight, eta = _prepare(config)
    tol = config.tolerances
    cert = hur_bound(weight, problem.lipschitz, problem.grid, eta, tol.mono_tol, problem.lipschitz_source)
    general = weight.kind == "general"
    report = check_classic_conditions(
        problem.lipschitz,
        problem.grid,
        weight if general else None,
        config.weight.k_declared,
        QuadratureRule(kind=tol.quad_order),
    )
    artifact = CompareArtifact(
        lr_product=report.lr_product,
        hu_applicable=report.hu_applicable,
        k_min=report.k_min,
        kl_product=report.kl_product,
        hur_applicable=report.hur_applicable,
        eta=cert.eta,
        factor=cert.factor,
        form=cert.form.value,
        # any eta > L yields a certificate; an overflowing factor has already exited 3
        certificate_exists=True,
        classical_applicable=bool(report.hur_applicable if general else report.hu_applicable),
        notes=report.notes,
    )
    _emit(_json(artifact), config.output.path)
    if config.output.path is not None:
        _report(config, True, classical_applicable=artifact.classical_applicable)


def _reproduce(example: str, n: int, seed: int) -> ReproduceArtifact:
    """Re-run one worked example: classical conditions fail, the certificate exists and holds."""
    problem = ProblemSpec(kernel="jung-example", n=n).build(seed)
    grid, lipschitz = problem.grid, problem.lipschitz
    tol = ToleranceConfig()

    eta = optimal_eta(lipschitz, grid.r)
    golden = golden_section_eta(lipschitz, grid.r)
    if example == "example-3-1":
        weight = WeightFunction.constant(0.01)
        report = check_classic_conditions(lipschitz, grid)
    else:
        weight = build_weight("exp")
        report = check_classic_conditions(lipschitz, grid, weight, k_declared=1.0)
    cert = hur_bound(weight, lipschitz, grid, eta, tol.mono_tol)

    y0 = stepping_solve(problem)
    magnitude = weight.epsilon or 1.0
    shaped = make_perturbation(problem, y0, PerturbationKind.SCALED_SHAPE, magnitude, seed=seed, target=weight, tol=tol)
    random = make_perturbation(problem, y0, PerturbationKind.RANDOM_SMOOTH, magnitude, seed=seed, target=weight, tol=tol)
    shaped_report = verify_stability(problem, shaped, weight, cert, tol)
    random_report = verify_stability(problem, random, weight, cert, tol)

    checks = {
        "lipschitz_product_exceeds_one": report.lr_product > 1.0,
        "eta_is_one_plus_sqrt_two": abs(eta - (1.0 + math.sqrt(2.0))) <= 1e-9,
        "eta_matches_golden_section": abs(eta - golden) <= 1e-9,
        "shaped_bound_satisfied": shaped_report.defect_admissible and shaped_report.bound_satisfied,
        "random_bound_satisfied": random_report.defect_admissible and random_report.bound_satisfied,
    }
    if example == "example-3-2":
        checks["k_one_admissible"] = bool(report.k_declared_admissible)
        checks["k_l_product_exceeds_one"] = report.k_declared_product is not None and report.k_declared_product > 1.0
        checks["classical_hur_inapplicable"] = report.hur_applicable is False
    else:
        checks["classical_hu_inapplicable"] = not report.hu_applicable

    return ReproduceArtifact(
        example=example,
        eta=eta,
        golden_section_eta=golden,
        factor=cert.factor,
        lr_product=report.lr_product,
        k_min=report.k_min,
        k_declared_product=report.k_declared_product,
        tightness=shaped_report.tightness,
        random_tightness=random_report.tightness,
        checks=checks,
        passed=all(checks.values()),
    )


@cli.command("reproduce")
@click.argument("which", type=click.Choice([*_REPRODUCE_EXAMPLES, "all"]))
@click.option("--n", "n", type=int, default=1000, show_default=True, help="Number of grid subintervals")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the random perturbation")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Write the JSON artifact here")
@_exit_codes
def reproduce_cmd(which: str, n: int, seed: int, out: Path | None) -> None:
    """Reproduce the worked examples and print a summary table."""
    examples = _REPRODUCE_EXAMPLES if which == "all" else (which,)
    artifacts = [_reproduce(example, n, seed) for example in examples]

    for artifact in artifacts:
        click.echo(f"== {artifact.example} ==")
        click.echo(f"{'L*r':<32}{artifact.lr_product:.6g}")
        if artifact.k_min is not None:
            click.echo(f"{'smallest K':<32}{artifact.k_min:.6g}")
            click.echo(f"{'K*L with K = 1':<32}{artifact.k_declared_product:.6g}")
        click.echo(f"{'eta (closed form)':<32}{artifact.eta:.12g}")
        click.echo(f"{'eta (golden section)':<32}{artifact.golden_section_eta:.12g}")
        click.echo(f"{'factor':<32}{artifact.factor:.6f}")
        click.echo(f"{'tightness (scaled shape)':<32}{artifact.tightness:.6g}")
        click.echo(f"{'tightness (random smooth)':<32}{artifact.random_tightness:.6g}")
        for name, passed in artifact.checks.items():
            click.echo(f"{name:<32}{'ok' if passed else 'FAILED'}")

    payload = json.dumps([artifact.model_dump(mode="json") for artifact in artifacts], indent=2) + "\n"
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload, newline="\n")
    failed = [artifact.example for artifact in artifacts if not artifact.passed]
    if failed:
        click.echo(json.dumps({"success": False, "error": f"Reproduction failed for {', '.join(failed)}"}))
        raise SystemExit(EXIT_VIOLATION)
    click.echo(json.dumps({"success": True, "examples": list(examples)}))


if __name__ == "__main__":
    cli()
