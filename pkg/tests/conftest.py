import pytest

from core import KernelForm, KernelTag, Problem, make_grid
from kernels import PROBLEM_PRESETS, build_kernel


def preset_problem(name: str, n: int = 1000) -> Problem:
    preset = PROBLEM_PRESETS[name]
    return Problem(
        kernel=build_kernel(preset.expression, preset.form, name=name),
        grid=make_grid(preset.t0, preset.r, n),
        lipschitz=preset.lipschitz,
    )


@pytest.fixture
def jung_problem() -> Problem:
    """f(s, y) = s·y on [0, 2], L = 2."""
    return preset_problem("jung-example")


@pytest.fixture
def exp_growth_problem() -> Problem:
    """f(s, y) = y + 1 on [0, 1]; solution e^t - 1."""
    return preset_problem("exp-growth")


@pytest.fixture
def bivariate_problem() -> Problem:
    return preset_problem("bivariate-tsy")


@pytest.fixture
def linear_kernel() -> KernelForm:
    return KernelForm(tag=KernelTag.STATE_ONLY, evaluator=lambda s, y: s * y, name="s*y")
