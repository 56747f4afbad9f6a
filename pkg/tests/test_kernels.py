import numpy as np
import pytest

from core import ConfigError, KernelTag, make_grid
from kernels import PROBLEM_PRESETS, build_kernel, build_weight, compile_expression


def test_compile_state_expression():
    f = compile_expression("s * y + 1", ("s", "y"))
    assert np.allclose(f(np.array([0.0, 2.0]), np.array([3.0, 4.0])), [1.0, 9.0])


def test_compile_functions_and_powers():
    f = compile_expression("-exp(t) + sin(t) * cos(t) / 2 + t**3", ("t",))
    t = np.linspace(0.0, 1.0, 5)
    assert np.allclose(f(t), -np.exp(t) + np.sin(t) * np.cos(t) / 2 + t**3)


@pytest.mark.parametrize(
    "text",
    [
        "__import__('os').system('true')",
        "y.real",
        "abs(y)",
        "y ** 0.5",
        "y ** s",
        "x + 1",
        "lambda: 1",
        "[y]",
        "'y'",
        "True",
    ],
)
def test_rejects_everything_else(text):
    with pytest.raises(ConfigError):
        compile_expression(text, ("s", "y"))


def test_rejects_syntax_errors():
    with pytest.raises(ConfigError, match="Cannot parse"):
        compile_expression("s * (y", ("s", "y"))


def test_bivariate_kernel_sees_t():
    kernel = build_kernel("t * s * y", KernelTag.BIVARIATE)
    assert kernel.tag is KernelTag.BIVARIATE
    assert kernel.name == "t * s * y"
    assert float(kernel(2.0, 3.0, 4.0)) == 24.0


def test_state_kernel_rejects_t():
    with pytest.raises(ConfigError, match="Unknown variable 't'"):
        build_kernel("t * y", KernelTag.STATE_ONLY)


def test_constant_zero_kernel_broadcasts():
    kernel = build_kernel("0", KernelTag.BIVARIATE)
    assert kernel(np.zeros(3), np.zeros(3), np.ones(3)).shape == (3,)


def test_weights():
    grid = make_grid(0.0, 2.0, 10)
    assert build_weight("constant", 0.5).kind == "constant"
    assert np.allclose(build_weight("exp").sample(grid).values, np.exp(grid.nodes))
    assert np.allclose(build_weight("one-plus-t2").sample(grid).values, 1.0 + grid.nodes**2)
    assert np.allclose(build_weight("2 + t").sample(grid).values, 2.0 + grid.nodes)


def test_presets():
    assert set(PROBLEM_PRESETS) == {"jung-example", "exp-growth", "bivariate-tsy", "bivariate-zero"}
    jung = PROBLEM_PRESETS["jung-example"]
    assert (jung.t0, jung.r, jung.lipschitz) == (0.0, 2.0, 2.0)
