import ast
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict

from core import ConfigError, KernelForm, KernelTag, WeightFunction

_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"exp": np.exp, "sin": np.sin, "cos": np.cos}
_BINARY: dict[type[ast.operator], Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}

STATE_VARIABLES = ("s", "y")
BIVARIATE_VARIABLES = ("t", "s", "y")
WEIGHT_VARIABLES = ("t",)


class ProblemPreset(BaseModel):
    model_config = ConfigDict(frozen=True)

    expression: str
    form: KernelTag
    t0: float
    r: float
    lipschitz: float
    description: str


PROBLEM_PRESETS: dict[str, ProblemPreset] = {
    "jung-example": ProblemPreset(
        expression="s * y",
        form=KernelTag.STATE_ONLY,
        t0=0.0,
        r=2.0,
        lipschitz=2.0,
        description="y(t) = ∫_0^t s·y(s) ds on [0, 2]; only solution y = 0",
    ),
    "exp-growth": ProblemPreset(
        expression="y + 1",
        form=KernelTag.STATE_ONLY,
        t0=0.0,
        r=1.0,
        lipschitz=1.0,
        description="y(t) = ∫_0^t (y(s) + 1) ds on [0, 1]; solution e^t - 1",
    ),
    "bivariate-tsy": ProblemPreset(
        expression="t * s * y",
        form=KernelTag.BIVARIATE,
        t0=0.0,
        r=1.0,
        lipschitz=1.0,
        description="y(t) = ∫_0^t t·s·y(s) ds on [0, 1]; only solution y = 0",
    ),
    "bivariate-zero": ProblemPreset(
        expression="0",
        form=KernelTag.BIVARIATE,
        t0=0.0,
        r=1.0,
        lipschitz=1.0,
        description="zero kernel; solution y = 0",
    ),
}

WEIGHT_PRESETS: dict[str, str] = {
    "exp": "exp(t)",
    "one-plus-t2": "1 + t**2",
}


def _validate(node: ast.AST, variables: tuple[str, ...]) -> None:
    match node:
        case ast.Constant(value=value) if isinstance(value, (int, float)) and not isinstance(value, bool):
            return
        case ast.Name(id=name):
            if name not in variables:
                raise ConfigError(f"Unknown variable {name!r}; allowed: {', '.join(variables)}")
        case ast.UnaryOp(op=ast.USub() | ast.UAdd(), operand=operand):
            _validate(operand, variables)
        case ast.BinOp(op=ast.Pow(), left=left, right=ast.Constant(value=int() as exponent)) if exponent >= 0:
            _validate(left, variables)
        case ast.BinOp(op=op, left=left, right=right) if type(op) in _BINARY:
            _validate(left, variables)
            _validate(right, variables)
        case ast.Call(func=ast.Name(id=name), args=[arg], keywords=[]) if name in _FUNCTIONS:
            _validate(arg, variables)
        case _:
            raise ConfigError(f"Unsupported expression element: {ast.unparse(node)!r}")


def _evaluate(node: ast.AST, env: dict[str, np.ndarray]) -> np.ndarray:
    match node:
        case ast.Constant(value=value):
            return np.asarray(float(value))
        case ast.Name(id=name):
            return env[name]
        case ast.UnaryOp(op=ast.USub(), operand=operand):
            return np.negative(_evaluate(operand, env))
        case ast.UnaryOp(operand=operand):
            return _evaluate(operand, env)
        case ast.BinOp(op=ast.Pow(), left=left, right=ast.Constant(value=exponent)):
            return np.power(_evaluate(left, env), exponent)
        case ast.BinOp(op=op, left=left, right=right):
            return _BINARY[type(op)](_evaluate(left, env), _evaluate(right, env))
        case ast.Call(func=ast.Name(id=name), args=[arg]):
            return _FUNCTIONS[name](_evaluate(arg, env))
    raise ConfigError(f"Unsupported expression element: {ast.unparse(node)!r}")


def compile_expression(text: str, variables: tuple[str, ...]) -> Callable[..., np.ndarray]:
    """Compile a restricted arithmetic expression into a numpy function of `variables`.

    Allowed: numbers, the listed variables, + - * /, ** with a nonnegative integer
    exponent, unary minus, exp, sin, cos.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"Cannot parse expression {text!r}: {e.msg}") from e
    _validate(tree.body, variables)
    body = tree.body

    def evaluate(*args: np.ndarray) -> np.ndarray:
        env = {name: np.asarray(value, dtype=float) for name, value in zip(variables, args, strict=True)}
        return _evaluate(body, env)

    return evaluate


def build_kernel(expression: str, form: KernelTag, name: str | None = None) -> KernelForm:
    variables = STATE_VARIABLES if form is KernelTag.STATE_ONLY else BIVARIATE_VARIABLES
    return KernelForm(tag=form, evaluator=compile_expression(expression, variables), name=name or expression)


def build_weight(name: str, epsilon: float = 1.0) -> WeightFunction:
    """`constant` (ε), a preset name, or an expression in t."""
    if name == "constant":
        return WeightFunction.constant(epsilon)
    expression = WEIGHT_PRESETS.get(name, name)
    return WeightFunction.general(compile_expression(expression, WEIGHT_VARIABLES), name=name)
