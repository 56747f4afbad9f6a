"""Property suites for the grid Bielecki metric and the Volterra operator."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import preset_problem
from core import WeightFunction, make_grid, random_smooth_field, sample_function
from quadrature import apply_volterra_operator, cumulative_integral
from verify import bielecki_distance

GRID = make_grid(0.0, 2.0, 200)
WEIGHTS = [
    WeightFunction.constant(1.0),
    WeightFunction.general(np.exp, name="exp"),
    WeightFunction.general(lambda t: 1.0 + t**2, name="1+t^2"),
]
JUNG = preset_problem("jung-example", n=200)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
etas = st.floats(min_value=0.1, max_value=10.0, allow_nan=False, allow_infinity=False)


@given(seeds, etas, st.sampled_from(WEIGHTS))
@settings(max_examples=200, deadline=None)
def test_metric_axioms(seed: int, eta: float, weight: WeightFunction):
    rng = np.random.default_rng(seed)
    g1, g2, g3 = (random_smooth_field(GRID, rng) for _ in range(3))

    d12 = bielecki_distance(g1, g2, eta, weight)
    d21 = bielecki_distance(g2, g1, eta, weight)
    d13 = bielecki_distance(g1, g3, eta, weight)
    d23 = bielecki_distance(g2, g3, eta, weight)

    assert d12 == d21
    assert d13 <= (d12 + d23) * (1.0 + 1e-12)
    assert bielecki_distance(g1, g1, eta, weight) == 0.0
    if not np.array_equal(g1.values, g2.values):
        assert d12 > 0.0


@given(seeds, st.floats(min_value=-5.0, max_value=5.0, allow_nan=False), st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_operator_linearity(seed: int, a: float, b: float):
    rng = np.random.default_rng(seed)
    y1, y2 = random_smooth_field(GRID, rng), random_smooth_field(GRID, rng)
    combined = y1.like(a * y1.values + b * y2.values)
    lhs = apply_volterra_operator(JUNG, combined).values
    rhs = a * apply_volterra_operator(JUNG, y1).values + b * apply_volterra_operator(JUNG, y2).values
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_operator_is_lipschitz_pointwise(seed: int):
    # |Θu - Θv|(t) <= L·∫|u - v| for a kernel with Lipschitz constant L
    rng = np.random.default_rng(seed)
    u, v = random_smooth_field(GRID, rng), random_smooth_field(GRID, rng)
    gap = np.abs(apply_volterra_operator(JUNG, u).values - apply_volterra_operator(JUNG, v).values)
    spread = np.abs(u.values - v.values)
    running = np.concatenate(([0.0], np.cumsum(0.5 * GRID.h * (spread[1:] + spread[:-1]))))
    assert np.all(gap <= JUNG.lipschitz * running * (1.0 + 1e-12) + 1e-14)


@given(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False), st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_sample_function_is_linear(a: float, b: float):
    combined = sample_function(lambda t: a * np.sin(t) + b * t**2, GRID).values
    separate = a * sample_function(np.sin, GRID).values + b * sample_function(lambda t: t**2, GRID).values
    assert np.allclose(combined, separate, rtol=1e-12, atol=1e-12)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_cumulative_integral_of_nonnegative_field_is_nondecreasing(seed: int):
    g = random_smooth_field(GRID, np.random.default_rng(seed))
    integral = cumulative_integral(g.like(np.abs(g.values))).values
    assert integral[0] == 0.0
    assert np.all(np.diff(integral) >= 0.0)
