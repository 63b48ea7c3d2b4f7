"""
阶梯函数的测试
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core.errors import DomainError
from core.measure_geometry import Interval, measure
from core.step_functions import StepFunction, sum_functions


@st.composite
def step_functions(draw, max_cells=6):
    """[0.1, 10] 内的随机阶梯函数"""
    n = draw(st.integers(min_value=1, max_value=max_cells))
    points = draw(st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=n + 1, max_size=n + 1, unique=True))
    values = draw(st.lists(st.floats(min_value=-5.0, max_value=5.0), min_size=n, max_size=n))
    points = sorted(points)
    if np.any(np.diff(points) <= 1e-9):
        points = list(np.linspace(0.1, 10.0, n + 1))
    return StepFunction(points, values)


lams = st.sampled_from([0.25, 0.5, 1.0, 2.0])


def test_canonical_form():
    f = StepFunction([0.0, 1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 1.0, 0.0])
    assert list(f.breakpoints) == [1.0, 3.0]
    assert list(f.values) == [1.0]
    assert StepFunction([0.0, 1.0], [0.0]).is_zero
    assert f == StepFunction.indicator(1.0, 3.0)


def test_invalid_construction():
    with pytest.raises(DomainError):
        StepFunction([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        StepFunction([1.0, 1.0], [1.0])
    with pytest.raises(DomainError):
        StepFunction([-1.0, 1.0], [1.0])
    with pytest.raises(DomainError):
        StepFunction([0.0, 1.0], [np.nan])


def test_evaluation_is_left_closed():
    f = StepFunction([1.0, 2.0, 3.0], [5.0, -1.0])
    assert f(1.0) == 5.0
    assert f(2.0) == -1.0
    assert f(3.0) == 0.0
    assert f(0.5) == 0.0
    assert list(f(np.array([1.5, 2.5, 4.0]))) == [5.0, -1.0, 0.0]


def test_integrate_indicator():
    assert StepFunction.indicator(1.0, 3.0).integrate(0.5) == pytest.approx(4.0, rel=1e-14)


def test_integrate_mean_zero_pair():
    lam = 1.0
    c = measure(Interval.from_endpoints(0.0, 1.0), lam) / measure(Interval.from_endpoints(1.0, 2.0 ** (1.0 / 3.0)), lam)
    f = StepFunction([0.0, 1.0, 2.0 ** (1.0 / 3.0)], [1.0, -c])
    assert abs(f.integrate(lam)) < 1e-14


def test_lp_norm_of_indicator():
    I = Interval(2.0, 0.5)
    chi = StepFunction.indicator_of(I)
    for q in (0.8, 1.0, 2.0, 3.5):
        assert chi.lp_norm(q, 1.0) == pytest.approx(measure(I, 1.0) ** (1.0 / q), rel=1e-13)
    assert chi.lp_norm(np.inf, 1.0) == 1.0
    with pytest.raises(DomainError):
        chi.lp_norm(0.0, 1.0)


def test_lp_norm_of_tiny_values_does_not_underflow():
    I = Interval(2.0, 0.5)
    tiny = StepFunction.indicator_of(I, 1e-200)
    for q in (1.5, 2.0, 3.0):
        assert tiny.lp_norm(q, 1.0) == pytest.approx(1e-200 * measure(I, 1.0) ** (1.0 / q), rel=1e-12)
    f = StepFunction([1.0, 2.0, 3.0], [1e-300, -2e-300])
    assert f.lp_norm(2.0, 1.0) > 0.0


def test_atom_height_gives_unit_norm_bound():
    I = Interval(3.0, 1.0)
    p = 0.9
    a = StepFunction.indicator_of(I, measure(I, 1.0) ** (-1.0 / p))
    assert a.lp_norm(p, 1.0) <= 1.0 + 1e-12


def test_product_of_indicators():
    f = StepFunction.indicator(0.0, 2.0) * StepFunction.indicator(1.0, 3.0)
    assert f == StepFunction.indicator(1.0, 2.0)


def test_scalar_multiplication():
    f = StepFunction([1.0, 2.0, 3.0], [1.0, -2.0])
    assert (3.0 * f) == f.scale(3.0)
    assert f.scale(0.0).is_zero


def test_text_serialization():
    f = StepFunction([0.5, 1.25, 3.0], [0.1, -7.25])
    text = f.to_text()
    assert text.startswith("breakpoints: ")
    assert StepFunction.from_text(text) == f
    with pytest.raises(DomainError):
        StepFunction.from_text("values: 1 2\n")


def test_sample_midpoints():
    f = StepFunction.sample(lambda x: x, 0.0, 1.0, 4)
    assert np.allclose(f.values, [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(DomainError):
        StepFunction.sample(lambda x: x, 0.0, 1.0, 4, anchor="right")


def test_sampling_converges_under_refinement():
    lam = 1.0
    exact = 1.0 / 5.0
    errors = [abs(StepFunction.sample(lambda x: x ** 2, 0.0, 1.0, n).integrate(lam) - exact) for n in (64, 128, 256)]
    assert errors[0] > errors[1] > errors[2]


@settings(max_examples=100, deadline=None)
@given(step_functions(), step_functions(), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), lams)
def test_integrate_is_linear(f, g, a, b, lam):
    combined = (f.scale(a) + g.scale(b)).integrate(lam)
    expected = a * f.integrate(lam) + b * g.integrate(lam)
    scale = abs(a) * f.abs().integrate(lam) + abs(b) * g.abs().integrate(lam)
    assert abs(combined - expected) <= 1e-12 * max(scale, 1.0)


@settings(max_examples=100, deadline=None)
@given(step_functions(), lams)
def test_l2_norm_matches_square_integral(f, lam):
    assert f.lp_norm(2.0, lam) ** 2 == pytest.approx(f.multiply(f).integrate(lam), rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(step_functions(), st.floats(min_value=0.1, max_value=5.0), st.floats(min_value=0.1, max_value=5.0))
def test_restrict_partition_identity(f, lo, width):
    hi = lo + width
    assert (f.restrict(lo, hi) + f.restrict_complement(lo, hi)).is_close(f, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(step_functions(), step_functions())
def test_add_then_subtract(f, g):
    assert ((f + g) - g).is_close(f, rtol=1e-12, atol=1e-12 * max(g.sup_norm, 1.0))


@settings(max_examples=100, deadline=None)
@given(step_functions())
def test_canonicalization_is_idempotent(f):
    again = StepFunction(f.breakpoints, f.values) if not f.is_zero else StepFunction.zero()
    assert again == f


@settings(max_examples=100, deadline=None)
@given(step_functions(), step_functions(), st.sampled_from([1.5, 2.0, 3.0]), lams)
def test_holder_inequality(f, g, q, lam):
    q_conj = q / (q - 1.0)
    lhs = f.multiply(g).lp_norm(1.0, lam)
    rhs = f.lp_norm(q, lam) * g.lp_norm(q_conj, lam)
    assert lhs <= rhs * (1.0 + 1e-10) + 1e-300


@settings(max_examples=50, deadline=None)
@given(st.lists(step_functions(max_cells=3), min_size=1, max_size=5))
def test_sum_functions_matches_repeated_addition(functions):
    total = StepFunction.zero()
    for f in functions:
        total = total + f
    assert sum_functions(functions).is_close(total, rtol=1e-12, atol=1e-12)
