"""
测度 m_λ 与区间几何的测试
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from core.errors import DomainError
from core.measure_geometry import (
    BesselParam, Interval, ball_measure, commutator_p_range, doubling_comparability,
    doubling_ratio, log_grid, measure, p_range, scan_doubling_constant, smallest_interval
)

lams = st.sampled_from([0.25, 0.5, 1.0, 2.0, 3.5])
positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


def test_measure_closed_form():
    assert measure(Interval(1.0, 1.0), 1.0) == pytest.approx(8.0 / 3.0, rel=1e-14)
    assert measure(Interval(2.0, 1.0), 0.5) == pytest.approx(4.0, rel=1e-14)


def test_measure_matches_quadrature():
    I = Interval(10.0, 0.1)
    oracle, _ = integrate.quad(lambda x: x ** 2, I.lo, I.hi, epsabs=0.0, epsrel=1e-13)
    assert measure(I, 1.0) == pytest.approx(oracle, rel=1e-12)


def test_interval_clips_at_origin():
    I = Interval(1.0, 3.0)
    assert I.lo == 0.0
    assert I.hi == 4.0


def test_normalized_keeps_the_set():
    I = Interval(1.0, 3.0)
    N = I.normalized()
    assert N.radius <= N.center
    assert (N.lo, N.hi) == (I.lo, I.hi)
    J = Interval(5.0, 1.0)
    assert J.normalized() is J


def test_invalid_intervals():
    with pytest.raises(DomainError):
        Interval(1.0, 0.0)
    with pytest.raises(DomainError):
        Interval.from_endpoints(2.0, 1.0)
    with pytest.raises(DomainError):
        BesselParam(-1.0)


def test_doubling_comparability_examples():
    lo, hi = doubling_comparability(1.0, 1.0, 1.0)
    assert lo == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert hi == pytest.approx(3.0 / 4.0, rel=1e-14)
    # 欧氏区域 m ≈ 2x^{2λ}r，比值趋于 2
    ratio, _ = doubling_comparability(100.0, 1.0, 1.0)
    assert abs(ratio - 2.0) < 1e-3
    with pytest.raises(DomainError):
        doubling_comparability(0.0, 1.0, 1.0)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0, 2.0])
def test_doubling_constant_is_finite(lam):
    C = scan_doubling_constant(lam)
    assert 1.0 < C < math.inf
    xs = log_grid(1e-3, 1e3, 64)
    X, R = np.meshgrid(xs, xs, indexing="ij")
    ratio = doubling_ratio(X, R, lam)
    assert np.all(ratio >= 1.0)
    assert np.all(ratio <= 2.0 ** (2.0 * lam + 1.0) * C)


def test_p_range():
    assert p_range(1.0).lower == pytest.approx(0.75)
    assert str(p_range(1.0)) == "(3/4, 1]"
    assert p_range(0.5).lower == pytest.approx(2.0 / 3.0)
    assert p_range(0.5).contains(1.0)
    assert not p_range(0.5).contains(2.0 / 3.0)
    for lam in (10.0, 1e3, 1e6):
        r = p_range(lam)
        assert r.lower < 1.0 and r.contains(1.0)


def test_commutator_p_range_is_inside_half_one():
    r = commutator_p_range(0.1)
    assert r.lower >= 0.5
    assert r.upper <= 1.0


def test_smallest_interval():
    I = smallest_interval(3.0, 1.0)
    assert (I.lo, I.hi) == (1.0, 3.0)
    with pytest.raises(DomainError):
        smallest_interval(2.0, 2.0)


@settings(max_examples=200, deadline=None)
@given(lams, positive, positive, st.floats(min_value=1e-2, max_value=1e2))
def test_scaling_law(lam, x, r, s):
    base = measure(Interval(x, r), lam)
    scaled = measure(Interval(s * x, s * r), lam)
    assert scaled == pytest.approx(s ** (2.0 * lam + 1.0) * base, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(lams, positive, st.floats(min_value=0.01, max_value=0.99))
def test_measure_is_additive(lam, hi, t):
    lo = hi * t / 2.0
    cut = lo + t * (hi - lo)
    whole = measure(Interval.from_endpoints(lo, hi), lam)
    parts = measure(Interval.from_endpoints(lo, cut), lam) + measure(Interval.from_endpoints(cut, hi), lam)
    assert parts == pytest.approx(whole, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(lams, positive, positive)
def test_ball_measure_vectorized_matches_scalar(lam, x, r):
    # r ≪ x 时 Interval 的端点相减本身有 eps·x/r 的相对误差
    assert float(ball_measure(np.array([x]), np.array([r]), lam)[0]) == pytest.approx(
        measure(Interval(x, r), lam), rel=1e-9
    )


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_ball_measure_of_tiny_radius(lam):
    # m ≈ 2 x^{2λ} r
    for r in (1e-12, 1e-20, 1e-80):
        assert ball_measure(1.5, r, lam) == pytest.approx(2.0 * 1.5 ** (2.0 * lam) * r, rel=1e-12)
    assert ball_measure(np.array([2.0]), np.array([1e-30]), lam)[0] > 0.0
