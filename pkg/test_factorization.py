"""
常数表、Π(g, h) 与逐层弱分解的测试
"""
import math
from types import SimpleNamespace

import numpy as np
import pytest

import core.factorization as factorization
from actions.battery import generate_battery
from config import ExperimentConfig
from core.atoms import AtomicDecomposition, AtomTerm, hp_norm_upper, standard_atom
from core.errors import ConfigError, DivergenceDetected, DomainError
from core.factorization import (
    CaseTag, approximate_atom, conjugate_exponents, pair_center, pairing_check, pi_dual_estimate, pi_form,
    pi_integral, select_schedule, smallest_admissible_M, symbol_pairing, weak_factorize
)
from core.kernels import KernelRegimeConstants
from core.measure_geometry import Interval, measure
from core.quadrature import QuadratureSpec
from core.riesz_operators import canonical_symbol, constant_symbol
from core.step_functions import StepFunction

SPEC = QuadratureSpec()
LAM = 1.0
CONSTANTS = KernelRegimeConstants(lam=LAM, K1=0.5, K2=0.4, C_K1=1.0, C_K2=1.0)


def small_schedule(p=1.0, M=1024.0, epsilon=0.5):
    return select_schedule(LAM, p, epsilon=epsilon, M=M, constants=CONSTANTS)


# ==================== 常数表 ====================

def test_pair_center_cases():
    assert pair_center(1.0, 0.25, 128.0, 4.0) == (CaseTag.NEAR, 1.0 + 256.0)
    assert pair_center(1e4, 1.0, 128.0, 4.0) == (CaseTag.FAR, 1e4 - 32.0)
    # 边界 x₀ = 2Mr 归入 NEAR
    assert pair_center(64.0, 0.25, 128.0, 4.0)[0] is CaseTag.NEAR


def test_conjugate_exponents():
    assert conjugate_exponents(0.9) == (1.8, 1.8)
    q, r = conjugate_exponents(0.9, q=3.0)
    assert q == 3.0
    assert r == pytest.approx(1.0 / (1.0 / 0.9 - 1.0 / 3.0))
    q, r = conjugate_exponents(0.9, r=3.0)
    assert r == 3.0 and q == pytest.approx(1.0 / (1.0 / 0.9 - 1.0 / 3.0))
    with pytest.raises(ConfigError):
        conjugate_exponents(0.9, q=0.5)


def test_smallest_admissible_M():
    assert smallest_admissible_M(4.0, 0.85, 1.0 / 16.0, 16.0) == 2.0 ** 17
    assert smallest_admissible_M(4.0, 1.0, 1.0 / 16.0, 16.0) == 4096.0
    with pytest.raises(ConfigError):
        smallest_admissible_M(4.0, 0.5000001, 1e-3, 16.0)


def test_select_schedule_from_explicit_constants():
    schedule = select_schedule(LAM, 0.85, constants=CONSTANTS)
    assert schedule.K0 == 4.0
    assert schedule.M == 2.0 ** 17
    assert (schedule.q, schedule.r) == (1.7, 1.7)
    assert schedule.log_condition < schedule.epsilon ** schedule.p
    assert schedule.to_dict()["lambda"] == LAM


def test_schedule_rejects_invalid_parameters():
    with pytest.raises(ConfigError):
        select_schedule(LAM, 1.0, M=256.0, constants=CONSTANTS)
    with pytest.raises(ConfigError):
        select_schedule(LAM, 0.9, q=2.0, r=2.0, constants=CONSTANTS)
    with pytest.raises(ConfigError):
        select_schedule(LAM, 0.5, constants=CONSTANTS)
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(lambda_list=[1.0], p_list=[0.5]).validate()
    assert "(3/4, 1]" in str(info.value)


# ==================== Π(g, h) ====================

def test_pi_integral_cancels():
    g, h = StepFunction.indicator(1.0, 2.0), StepFunction.indicator(4.0, 5.0)
    value, scale = pi_integral(g, h, LAM, SPEC)
    assert scale > 0
    assert abs(value) <= 1e-8 * scale

    sampled = pi_form(g, h, LAM, SPEC, cells=64).integrate(LAM)
    assert abs(sampled - value) <= 1e-3 * scale
    assert pi_integral(StepFunction.zero(), h, LAM, SPEC) == (0.0, 0.0)
    assert pi_form(g, StepFunction.zero(), LAM, SPEC).is_zero


# ==================== 单原子近似 ====================

@pytest.fixture(scope="module")
def near_case():
    atom = standard_atom(Interval(1.0, 0.25), 1.0, LAM)
    schedule = small_schedule()
    return atom, schedule, approximate_atom(atom, schedule, LAM, SPEC, cells=16)


def test_approximate_atom_near_case(near_case):
    atom, schedule, approx = near_case
    pair = approx.pair
    assert pair.case is CaseTag.NEAR
    assert pair.y0 == pytest.approx(1.0 + 2.0 * schedule.M * schedule.K0 * 0.25)
    assert pair.support_gap > 0
    assert pair.denominator != 0.0
    assert pair.product_norm > 0 and pair.product_ratio(schedule) > 0
    assert math.isfinite(approx.certified_eps) and approx.certified_eps > 0
    assert approx.c1_reference > 0
    assert all(c.passed for c in approx.decomposition.validate(LAM))
    assert pair.h.scale(-pair.denominator).is_close(atom.profile, rtol=1e-14)


def test_approximation_residual_is_decomposed_exactly(near_case):
    _, _, approx = near_case
    target = approx.residual.total()
    error = approx.decomposition.reconstruct().max_abs_difference(target)
    assert error <= 1e-12 * target.sup_norm
    assert approx.relative_defect >= 0.0


def test_residual_matches_atom_minus_pi_form(near_case):
    atom, _, approx = near_case
    pair = approx.pair
    diff = atom.profile - pi_form(pair.g, pair.h, LAM, SPEC, cells=16)
    # 采样偏差以常数形式从 y₀ 一侧扣除；diff 由 O(‖a‖) 量相减得到，误差按 ‖a‖ 计
    shift = approx.cancellation_defect / measure(Interval(pair.y0, pair.radius), LAM)
    expected = approx.residual.total() + StepFunction.indicator(pair.y0 - pair.radius, pair.y0 + pair.radius, shift)
    assert diff.max_abs_difference(expected) <= 1e-10 * max(diff.sup_norm, atom.profile.sup_norm)


def test_certified_eps_below_epsilon_on_battery():
    p = 0.9
    schedule = select_schedule(LAM, p, epsilon=1.0 / 16.0, constants=CONSTANTS)
    config = ExperimentConfig(symbol_count=1, resolution=64)
    battery = generate_battery(11, LAM, p, config, SPEC, size=8, schedule=schedule)
    assert {tag.value for tag in battery.cases} == {"a", "b"}
    for atom, case in zip(battery.atoms, battery.cases):
        approx = approximate_atom(atom, schedule, LAM, SPEC, cells=32)
        assert approx.pair.case is case
        assert 0.0 < approx.certified_eps < schedule.epsilon


def test_approximate_atom_rejects_mismatched_p():
    atom = standard_atom(Interval(1.0, 0.25), 0.9, LAM)
    with pytest.raises(DomainError):
        approximate_atom(atom, small_schedule(), LAM, SPEC, cells=16)


# ==================== 逐层弱分解 ====================

def test_weak_factorize_single_level(near_case):
    atom, schedule, approx = near_case
    f = AtomicDecomposition.single(atom)
    result = weak_factorize(f, schedule, 1, LAM, SPEC, cells=16)
    assert len(result.levels) == 1
    assert result.residual_bounds[0] == pytest.approx(1.0)
    assert result.residual_bounds[1] == pytest.approx(approx.certified_eps, rel=1e-12)
    assert result.levels[0].processed == 1 and result.levels[0].carried == 0
    assert result.total_tally == pytest.approx(1.0)
    assert result.factorization_norm == pytest.approx(approx.pair.product_norm, rel=1e-12)
    ledger = result.to_ledger()
    assert ledger["levels"][0]["pairs"][0]["case"] == "a"


def test_weak_factorize_parallel_matches_sequential():
    schedule = small_schedule()
    f = AtomicDecomposition([
        AtomTerm(1.0, standard_atom(Interval(1.0, 0.25), 1.0, LAM)),
        AtomTerm(-0.5, standard_atom(Interval(3.0, 0.5), 1.0, LAM)),
    ], 1.0)
    sequential = weak_factorize(f, schedule, 1, LAM, SPEC, workers=1, cells=16)
    parallel = weak_factorize(f, schedule, 1, LAM, SPEC, workers=2, cells=16)
    assert np.allclose(sequential.residual_bounds, parallel.residual_bounds, rtol=1e-9)
    assert [a for a, _ in sequential.levels[0].pairs] == [a for a, _ in parallel.levels[0].pairs]


def test_weak_factorize_edge_cases():
    schedule = small_schedule()
    empty = weak_factorize(AtomicDecomposition([], 1.0), schedule, 3, LAM, SPEC)
    assert empty.levels == [] and empty.residual_bounds == [0.0]
    assert empty.eC_ratio == 0.0 and empty.max_certified_eps == 0.0
    with pytest.raises(DomainError):
        weak_factorize(AtomicDecomposition.single(standard_atom(Interval(1.0, 0.25), 1.0, LAM)), schedule, 0, LAM)


@pytest.fixture(scope="module")
def two_levels():
    p = 0.9
    schedule = select_schedule(LAM, p, epsilon=0.5, constants=CONSTANTS)
    f = AtomicDecomposition.single(standard_atom(Interval(1.0, 0.25), p, LAM))
    return weak_factorize(f, schedule, 2, LAM, SPEC, atoms_per_level=256, cells=16)


def test_weak_factorize_two_real_levels(two_levels):
    bounds = two_levels.residual_bounds
    assert len(two_levels.levels) == 2
    assert bounds[0] > bounds[1] > bounds[2] > 0.0
    second = two_levels.levels[1]
    assert second.processed > 1 and second.carried == 0
    assert all(eps < two_levels.schedule.epsilon for lv in two_levels.levels for eps in lv.certified_eps)


def test_pairing_check_improves_with_levels(two_levels):
    hi = 2.0 * max(pair.y0 + pair.radius for lv in two_levels.levels for _, pair in lv.pairs)
    b = canonical_symbol(LAM, 1.0 / 0.9 - 1.0, 0.0, hi, 64)
    check = pairing_check(b, two_levels, LAM, SPEC)
    assert check.lhs != 0.0
    assert len(check.partial_sums) == 2
    assert check.discrepancies[1] < check.discrepancies[0] < 1.0


def _fake_approximation(factor):
    def fake(atom, schedule, lam, spec=None, cells=64):
        return SimpleNamespace(
            decomposition=AtomicDecomposition.single(atom, factor),
            pair=None,
            certified_eps=factor,
        )
    return fake


def test_divergence_detected(monkeypatch):
    monkeypatch.setattr(factorization, "approximate_atom", _fake_approximation(2.0))
    f = AtomicDecomposition.single(standard_atom(Interval(1.0, 0.25), 1.0, LAM))
    with pytest.raises(DivergenceDetected) as info:
        weak_factorize(f, small_schedule(), 5, LAM, SPEC)
    assert info.value.ratio == pytest.approx(2.0)


def test_atoms_per_level_budget(monkeypatch):
    monkeypatch.setattr(factorization, "approximate_atom", _fake_approximation(0.1))
    atoms = [standard_atom(Interval(c, 0.25), 1.0, LAM) for c in (1.0, 2.0, 3.0)]
    f = AtomicDecomposition([AtomTerm(c, a) for c, a in zip((3.0, 1.0, 2.0), atoms)], 1.0)
    result = weak_factorize(f, small_schedule(), 1, LAM, SPEC, atoms_per_level=2)
    level = result.levels[0]
    assert level.processed == 2 and level.carried == 1
    # 最小的 α = 1 原样保留，其余缩小 10 倍
    assert sorted(result.residual.coefficients.tolist()) == pytest.approx([0.2, 0.3, 1.0])
    assert result.residual_bounds[1] == pytest.approx(hp_norm_upper(result.residual))


def test_floor_tolerance_stops_early(monkeypatch):
    monkeypatch.setattr(factorization, "approximate_atom", _fake_approximation(1e-8))
    f = AtomicDecomposition.single(standard_atom(Interval(1.0, 0.25), 1.0, LAM))
    result = weak_factorize(f, small_schedule(), 5, LAM, SPEC, floor_tolerance=1e-6)
    assert len(result.levels) == 1


# ==================== 对偶配对 ====================

def test_symbol_pairing_with_constant_symbol_vanishes():
    f = AtomicDecomposition.single(standard_atom(Interval(1.0, 0.25), 1.0, LAM))
    b = constant_symbol(2.0, LAM, 0.2, 0.0, 5.0, 16)
    assert symbol_pairing(b, f, LAM, SPEC) == 0.0


def test_pi_dual_estimate_skips_zero_seminorm():
    g, h = StepFunction.indicator(1.0, 2.0), StepFunction.indicator(4.0, 5.0)
    flat = constant_symbol(2.0, LAM, 0.2, 0.0, 6.0, 16)
    assert pi_dual_estimate(g, h, [flat], LAM, SPEC) == 0.0
    slope = canonical_symbol(LAM, 0.2, 0.0, 6.0, 32)
    assert pi_dual_estimate(g, h, [flat, slope], LAM, SPEC) >= 0.0
