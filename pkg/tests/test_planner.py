import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzphase.core import ADAPTIVE_MLE, BoundConstants, InfeasibleError, SchedulePlan, total_probes
from ghzphase.planner import (
    MOVES,
    RampParams,
    apply_redistribution,
    mse_bound_counts,
    mse_bound_ramp,
    mse_bound_raw,
    mse_bound_redistributed,
    mse_bound_relaxed,
    mse_bound_vs_n,
    optimize_prefactor,
    piecewise_bound,
    piecewise_k,
    prefactor_bound,
    qfi,
    qfi_bounds_redistributed,
    qfi_extra,
    qfi_inverse_vs_n,
    qfi_ramp_base,
    qfi_ratio_bound,
    ramp,
    redistribute,
    redistribution_gap,
    redistribution_range,
    resource_bounds,
    target_ramp,
    upgrade_point,
)

REF = BoundConstants.numeric()
TWO_PI_3_SQ = (2 * math.pi / 3) ** 2


def test_gamma_from_reference_constants():
    assert REF.gamma == pytest.approx(4.0835, abs=5e-4)


def test_ramp_k3_example():
    plan = ramp(RampParams(3, 11.0, REF))
    assert [s.nu0 for s in plan.steps] == [19, 15, 11]
    assert [s.nuplus for s in plan.steps] == [19, 15, 11]
    assert total_probes(plan) == 186


@pytest.mark.parametrize("x", [1.0, 7.5, 11.0, 12.49])
def test_ramp_single_step(x):
    plan = ramp(RampParams(1, x, REF))
    assert plan.steps[0].nu0 == math.floor(x + 0.5)


def test_ramp_feasible_up_to_k40():
    for k in range(1, 41):
        plan = ramp(RampParams(k, 11.0, REF))
        assert all(s.nu0 >= 11 for s in plan.steps)


def test_ramp_infeasible():
    with pytest.raises(InfeasibleError):
        ramp(RampParams(3, 0.2, REF))
    with pytest.raises(ValueError):
        RampParams(0, 11.0)


def test_resource_bounds_examples():
    rb = resource_bounds(RampParams(10, 11.0, REF))
    assert rb.n_upper == pytest.approx(15.5835 * 2048, rel=1e-5)
    assert rb.n_lower <= rb.exact <= rb.n_upper + 0.0
    assert rb.slack == rb.exact - rb.n_upper
    rb2 = resource_bounds(RampParams(10, 12.0, REF))
    assert rb2.n_upper - rb.n_upper == pytest.approx(2 ** 11)
    assert rb2.n_lower - rb.n_lower == pytest.approx(2 ** 11)
    big = resource_bounds(RampParams(15, 18.3, REF))
    assert big.n_upper == pytest.approx(22.88 * 2 ** 16, rel=1e-3)
    assert big.n_upper == pytest.approx(1.5e6, rel=0.01)


@pytest.mark.parametrize("k", [1, 3, 6, 12])
def test_resource_slack_is_order_k(k):
    rb = resource_bounds(RampParams(k, 11.0, REF))
    assert abs(rb.exact - 0.5 * (rb.n_lower + rb.n_upper)) <= 2 * REF.gamma * (k + 1) + 2 * 11 + 2 ** (k + 1)


def test_mse_bound_raw_limits():
    for k in (1, 4, 9):
        plan = SchedulePlan.symmetric([10 ** 6] * k)
        assert mse_bound_raw(plan, REF) == pytest.approx(TWO_PI_3_SQ / 4 ** k, rel=1e-12)
    c = BoundConstants(4.0, 1.3)
    assert mse_bound_raw(SchedulePlan.symmetric([0]), c) == pytest.approx(TWO_PI_3_SQ * 64.25, rel=1e-14)


def test_mse_bound_counts_base2_formula():
    rng = np.random.default_rng(0)
    nu = rng.uniform(2, 30, 6)
    sizes = 2.0 ** np.arange(6)
    direct = TWO_PI_3_SQ * (4.0 ** -6 + 16 * np.sum(REF.a_const * 4.0 ** -np.arange(6) * REF.c_const ** -nu))
    assert mse_bound_counts(sizes, nu, nu, REF) == pytest.approx(direct, rel=1e-13)


def test_mse_bound_counts_adaptive_last_step():
    sizes = [1, 2, 4]
    val = mse_bound_counts(sizes, [20, 20, 500], [20, 20, 500], REF, last_step_mode=ADAPTIVE_MLE)
    expected = 1 / (16 * 1000) + TWO_PI_3_SQ * 16 * REF.a_const * (REF.c_const ** -20) * (1 + 1 / 4)
    assert val == pytest.approx(expected, rel=1e-12)


def test_fig7_ideal_bound():
    params = RampParams(10, 68.7, REF)
    assert mse_bound_ramp(params) == pytest.approx(4.18e-6, rel=5e-3)
    raw = mse_bound_raw(ramp(params), REF)
    # the K = 10 floor (2pi/3)**2 / 4**10 is already 4.1833e-6, so 4.18e-6 is a 3-digit rounding
    assert raw == pytest.approx(4.18e-6, rel=1e-3)
    assert raw <= mse_bound_ramp(params)


def test_ramp_closed_form_limit():
    assert mse_bound_ramp(RampParams(5, 1e4, REF)) == pytest.approx(TWO_PI_3_SQ / 4 ** 5, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 12, 16, 20])
def test_dominance_chain(k):
    for x in np.linspace(1, 100, 45):
        params = RampParams(k, float(x), REF)
        assert mse_bound_raw(ramp(params), REF) <= mse_bound_ramp(params) * (1 + 1e-12)


def test_prefactor_reference_value():
    assert prefactor_bound(11, REF) == pytest.approx((24.26 * math.pi) ** 2, rel=5e-3)
    x, _ = optimize_prefactor(REF, 1, 100)
    assert x == 11


def test_prefactor_error_free_limit():
    c = BoundConstants(0.0, REF.c_const)
    xs = np.arange(1, 50)
    vals = prefactor_bound(xs, c)
    np.testing.assert_allclose(vals, 4 * TWO_PI_3_SQ * (c.gamma + xs + 0.5) ** 2, rtol=1e-13)
    assert np.all(np.diff(vals) > 0)


def test_qfi_ratio_reference_value():
    assert qfi_ratio_bound(11, 4.0835) == pytest.approx((3.17 * math.pi) ** 2, rel=5e-3)


def test_qfi_ramp_base_bounds_plan_qfi():
    # closed form sums 2 (x_j + 1/2) 4**(j-1) with the small O(K) terms dropped
    for k in (4, 6, 10):
        params = RampParams(k, 11.0, REF)
        upper = sum(2 * (v + 0.5) * 4 ** j for j, v in enumerate(params.x_values()))
        assert qfi(ramp(params)) <= upper <= qfi_ramp_base(params)
        assert qfi_ramp_base(params) == pytest.approx(upper, rel=1e-2)


def test_mse_bound_vs_n():
    k = 6
    assert mse_bound_vs_n(1e9, k, REF) == pytest.approx(TWO_PI_3_SQ / 4 ** k, rel=1e-9)
    with pytest.raises(InfeasibleError):
        mse_bound_vs_n(100, k, REF)
    arr = mse_bound_vs_n(np.array([1e4, 1e5]), k, REF)
    assert arr.shape == (2,) and arr[0] > arr[1]


def test_piecewise_monotone():
    n = np.geomspace(2e2, 1e8, 4000)
    with np.errstate(invalid="ignore"):
        b = piecewise_bound(n, REF)
    ok = ~np.isnan(b)
    assert ok.sum() > 3900
    assert np.all(np.diff(b[ok]) <= 1e-15 * b[ok][:-1])


def test_piecewise_k_breakpoints():
    u = upgrade_point(REF).u_star
    for k in (3, 7, 12):
        at = u * 2 ** (k + 1)
        assert piecewise_k(at, u) == k
        assert piecewise_k(at * (1 + 1e-9), u) == k + 1


def test_upgrade_point_independent_of_k():
    ups = [upgrade_point(REF, k) for k in (5, 10, 20)]
    assert all(u.u_star == pytest.approx(ups[0].u_star, rel=1e-12) for u in ups)
    up = ups[1]
    # both bounds coincide at N*
    b_k = mse_bound_vs_n(up.n_star, 10, REF)
    b_k1 = mse_bound_vs_n(up.n_star, 11, REF)
    assert b_k == pytest.approx(b_k1, rel=1e-9)
    assert up.x_k - up.x_k1 == pytest.approx(up.u_star / 2)


def test_qfi_inverse_vs_n_shape():
    v = qfi_inverse_vs_n(np.array([1e3, 1e6]), 6, REF.gamma)
    assert v[0] > v[1] > 0
    assert np.isnan(qfi_inverse_vs_n(10.0, 6, REF.gamma))


# --- redistribution ---------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4, 6])
def test_redistribute_binary_example(k):
    red = redistribute(10, k)
    assert red.delta_nu == (1, 0, 1) + (0,) * (k - 3)
    assert red.extra_type0 == 0


def test_redistribute_zero_odd_and_endpoint():
    assert redistribute(0, 4).delta_nu == (0, 0, 0, 0)
    odd = redistribute(11, 4)
    assert odd.delta_nu == (1, 0, 1, 0) and odd.extra_type0 == 1
    assert redistribute(32, 4).delta_nu == (2, 1, 1, 1)


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_redistribute_spends_exactly(k):
    lo, hi = redistribution_range(k)
    for dn in range(lo, hi + 1):
        red = redistribute(dn, k)
        assert red.probe_change() == dn
        if dn < 0:
            assert red.delta_nu[-1] == 0
            assert all(d <= 0 for d in red.delta_nu)
            assert red.level in (0, 1)


def test_redistribute_rejects_out_of_range():
    lo, hi = redistribution_range(3)
    for dn in (lo - 1, hi + 1):
        with pytest.raises(InfeasibleError):
            redistribute(dn, 3)
    with pytest.raises(InfeasibleError):
        redistribute(-2, 1)


def _search(k, dn, top_fixed):
    span = range(-3, dn // 2 + 3) if dn >= 0 else range(dn // 2 - 3, 3)
    for d in itertools.product(span, repeat=k):
        if top_fixed and d[-1] != 0:
            continue
        if 2 * sum(v * 2 ** j for j, v in enumerate(d)) == dn:
            yield d


@pytest.mark.parametrize("k", [2, 3, 4])
def test_negative_redistribution_optimal_relaxed(k):
    params = RampParams(k, 11.0, REF)
    lo, _ = redistribution_range(k)
    for dn in range(lo, 0, 2):
        red = redistribute(dn, k)
        best = min(mse_bound_relaxed(params, d) for d in _search(k, dn, True))
        assert mse_bound_relaxed(params, red.delta_nu) <= best * (1 + 1e-12)


def test_apply_redistribution():
    params = RampParams(4, 11.0, REF)
    plan = ramp(params)
    red = redistribute(13, 4)
    new = apply_redistribution(plan, red)
    assert total_probes(new) == total_probes(plan) + 13
    assert new.steps[0].nu0 == plan.steps[0].nu0 + 1 + red.delta_nu[0]
    assert mse_bound_raw(new, REF) < mse_bound_raw(plan, REF)


@pytest.mark.parametrize("k, x", [(3, 11.0), (6, 9.0), (10, 20.0)])
def test_redistributed_closed_form(k, x):
    params = RampParams(k, x, REF)
    assert mse_bound_redistributed(params, 0) == pytest.approx(mse_bound_ramp(params), rel=1e-14)
    vals = [mse_bound_redistributed(params, dn) for dn in range(0, 2 * 2 ** k + 1, 2)]
    assert np.all(np.diff(vals) < 0)
    assert min(vals) == vals[-1]
    gap = redistribution_gap(params)
    for dn in range(0, 2 * 2 ** k, 2):
        relaxed = mse_bound_relaxed(params, redistribute(dn, k).delta_nu)
        assert vals[dn // 2] - relaxed == pytest.approx(gap, rel=1e-6, abs=1e-17)
    with pytest.raises(InfeasibleError):
        mse_bound_redistributed(params, -2)


def test_qfi_examples():
    k = 5
    for j in range(k):
        bits = [0] * k
        bits[j] = 1
        dn = 2 * 2 ** j
        assert qfi_extra(bits) == dn ** 2 / 2
    dn = 2 * (2 ** k - 1)
    assert qfi_extra([1] * k) == pytest.approx(2 / 3 * (4 ** k - 1))
    assert qfi_extra([1] * k) >= dn ** 2 / 6
    lo, hi = qfi_bounds_redistributed(RampParams(k, 11.0, REF), dn)
    base = qfi_ramp_base(RampParams(k, 11.0, REF))
    assert lo <= base + qfi_extra([1] * k) <= hi


def test_qfi_of_plan():
    plan = SchedulePlan.symmetric([19, 15, 11])
    assert qfi(plan) == 2 * (19 + 15 * 4 + 11 * 16)


@pytest.mark.parametrize("target", [400, 1000, 5000, 31000])
def test_target_ramp_hits_budget(target):
    plan, red = target_ramp(4 if target < 2000 else 8, target, REF)
    assert total_probes(plan) == target
    assert red.delta_n >= 0


def test_target_ramp_infeasible():
    with pytest.raises(InfeasibleError):
        target_ramp(10, 50, REF)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([3, 4, 5, 6]), st.floats(3, 40), st.lists(st.integers(-1, 3), min_size=6, max_size=6),
       st.sampled_from(sorted(MOVES)), st.integers(0, 5))
def test_moves_strictly_decrease(k, x, d, name, j):
    params = RampParams(k, x, REF)
    d = d[:k]
    new = MOVES[name](d, j)
    if new is None:
        return
    assert 2 * sum(v * 2 ** i for i, v in enumerate(new)) == 2 * sum(v * 2 ** i for i, v in enumerate(d))
    assert mse_bound_relaxed(params, new) < mse_bound_relaxed(params, d)


@pytest.mark.parametrize("d, j, name, out", [
    ([3, 0, 0], 0, "fuse", [1, 1, 0]),
    ([0, 2, 0], 0, "split", [2, 1, 0]),
    ([2, 1, 1, 0], 0, "carry", [0, 0, 0, 1]),
    ([-1, 0, 0, 1], 0, "borrow", [1, 1, 1, 0]),
    ([1, 0], 0, "fuse", None),
    ([2, 1, 1], 0, "carry", None),
])
def test_move_examples(d, j, name, out):
    assert MOVES[name](d, j) == out
