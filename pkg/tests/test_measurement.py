import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzphase.core import TWO_PI, StepSpec, circle_distance, wrap
from ghzphase.measurement import (
    MeasurementBatch,
    ShiftedBatch,
    estimate_from_counts,
    golden_maximize,
    odd_count_probability,
    parity_count_pmf,
    parity_counts,
    quadrature_mle,
    quadrature_shifts,
    sample_batch,
    sample_batch_parity,
    sample_shifted,
    shifted_mle,
    step_estimate,
    type0_probability,
    typeplus_probability,
)


@pytest.mark.parametrize("theta, m, p", [(0, 1, 1.0), (math.pi / 2, 1, 0.5), (math.pi / 2, 2, 0.0)])
def test_type0_examples(theta, m, p):
    assert type0_probability(theta, m) == pytest.approx(p, abs=1e-15)


@pytest.mark.parametrize("theta, m, p", [(0, 1, 0.5), (math.pi / 2, 1, 1.0), (3 * math.pi / 2, 1, 0.0)])
def test_typeplus_examples(theta, m, p):
    assert typeplus_probability(theta, m) == pytest.approx(p, abs=1e-15)


@given(st.floats(-50, 50), st.integers(1, 64))
def test_probabilities_in_unit_interval(theta, m):
    for p in (type0_probability(theta, m), typeplus_probability(theta, m)):
        assert 0.0 <= p <= 1.0


def test_batch_validation():
    with pytest.raises(ValueError):
        MeasurementBatch(1, 6, 5, 0, 5)
    with pytest.raises(ValueError):
        ShiftedBatch(1, (0.0, 0.1), (1,))


@pytest.mark.parametrize("theta, expected", [(0.0, 5), (math.pi, 0)])
def test_sample_batch_deterministic_ends(theta, expected):
    for seed in range(20):
        assert sample_batch(theta, StepSpec(1, 5, 5), seed).a0 == expected


def test_sample_batch_law_of_large_numbers():
    nu = 10 ** 6
    b = sample_batch(math.pi / 2, StepSpec(1, nu, 1), seed=3)
    assert abs(b.f0 - 0.5) <= 0.002


def test_sample_batch_deterministic_in_seed():
    step = StepSpec(4, 30, 30)
    assert sample_batch(1.1, step, 5, 2) == sample_batch(1.1, step, 5, 2)
    assert sample_batch_parity(1.1, step, 5, 2) == sample_batch_parity(1.1, step, 5, 2)
    assert sample_batch(1.1, step, 5, 2) != sample_batch(1.1, step, 6, 2)


@pytest.mark.parametrize("f0, fplus, expected", [(1.0, 0.5, 0.0), (0.5, 1.0, math.pi / 2), (0.0, 0.5, math.pi)])
def test_step_estimate_examples(f0, fplus, expected):
    b = MeasurementBatch(1, int(f0 * 10), 10, int(fplus * 10), 10)
    assert step_estimate(b) == pytest.approx(expected, abs=1e-12)


def test_estimate_degenerate_and_missing_quadrature():
    assert float(estimate_from_counts(5, 10, 5, 10)) == 0.0
    # no Type-+ shots: the sine axis contributes 0
    assert float(estimate_from_counts(0, 4, 0, 0)) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        step_estimate(MeasurementBatch(1, 1, 2, 0, 0))


def test_estimate_vectorized_and_canonical():
    a0 = np.array([10, 0, 5, 5])
    ap = np.array([5, 5, 10, 0])
    out = estimate_from_counts(a0, 10, ap, 10)
    np.testing.assert_allclose(out, [0, math.pi, math.pi / 2, 3 * math.pi / 2], atol=1e-12)
    assert np.all((out >= 0) & (out < TWO_PI))


def test_step_estimate_consistency():
    theta, m, nu = 0.7, 4, 10 ** 6
    hits = 0
    for seed in range(100):
        est = step_estimate(sample_batch(theta, StepSpec(m, nu, nu), seed))
        hits += circle_distance(est, m * theta) < 0.01
    assert hits / 100 >= 0.999


# --- parity backend --------------------------------------------------------


def _statevector_count_law(theta, m):
    """Independent oracle: GHZ state, Hadamard on every probe, last readout relabeled."""
    dim = 2 ** m
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1 / math.sqrt(2)
    psi[-1] = np.exp(1j * m * theta) / math.sqrt(2)
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    psi = reduce(np.kron, [h] * m) @ psi
    probs = np.abs(psi) ** 2
    ones = np.array([bin(i).count("1") for i in range(dim)])
    last = np.arange(dim) & 1
    k = ones - last + (1 - last)  # relabel the last probe's outcome
    return np.bincount(k, weights=probs, minlength=m + 1)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5, 8])
@pytest.mark.parametrize("theta", [0.0, 0.3, 1.9, math.pi, 5.1])
def test_parity_pmf_matches_statevector(theta, m):
    np.testing.assert_allclose(parity_count_pmf(theta, m), _statevector_count_law(theta, m), atol=1e-12)


def test_odd_count_equals_p0_on_grid():
    thetas = TWO_PI * np.arange(24) / 24
    for theta in thetas:
        for m in (1, 2, 4, 8):
            assert abs(odd_count_probability(theta, m) - type0_probability(theta, m)) <= 1e-12
            assert math.fsum(parity_count_pmf(theta, m)) == pytest.approx(1.0, abs=1e-12)


def test_parity_theta_zero_m2_always_outcome0():
    b = sample_batch_parity(0.0, StepSpec(2, 200, 0), seed=11)
    assert b.a0 == 200


@pytest.mark.parametrize("theta", [0.2, 1.3, 4.0])
def test_parity_m1_identical_to_collective(theta):
    step = StepSpec(1, 50, 50)
    for seed in range(5):
        assert sample_batch_parity(theta, step, seed) == sample_batch(theta, step, seed)


def test_parity_odd_frequency_example():
    shots = 10 ** 5
    k = parity_counts(math.pi / 3, 4, shots, seed=17)
    assert np.mean(k % 2) == pytest.approx(0.25, abs=0.005)
    assert k.min() >= 0 and k.max() <= 4


def test_parity_count_distribution_matches_pmf():
    shots = 200_000
    k = parity_counts(0.9, 3, shots, seed=8)
    emp = np.bincount(k, minlength=4) / shots
    pmf = parity_count_pmf(0.9, 3)
    sigma = np.sqrt(pmf * (1 - pmf) / shots)
    assert np.all(np.abs(emp - pmf) <= 5 * sigma + 1e-12)


# --- shifted measurement and MLE -------------------------------------------


def test_sample_shifted_examples():
    theta, m = 1.2, 3
    b = sample_shifted(theta, m, [theta] * 40, seed=1)
    assert all(o == 1 for o in b.outcomes)
    b = sample_shifted(theta, m, [theta - math.pi / (2 * m)] * 20000, seed=2)
    assert np.mean(b.outcomes) == pytest.approx(0.5, abs=0.015)
    assert len(b.shifts) == len(b.outcomes)


def test_quadrature_shifts_policy():
    s = quadrature_shifts(1.0, 4, 3, 2)
    np.testing.assert_allclose(s, [1 - math.pi / 8] * 3 + [1.0] * 2)


def test_golden_maximize_vectorized():
    peaks = np.array([0.3, -1.0, 2.5])
    x = golden_maximize(lambda t: -(t - peaks) ** 2, np.full(3, -3.0), np.full(3, 3.0), iters=80)
    np.testing.assert_allclose(x, peaks, atol=1e-9)


def test_quadrature_mle_noiseless_counts():
    m, center, nu = 8, 2.0, 1000
    for offset in (-0.05, 0.0, 0.07):
        theta = center + offset / m
        a = nu * type0_probability(theta - (center - math.pi / (2 * m)), m)
        b = nu * type0_probability(theta - center, m)
        est = quadrature_mle(a, nu, b, nu, m, center, math.pi / (3 * m))
        assert circle_distance(float(est[0]), theta) < 1e-7


def test_quadrature_mle_stays_in_window():
    m, center, w = 4, 1.0, math.pi / 12
    est = quadrature_mle([0, 30, 15], 30, [30, 0, 0], 30, m, center, w)
    assert np.all(circle_distance(est, center) <= w + 1e-12)


def test_shifted_mle_agrees_with_quadrature_mle():
    theta, m, center = 0.61, 4, 0.6
    shifts = quadrature_shifts(center, m, 500, 500)
    batch = sample_shifted(theta, m, shifts, seed=21)
    o = np.asarray(batch.outcomes)
    q = quadrature_mle(o[:500].sum(), 500, o[500:].sum(), 500, m, center, math.pi / (3 * m))
    s = shifted_mle(batch, center, math.pi / (3 * m))
    assert circle_distance(float(q[0]), float(s)) < 1e-6
    assert circle_distance(float(s), theta) < 0.02


@settings(max_examples=30, deadline=None)
@given(st.floats(0, TWO_PI - 1e-9), st.sampled_from([1, 2, 4, 8]))
def test_noiseless_estimate_recovers_phase(theta, m):
    nu = 1000
    a0 = nu * type0_probability(theta, m)
    ap = nu * typeplus_probability(theta, m)
    est = float(estimate_from_counts(a0, nu, ap, nu))
    assert circle_distance(est, float(wrap(m * theta))) < 1e-9
