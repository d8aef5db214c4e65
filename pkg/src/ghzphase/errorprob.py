"""Per-step failure probability of the atan2 estimator.

A step fails when its estimate of ``M*theta`` lands at circle distance at
least ``pi/n`` from the truth. The probability is computed exactly by
enumerating the ``(nu+1)**2`` count pairs, and bounded analytically with
Hoeffding's inequality on a box of half-width ``eps`` around ``(p0, p+)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import BoundConstants, circle_distance, wrap
from .measurement import estimate_from_counts, type0_probability, typeplus_probability


def binomial_pmf(nu: int, p: float) -> np.ndarray:
    """``Binom(nu, k; p)`` for ``k = 0..nu``, evaluated in log space."""
    k = np.arange(nu + 1)
    logc = gammaln(nu + 1) - gammaln(k + 1) - gammaln(nu - k + 1)
    if p <= 0.0:
        return (k == 0).astype(float)
    if p >= 1.0:
        return (k == nu).astype(float)
    return np.exp(logc + k * math.log(p) + (nu - k) * math.log1p(-p))


def _failure_mask(theta: float, nu: int, threshold: float) -> np.ndarray:
    a = np.arange(nu + 1)
    est = estimate_from_counts(a[:, None], nu, a[None, :], nu)
    return np.asarray(circle_distance(est, wrap(theta))) >= threshold


def exact_failure_probability(theta, nu: int, threshold: float = math.pi / 3) -> float:
    """Exact probability that one step with ``nu`` shots per type fails.

    ``theta`` plays the role of ``M*theta``. Rows of the enumeration index
    the Type-0 count, columns the Type-+ count.
    """
    if nu < 1:
        raise ValueError("nu must be at least 1")
    theta = float(theta)
    w0 = binomial_pmf(nu, float(type0_probability(theta, 1)))
    wp = binomial_pmf(nu, float(typeplus_probability(theta, 1)))
    mask = _failure_mask(theta, nu, threshold)
    return math.fsum(np.outer(w0, wp)[mask])


def worst_case_probabilities(nu_max: int, angles, threshold: float = math.pi / 3) -> np.ndarray:
    """Maximum over ``angles`` of the exact failure probability, for ``nu = 1..nu_max``."""
    angles = np.asarray(angles, dtype=float)
    return np.array([
        max(exact_failure_probability(t, nu, threshold) for t in angles)
        for nu in range(1, nu_max + 1)
    ])


@dataclass(frozen=True)
class CalibrationResult:
    nu_max: int
    angle_count: int
    worst_probs: tuple  # index 0 is nu = 1
    fitted: BoundConstants
    nu_min: int = 2

    def bound(self, nu) -> np.ndarray:
        return self.fitted.a_const * np.power(self.fitted.c_const, -np.asarray(nu, dtype=float))


def fit_exponential(worst, nus, a_cap: float = 1.0, iters: int = 200) -> tuple[float, float]:
    """Largest ``C`` for which some ``A <= a_cap`` has ``A*C**-nu >= worst`` on ``nus``.

    Returns ``(A, C)`` with the minimal admissible ``A``. All-zero input
    returns ``(0, inf)``.
    """
    worst = np.asarray(worst, dtype=float)
    nus = np.asarray(nus, dtype=float)
    if not np.any(worst > 0):
        return 0.0, math.inf
    pos = worst > 0
    lw, ln = np.log(worst[pos]), nus[pos]

    def min_a(log_c):
        return float(np.max(lw + ln * log_c))  # log of the minimal A

    log_cap = math.log(a_cap)
    lo = 0.0
    if min_a(lo) > log_cap:
        raise ValueError("no envelope with A <= a_cap exists")
    hi = 1.0
    while min_a(hi) <= log_cap:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if min_a(mid) <= log_cap:
            lo = mid
        else:
            hi = mid
    return math.exp(min_a(lo)), math.exp(lo)


def calibrate(nu_max: int = 80, angle_count: int = 100, threshold: float = math.pi / 3,
              nu_min: int = 2, a_cap: float = 1.0, angles=None) -> CalibrationResult:
    """Worst-case exact failure probabilities and a dominating ``A*C**-nu`` fit.

    The fit maximizes ``C`` on ``nu in [nu_min, nu_max]`` subject to
    ``A <= a_cap``; ``nu = 1`` is excluded by default because the
    envelope there would be dictated by a single near-vacuous point.
    """
    if nu_max < 2:
        raise ValueError("nu_max must be at least 2")
    if angles is None:
        angles = 2.0 * math.pi * np.arange(angle_count) / angle_count
    angles = np.asarray(angles, dtype=float)
    worst = worst_case_probabilities(nu_max, angles, threshold)
    nus = np.arange(1, nu_max + 1)
    sel = nus >= nu_min
    a, c = fit_exponential(worst[sel], nus[sel], a_cap)
    n = max(2, round(math.pi / threshold)) if threshold > 0 else 2
    fitted = BoundConstants(a, c, base=max(2, n - 1))
    return CalibrationResult(nu_max, len(angles), tuple(float(w) for w in worst), fitted, nu_min)


def hoeffding_bound(nu, eps: float):
    """``4 exp(-2 nu eps**2)``: both quadratures deviate by less than ``eps``."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return 4.0 * np.exp(-2.0 * np.asarray(nu, dtype=float) * eps * eps)


def analytic_c(n: int) -> float:
    """Hoeffding base ``C = exp(sin(pi/n)**2 / 4)`` for the ``pi/n`` window."""
    s = math.sin(math.pi / n)
    return math.exp(0.25 * s * s)


def verify_epsilon(eps: float, threshold: float = math.pi / 3, grid: int = 3600,
                   tol: float = 1e-12) -> bool:
    """True iff every frequency box of half-width ``eps`` keeps the estimate within ``threshold``.

    In the plane ``(2f0 - 1, 2f+ - 1)`` the box has half-width ``2 eps``
    around ``(cos theta, sin theta)``. The angular deviation over a convex
    box not containing the origin is extremal at a corner, so checking the
    four corners and origin exclusion on a ``grid`` of angles suffices.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    th = 2.0 * math.pi * np.arange(grid) / grid
    c, s = np.cos(th), np.sin(th)
    d = 2.0 * eps
    if np.any((np.abs(c) <= d) & (np.abs(s) <= d)):
        return False
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            dev = circle_distance(np.arctan2(s + sy * d, c + sx * d), th)
            if np.any(dev > threshold + tol):
                return False
    return True


def max_epsilon(threshold: float = math.pi / 3, grid: int = 3600, lo: float = 1e-3,
                hi: float = 0.7, tol: float = 1e-10) -> tuple[float, float]:
    """Bisection bracket ``(lo, hi)`` of the largest ``eps`` accepted by `verify_epsilon`."""
    if not verify_epsilon(lo, threshold, grid):
        raise ValueError("lower end of the bracket is not admissible")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verify_epsilon(mid, threshold, grid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def epsilon_closed_form(n: int) -> float:
    """Largest admissible half-width for the ``pi/n`` window, ``sin(pi/n) / (2 sqrt 2)``."""
    return math.sin(math.pi / n) / (2.0 * math.sqrt(2.0))
