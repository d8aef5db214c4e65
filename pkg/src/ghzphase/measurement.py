"""Measurement statistics of phase-imprinted GHZ states.

Two readouts are modeled. The *collective* backend draws one Bernoulli
outcome per shot. The *parity* backend measures each of the ``M`` probes
separately and reports outcome 0 when the number of 1s is odd.

Shot layout
-----------
Within a step the ``nu0`` Type-0 shots come first, then the ``nuplus``
Type-+ shots. Shot ``i`` consumes uniform ``i`` of the outcome stream, and
its outcome is 0 iff that uniform is below the outcome-0 probability. The
parity backend reuses the same uniform for the parity of the probe string
and draws the remaining ``M - 1`` probe bits from the spectator stream, so
both backends see an identical outcome sequence for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .core import (
    STREAM_OUTCOME,
    STREAM_SPECTATOR,
    Angle,
    StepSpec,
    uniform_block,
    wrap,
)


def type0_probability(theta, m):
    """Outcome-0 probability ``(1 + cos(m*theta)) / 2``."""
    return 0.5 * (1.0 + np.cos(np.multiply(m, theta)))


def typeplus_probability(theta, m):
    """Outcome-+ probability ``(1 + sin(m*theta)) / 2``."""
    return 0.5 * (1.0 + np.sin(np.multiply(m, theta)))


@dataclass(frozen=True)
class MeasurementBatch:
    """Outcome counts of one step."""

    m: int
    a0: int
    nu0: int
    aplus: int
    nuplus: int

    def __post_init__(self):
        if not 0 <= self.a0 <= self.nu0:
            raise ValueError(f"a0={self.a0} outside [0, {self.nu0}]")
        if not 0 <= self.aplus <= self.nuplus:
            raise ValueError(f"aplus={self.aplus} outside [0, {self.nuplus}]")

    @property
    def f0(self) -> float:
        return self.a0 / self.nu0 if self.nu0 else 0.5

    @property
    def fplus(self) -> float:
        return self.aplus / self.nuplus if self.nuplus else 0.5


@dataclass(frozen=True)
class ShiftedBatch:
    """Outcomes of shots taken through phase shifts ``phi_i``.

    ``outcomes[i] == 1`` marks the event of probability
    ``(1 + cos(m*(theta - phi_i))) / 2``.
    """

    m: int
    shifts: tuple
    outcomes: tuple

    def __post_init__(self):
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))
        object.__setattr__(self, "outcomes", tuple(int(o) for o in self.outcomes))
        if len(self.shifts) != len(self.outcomes):
            raise ValueError("shifts and outcomes must have equal length")


# ---------------------------------------------------------------------------
# estimator of m*theta
# ---------------------------------------------------------------------------


def estimate_from_counts(a0, nu0, aplus, nuplus):
    """Vectorized ``atan2(2 f+ - 1, 2 f0 - 1)`` in ``[0, 2*pi)``.

    A quadrature with zero shots contributes 0 to its axis. The degenerate
    point ``(0, 0)`` maps to angle 0.
    """
    a0 = np.asarray(a0, dtype=float)
    aplus = np.asarray(aplus, dtype=float)
    nu0 = np.asarray(nu0, dtype=float)
    nuplus = np.asarray(nuplus, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(nu0 > 0, 2.0 * a0 / np.where(nu0 > 0, nu0, 1.0) - 1.0, 0.0)
        y = np.where(nuplus > 0, 2.0 * aplus / np.where(nuplus > 0, nuplus, 1.0) - 1.0, 0.0)
    # +0.0 normalizes signed zeros so atan2 never returns -pi on an axis
    return _atan2_canonical(y + 0.0, x + 0.0)


def _atan2_canonical(y, x):
    out = wrap(np.arctan2(y, x))
    return np.where((x == 0.0) & (y == 0.0), 0.0, out)


def step_estimate(batch: MeasurementBatch) -> Angle:
    """Estimate of ``m*theta`` from one batch of counts."""
    if batch.nu0 < 1 or batch.nuplus < 1:
        raise ValueError("both quadratures need at least one shot")
    return Angle(estimate_from_counts(batch.a0, batch.nu0, batch.aplus, batch.nuplus))


# ---------------------------------------------------------------------------
# collective backend
# ---------------------------------------------------------------------------


def sample_batch(theta, step: StepSpec, seed: int, trial: int = 0) -> MeasurementBatch:
    """Draw the counts of one step with shot-level Bernoulli trials."""
    u = uniform_block(seed, STREAM_OUTCOME, trial, 1, step.shots)[0]
    p0 = type0_probability(float(theta), step.m)
    pp = typeplus_probability(float(theta), step.m)
    a0 = int(np.count_nonzero(u[: step.nu0] < p0))
    ap = int(np.count_nonzero(u[step.nu0 :] < pp))
    return MeasurementBatch(step.m, a0, step.nu0, ap, step.nuplus)


# ---------------------------------------------------------------------------
# parity backend
# ---------------------------------------------------------------------------


def parity_count_pmf(theta, m: int) -> np.ndarray:
    """Law of the number ``k`` of 1s when the ``m`` probes are read out one by one.

    ``p_k = 2**-m * C(m, k) * (1 - (-1)**k cos(m*theta))``; the readout
    convention is chosen so an odd count carries the outcome-0 probability.
    """
    k = np.arange(m + 1)
    logc = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1) - m * math.log(2.0)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return np.exp(logc) * (1.0 - sign * math.cos(m * float(theta)))


def odd_count_probability(theta, m: int) -> float:
    """Probability of an odd parity count, summed in closed form over odd ``k``."""
    pmf = parity_count_pmf(theta, m)
    return math.fsum(pmf[1::2])


def parity_counts(theta, m: int, shots: int, seed: int, trial: int = 0,
                  offset: float = 0.0, u_outcome=None, u_spect=None) -> np.ndarray:
    """Per-shot number of 1s among ``m`` separately detected probes.

    ``offset`` is subtracted from ``theta`` before imprinting; Type-+ shots
    use ``offset = pi / (2m)``. Uniform arrays may be injected so that the
    caller controls the stream layout.
    """
    if u_outcome is None:
        u_outcome = uniform_block(seed, STREAM_OUTCOME, trial, 1, shots)[0]
    if u_spect is None:
        u_spect = uniform_block(seed, STREAM_SPECTATOR, trial, 1, shots * (m - 1))[0]
    p_odd = type0_probability(float(theta) - offset, m)
    spect = (np.asarray(u_spect).reshape(shots, m - 1) < 0.5)
    spect_parity = spect.sum(axis=1) % 2
    last = (np.asarray(u_outcome) < p_odd).astype(np.int64) ^ spect_parity
    return spect.sum(axis=1) + last


def sample_batch_parity(theta, step: StepSpec, seed: int, trial: int = 0) -> MeasurementBatch:
    """Counts of one step from single-probe detections; outcome 0 is an odd count."""
    m = step.m
    u0 = uniform_block(seed, STREAM_OUTCOME, trial, 1, step.shots)[0]
    us = uniform_block(seed, STREAM_SPECTATOR, trial, 1, step.shots * (m - 1))[0]
    k0 = parity_counts(theta, m, step.nu0, seed, u_outcome=u0[: step.nu0],
                       u_spect=us[: step.nu0 * (m - 1)])
    kp = parity_counts(theta, m, step.nuplus, seed, offset=math.pi / (2 * m),
                       u_outcome=u0[step.nu0 :], u_spect=us[step.nu0 * (m - 1) :])
    return MeasurementBatch(m, int(np.sum(k0 % 2)), step.nu0, int(np.sum(kp % 2)), step.nuplus)


# ---------------------------------------------------------------------------
# shifted measurement and likelihood
# ---------------------------------------------------------------------------


def sample_shifted(theta, m: int, shifts: Sequence[float], seed: int, trial: int = 0) -> ShiftedBatch:
    """Bernoulli outcomes with success probability ``(1 + cos(m(theta - phi_i)))/2``."""
    shifts = np.asarray(shifts, dtype=float)
    u = uniform_block(seed, STREAM_OUTCOME, trial, 1, shifts.size)[0]
    p = type0_probability(float(theta) - shifts, m)
    return ShiftedBatch(m, tuple(shifts), tuple((u < p).astype(int)))


def quadrature_shifts(center: float, m: int, nu0: int, nuplus: int) -> np.ndarray:
    """Shift policy of the adaptive last step.

    The first ``nu0`` shots sit at ``center - pi/(2m)`` (slope of the cosine
    fringe) and the other ``nuplus`` at ``center`` (its quadrature), which
    keeps the likelihood single-peaked over the whole prior interval.
    """
    return np.concatenate([
        np.full(nu0, center - math.pi / (2 * m)),
        np.full(nuplus, float(center)),
    ])


def golden_maximize(f, lo, hi, iters: int = 60):
    """Vectorized golden-section search for the maximizer of ``f`` on ``[lo, hi]``.

    ``f`` maps an array of abscissae (one per problem) to an array of values.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    r = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - r * (hi - lo)
    x2 = lo + r * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + r * (hi - lo))
        x1n = np.where(left, hi - r * (hi - lo), x2)
        fnew = f(np.where(left, x1n, x2n))
        f1, f2 = np.where(left, fnew, f2), np.where(left, f1, fnew)
        x1, x2 = x1n, x2n
    return 0.5 * (lo + hi)


def _safe_log(p):
    return np.log(np.clip(p, 1e-300, None))


def quadrature_loglik(u, a, na, b, nb):
    """Log-likelihood in ``u = m(theta - center)`` for the quadrature shift policy.

    ``a`` of ``na`` slope shots and ``b`` of ``nb`` quadrature shots gave the
    outcome of probability ``(1 + cos(m(theta - phi)))/2``.
    """
    s, c = np.sin(u), np.cos(u)
    return (a * _safe_log(0.5 * (1.0 - s)) + (na - a) * _safe_log(0.5 * (1.0 + s))
            + b * _safe_log(0.5 * (1.0 + c)) + (nb - b) * _safe_log(0.5 * (1.0 - c)))


def quadrature_mle(a, na, b, nb, m: int, center, half_width, grid: int = 64, iters: int = 60):
    """Maximum-likelihood phase for the quadrature policy, vectorized over problems.

    The search is restricted to ``center +- half_width``: a coarse grid picks
    the best cell and golden-section refines inside its neighbours.
    """
    a, na, b, nb = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (a, na, b, nb))
    center = np.broadcast_to(np.asarray(center, dtype=float), a.shape)
    span = m * float(half_width)
    nodes = np.linspace(-span, span, grid)
    ll = quadrature_loglik(nodes[None, :], a[:, None], na[:, None], b[:, None], nb[:, None])
    best = np.argmax(ll, axis=1)
    step = nodes[1] - nodes[0]
    lo = np.maximum(nodes[best] - step, -span)
    hi = np.minimum(nodes[best] + step, span)
    u = golden_maximize(lambda x: quadrature_loglik(x, a, na, b, nb), lo, hi, iters)
    return wrap(center + u / m)


def shifted_loglik(theta, batch: ShiftedBatch):
    """Log-likelihood of ``theta`` (array) given a shifted batch."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.asarray(batch.shifts)[None, :]
    o = np.asarray(batch.outcomes)[None, :]
    p = type0_probability(theta[:, None] - phi, batch.m)
    return np.sum(o * _safe_log(p) + (1 - o) * _safe_log(1.0 - p), axis=1)


def shifted_mle(batch: ShiftedBatch, center: float, half_width: float,
                grid: int = 256, iters: int = 60) -> Angle:
    """Maximum-likelihood phase of an arbitrary shifted batch on ``center +- half_width``."""
    nodes = float(center) + np.linspace(-half_width, half_width, grid)
    ll = shifted_loglik(nodes, batch)
    i = int(np.argmax(ll))
    step = nodes[1] - nodes[0]
    lo = max(nodes[i] - step, center - half_width)
    hi = min(nodes[i] + step, center + half_width)
    x = golden_maximize(lambda t: shifted_loglik(t, batch), lo, hi, iters)
    return Angle(float(np.ravel(x)[0]))

