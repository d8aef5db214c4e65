"""Planning under a bounded entanglement size and under probe loss.

With a size limit the ladder stops at ``2**(K-1)`` (or at an arbitrary cap
``R`` through the ceiling ladder ``ceil(R / 2**(K-j))``) and the top rung
is spent on an adaptive maximum-likelihood stage whose error decays as
``1/N``. With loss, each GHZ shot of size ``M`` survives with probability
``eta**M`` and the ramp gains a correction that moves shots towards
larger states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    ADAPTIVE_MLE,
    BoundConstants,
    InfeasibleError,
    SchedulePlan,
    StepSpec,
    ladder_sizes,
    round_half_up,
    steps_for_cap,
)
from .planner import TWO_PI_3_SQ, _c_pow, mse_bound_counts


@dataclass(frozen=True)
class LossModel:
    """Independent per-probe retention with probability ``eta``."""

    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    @property
    def log_loss(self) -> float:
        """``|log eta|``."""
        return -math.log(self.eta)

    def survival(self, m) -> float:
        return self.eta ** m


@dataclass(frozen=True)
class HybridPlanParams:
    k_steps: int
    x_km1: float
    constants: BoundConstants = BoundConstants.numeric()
    cap: int | None = None
    loss: LossModel | None = None

    def __post_init__(self):
        if self.x_km1 <= 0:
            raise ValueError("x_km1 must be positive")
        if self.k_steps < 2:
            raise ValueError("a hybrid plan needs at least two steps")
        if self.cap is not None and steps_for_cap(self.cap) != self.k_steps:
            raise ValueError(
                f"cap {self.cap} requires K={steps_for_cap(self.cap)}, got {self.k_steps}"
            )

    @classmethod
    def for_cap(cls, cap: int, x_km1: float, constants: BoundConstants = BoundConstants.numeric(),
                loss: LossModel | None = None) -> "HybridPlanParams":
        return cls(steps_for_cap(cap), x_km1, constants, cap, loss)

    @property
    def top_size(self) -> float:
        return float(self.cap) if self.cap is not None else 2.0 ** (self.k_steps - 1)

    @property
    def kappa(self) -> float:
        """Size rescaling ``R / 2**(K-1)``; 1 without a cap."""
        return self.top_size / 2.0 ** (self.k_steps - 1)


def _sqrt_term(c: BoundConstants) -> float:
    return math.sqrt(256.0 * c.a_const * c.log_c)


def hybrid_last_step(params: HybridPlanParams) -> float:
    """Copies ``x_K`` of the top-size state, balancing it against the localization stage.

    ``3 eta**(R/4) C**(x_{K-1}/2) / (2 pi sqrt(256 A log C))``; the loss
    factor is 1 without a loss model.
    """
    c = params.constants
    loss = 1.0 if params.loss is None else params.loss.eta ** (params.top_size / 4.0)
    return 3.0 * loss * c.c_const ** (params.x_km1 / 2.0) / (2.0 * math.pi * _sqrt_term(c))


def hybrid_localization(params: HybridPlanParams) -> np.ndarray:
    """Expected (post-loss) shots ``x_j`` of the localization rungs ``j = 1..K-1``.

    ``gamma (K-1-j) + x_{K-1}``, plus ``(|log eta| / log C) kappa (2**(K-2) - 2**(j-1))``
    under loss.
    """
    k = params.k_steps
    c = params.constants
    j = np.arange(1, k)
    x = c.gamma * (k - 1 - j) + params.x_km1
    if params.loss is not None:
        x = x + params.loss.log_loss / c.log_c * params.kappa * (2.0 ** (k - 2) - 2.0 ** (j - 1))
    return x


def _sizes(params: HybridPlanParams) -> list[int]:
    return ladder_sizes(params.k_steps, 2, params.cap)


def hybrid_plan(params: HybridPlanParams) -> SchedulePlan:
    """Executable hybrid plan; the last step runs the adaptive estimator.

    Under loss the provisioned counts are ``x_j / eta**M_j`` rounded after
    the division.
    """
    x = np.append(hybrid_localization(params), hybrid_last_step(params))
    if np.any(x <= 0.5):
        raise InfeasibleError("hybrid ramp has a step with x_j <= 1/2")
    sizes = _sizes(params)
    if params.loss is not None:
        x = x / np.array([params.loss.survival(m) for m in sizes])
    steps = tuple(StepSpec(m, round_half_up(v), round_half_up(v)) for m, v in zip(sizes, x))
    return SchedulePlan(2, 3, steps, ADAPTIVE_MLE, params.cap)


def hybrid_mse_bound(params: HybridPlanParams) -> float:
    """MSE bound of the hybrid strategy.

    Without loss this is the resummed closed form
    ``4**(1-K) [(pi/3) sqrt(256 A log C) C**(-x_{K-1}/2) + (2pi/3)**2 128 A C**-(x_{K-1} - 1/2)]``
    divided by ``kappa**2``. Under loss the localization sum is evaluated
    term by term at ``x_j - 1/2`` next to the Cramer-Rao term ``1/(2 M_K**2 x_K)``.
    """
    c = params.constants
    k = params.k_steps
    kap2 = params.kappa ** 2
    if params.loss is None or params.loss.eta == 1.0:
        first = (math.pi / 3.0) * _sqrt_term(c) * float(_c_pow(c.c_const, params.x_km1 / 2.0))
        second = TWO_PI_3_SQ * 128.0 * c.a_const * float(_c_pow(c.c_const, params.x_km1 - 0.5))
        return (first + second) / 4.0 ** (k - 1) / kap2
    x = hybrid_localization(params)
    j = np.arange(1, k)
    drift = (8.0 * math.pi / (3.0 * 2.0 ** (j - 1))) ** 2
    loc = math.fsum((drift * c.a_const * _c_pow(c.c_const, x - 0.5)).tolist())
    last = 1.0 / (4.0 ** (k - 1) * 2.0 * hybrid_last_step(params))
    return (last + loc) / kap2


def hybrid_total_probes(params: HybridPlanParams, rounded: bool = True) -> float:
    """``2 sum_j x_j M_j`` (pre-loss), with or without rounding the counts."""
    x = np.append(hybrid_localization(params), hybrid_last_step(params))
    sizes = np.array(_sizes(params), dtype=float)
    if params.loss is not None:
        x = x / params.loss.eta ** sizes
    if rounded:
        x = np.floor(x + 0.5)
    return float(2.0 * np.sum(x * sizes))


def hybrid_asymptote(params: HybridPlanParams, n_total: float) -> float:
    """Large-``N`` limit of the hybrid bound, ``1 / (2**(K-1) N)`` (no loss, no cap)."""
    return 1.0 / (2.0 ** (params.k_steps - 1) * n_total)


# ---------------------------------------------------------------------------
# lossy ladder
# ---------------------------------------------------------------------------


def lossy_ramp(k_steps: int, x_k: float, loss: LossModel,
               constants: BoundConstants = BoundConstants.numeric()) -> tuple[np.ndarray, np.ndarray]:
    """Surviving-shot ramp ``x_j`` and provisioned counts ``x'_j = x_j / eta**(2**(j-1))``."""
    j = np.arange(1, k_steps + 1)
    x = (constants.gamma * (k_steps - j) + x_k
         + loss.log_loss / constants.log_c * (2.0 ** (k_steps - 1) - 2.0 ** (j - 1)))
    xp = x / loss.eta ** (2.0 ** (j - 1))
    return x, xp


def lossy_plan(k_steps: int, x_k: float, loss: LossModel,
               constants: BoundConstants = BoundConstants.numeric()) -> SchedulePlan:
    x, xp = lossy_ramp(k_steps, x_k, loss, constants)
    if np.any(x <= 0.5):
        raise InfeasibleError("lossy ramp has a step with x_j <= 1/2")
    return SchedulePlan.symmetric([round_half_up(v) for v in xp])


def lossy_mse_bound(plan: SchedulePlan, loss: LossModel, constants: BoundConstants) -> float:
    """Bound evaluated at the expected surviving shots of a provisioned plan."""
    keep = np.array([loss.survival(m) for m in plan.sizes])
    nu0 = np.array([s.nu0 for s in plan.steps]) * keep
    nup = np.array([s.nuplus for s in plan.steps]) * keep
    return mse_bound_counts(plan.sizes, nu0, nup, constants, plan.base, plan.shrink,
                            plan.last_step_mode)


def relaxed_probes(x_provisioned) -> float:
    """``2 sum_j x'_j 2**(j-1)`` for real counts."""
    x = np.asarray(x_provisioned, dtype=float)
    return float(2.0 * np.sum(x * 2.0 ** np.arange(x.size)))


def matched_ideal_xk(n_total: float, k_steps: int, constants: BoundConstants) -> float:
    """``x_K`` of the loss-free ramp whose relaxed probe count equals ``n_total``."""
    g = constants.gamma
    return (n_total / 2.0 - g * (2 ** k_steps - k_steps - 1)) / (2 ** k_steps - 1)


class LossyComparison(NamedTuple):
    x_lossy: np.ndarray        # surviving-shot ramp
    x_provisioned: np.ndarray  # x'_j
    x_ideal: np.ndarray        # loss-free ramp at the same N
    x_k_ideal: float
    n_total: float
    delta_states: np.ndarray   # x'_j - x_ideal_j
    delta_probes: np.ndarray   # (x'_j - x_ideal_j) 2**j


def lossy_comparison(k_steps: int, x_k: float, loss: LossModel,
                     constants: BoundConstants = BoundConstants.numeric()) -> LossyComparison:
    """Lossy ramp against the loss-free ramp that spends the same budget."""
    x, xp = lossy_ramp(k_steps, x_k, loss, constants)
    n = relaxed_probes(xp)
    xk_i = matched_ideal_xk(n, k_steps, constants)
    j = np.arange(1, k_steps + 1)
    xi = constants.gamma * (k_steps - j) + xk_i
    d = xp - xi
    return LossyComparison(x, xp, xi, xk_i, n, d, d * 2.0 ** j)


# ---------------------------------------------------------------------------
# lossy GHZ states
# ---------------------------------------------------------------------------


def lossy_ghz_qfi(n_size: int, loss: LossModel) -> float:
    """QFI of one ``n_size``-probe GHZ state under loss, ``eta**N N**2``."""
    return loss.eta ** n_size * float(n_size) ** 2


def qfi_cut(n_total: float, r: float, loss: LossModel) -> float:
    """QFI of ``N`` probes split into GHZ bunches of ``R``, ``eta**R R**2 N / R``."""
    return loss.eta ** r * r * r * n_total / r


def optimal_cut(loss: LossModel) -> float:
    """Maximizer ``-1 / log eta`` of ``eta**R R`` over real ``R``."""
    if loss.eta >= 1.0:
        raise ValueError("the optimal cut diverges without loss")
    return 1.0 / loss.log_loss


def optimal_cut_integer(loss: LossModel) -> int:
    """Integer bunch size maximizing ``eta**R R``."""
    r = optimal_cut(loss)
    cands = [max(1, math.floor(r)), max(1, math.ceil(r))]
    return max(cands, key=lambda v: (loss.eta ** v * v, -v))


def qfi_optimal_state_bound(n_total: float, loss: LossModel) -> float:
    """Upper bound on the QFI of any ``N``-probe state, ``N**2 / (1 + N (1 - eta) / eta)``."""
    return n_total ** 2 / (1.0 + n_total * (1.0 - loss.eta) / loss.eta)


def kappa_ratio(loss: LossModel) -> float:
    """Asymptotic ratio of the optimal-state QFI to the best bunched-GHZ QFI."""
    eta = loss.eta
    if eta >= 1.0:
        return math.e
    return -math.e * eta * math.log(eta) / (1.0 - eta)


def kappa_sup(decades: int = 12, per_decade: int = 200) -> float:
    """Numerical supremum of ``kappa_ratio`` over ``eta`` in ``(0, 1)``."""
    loss_grid = np.logspace(-decades, math.log10(0.999999), decades * per_decade)
    eta = 1.0 - loss_grid
    eta = eta[(eta > 0) & (eta < 1)]
    vals = -math.e * eta * np.log(eta) / (1.0 - eta)
    return float(np.max(vals))
