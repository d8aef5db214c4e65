"""Resource planning for the ideal (loss-free, unbounded-entanglement) ladder.

Shot counts follow the linear ramp ``x_j = gamma (K - j) + x_K`` with
``M_j = 2**(j-1)``. Everything else here is the MSE bound that ramp
optimizes, the resource totals it implies, the point where adding a rung
pays off, and the binary redistribution of leftover probes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import (
    ADAPTIVE_MLE,
    BoundConstants,
    InfeasibleError,
    SchedulePlan,
    StepSpec,
    ladder_sizes,
    round_half_up,
    total_probes,
)

TWO_PI_3_SQ = (2.0 * math.pi / 3.0) ** 2


def _c_pow(c: float, nu):
    """``C**-nu`` with ``C = inf`` meaning an error-free step."""
    nu = np.asarray(nu, dtype=float)
    if math.isinf(c):
        return np.zeros_like(nu)
    return np.exp(-nu * math.log(c))


@dataclass(frozen=True)
class RampParams:
    k_steps: int
    x_k: float
    constants: BoundConstants = BoundConstants.numeric()

    def __post_init__(self):
        if self.k_steps < 1:
            raise ValueError("k_steps must be at least 1")

    def x_values(self) -> np.ndarray:
        j = np.arange(1, self.k_steps + 1)
        return self.constants.gamma * (self.k_steps - j) + self.x_k


def ramp_values(params: RampParams) -> np.ndarray:
    return params.x_values()


def ramp(params: RampParams) -> SchedulePlan:
    """Rounded linear ramp on the base-2 ladder."""
    x = params.x_values()
    if np.any(x <= 0.5):
        raise InfeasibleError(f"ramp has x_j <= 1/2 (min {x.min():.4g})")
    return SchedulePlan.symmetric([round_half_up(v) for v in x])


class ResourceBounds(NamedTuple):
    n_lower: float
    n_upper: float
    exact: int
    slack: float  # exact minus the upper closed form


def resource_bounds(params: RampParams) -> ResourceBounds:
    """Closed forms ``(gamma + x_K -+ 1/2) 2**(K+1)`` and the exact probe count."""
    g = params.constants.gamma
    scale = 2.0 ** (params.k_steps + 1)
    lo = (g + params.x_k - 0.5) * scale
    hi = (g + params.x_k + 0.5) * scale
    exact = total_probes(ramp(params))
    return ResourceBounds(lo, hi, exact, exact - hi)


# ---------------------------------------------------------------------------
# MSE bounds
# ---------------------------------------------------------------------------


def _mse_terms(sizes, nu0, nuplus, constants: BoundConstants, base: int, shrink: int,
               last_step_mode: str = "ladder"):
    sizes = np.asarray(sizes, dtype=float)
    nu0 = np.asarray(nu0, dtype=float)
    nuplus = np.asarray(nuplus, dtype=float)
    k = sizes.size
    if k == 0:
        return math.pi ** 2, np.zeros(0)
    fail = 0.5 * constants.a_const * (_c_pow(constants.c_const, nu0) + _c_pow(constants.c_const, nuplus))
    drift = (2.0 * math.pi * base * base / (shrink * (base - 1) * sizes)) ** 2
    if last_step_mode == ADAPTIVE_MLE:
        shots = nu0[-1] + nuplus[-1]
        last = 1.0 / (sizes[-1] ** 2 * shots) if shots > 0 else math.pi ** 2
        fail[-1] = 0.0
    else:
        last = (math.pi / (shrink * sizes[-1])) ** 2
    return last, fail * drift


def mse_bound_counts(sizes: Sequence[float], nu0: Sequence[float], nuplus: Sequence[float],
                     constants: BoundConstants, base: int = 2, shrink: int = 3,
                     last_step_mode: str = "ladder") -> float:
    """MSE bound for arbitrary (possibly non-integer) shot counts.

    Sum of the final-interval term and, for each step ``j``, the failure
    probability bound ``(A/2)(C**-nu0_j + C**-nuplus_j)`` times the squared
    worst-case drift after a first failure at ``j``. For base 2 this is
    ``(2pi/3)**2 (4**-K + 16 sum_j A 4**(1-j) C**-nu_j)``. An adaptive last
    step contributes its Cramer-Rao term ``1 / (M_K**2 * shots)`` instead.
    """
    last, terms = _mse_terms(sizes, nu0, nuplus, constants, base, shrink, last_step_mode)
    return math.fsum([last, *terms.tolist()])


def mse_bound_raw(plan: SchedulePlan, constants: BoundConstants) -> float:
    """The MSE bound evaluated on an explicit plan."""
    return mse_bound_counts(
        plan.sizes,
        [s.nu0 for s in plan.steps],
        [s.nuplus for s in plan.steps],
        constants,
        plan.base,
        plan.shrink,
        plan.last_step_mode,
    )


def mse_bound_ramp(params: RampParams) -> float:
    """Closed form ``(2pi/3)**2 (1 + 128 A / C**(x_K - 1/2)) / 4**K``."""
    c = params.constants
    return TWO_PI_3_SQ * (1.0 + 128.0 * c.a_const * float(_c_pow(c.c_const, params.x_k - 0.5))) / 4.0 ** params.k_steps


def prefactor_bound(x_k, constants: BoundConstants):
    """Bound on ``MSE * N**2`` for the ramp, as a function of ``x_K``."""
    x_k = np.asarray(x_k, dtype=float)
    g, a = constants.gamma, constants.a_const
    out = 4.0 * TWO_PI_3_SQ * (g + x_k + 0.5) ** 2 * (1.0 + 128.0 * a * _c_pow(constants.c_const, x_k - 0.5))
    return float(out) if out.ndim == 0 else out


def optimize_prefactor(constants: BoundConstants, lo: int = 1, hi: int = 200) -> tuple[int, float]:
    """Integer ``x_K`` in ``[lo, hi]`` minimizing `prefactor_bound`."""
    xs = np.arange(lo, hi + 1)
    vals = prefactor_bound(xs, constants)
    i = int(np.argmin(vals))
    return int(xs[i]), float(vals[i])


def qfi_ratio_bound(x_k: float, gamma: float) -> float:
    """``N**2 / QFI`` of the ramp, ``36 (gamma + x_K - 1/2)**2 / (2 gamma + 6 x_K + 3)``."""
    return 36.0 * (gamma + x_k - 0.5) ** 2 / (2.0 * gamma + 6.0 * x_k + 3.0)


def _vs_n_exponent(n, k_steps, gamma):
    return np.asarray(n, dtype=float) / 2.0 ** (k_steps + 1) - gamma - 1.0


def mse_bound_vs_n(n, k_steps: int, constants: BoundConstants):
    """Ramp bound re-expressed through the probe budget ``N`` at fixed ``K``."""
    e = _vs_n_exponent(n, k_steps, constants.gamma)
    if np.any(e <= 0):
        raise InfeasibleError(f"N too small for K={k_steps}: exponent {np.min(e):.4g} <= 0")
    out = TWO_PI_3_SQ * (1.0 + 128.0 * constants.a_const * _c_pow(constants.c_const, e)) / 4.0 ** k_steps
    return float(out) if np.ndim(out) == 0 else out


class UpgradePoint(NamedTuple):
    u_star: float  # N* / 2**(K+1)
    x_k: float     # top-step copies of the K-rung ramp at N*
    x_k1: float    # top-step copies of the (K+1)-rung ramp at N*
    n_star: float


def upgrade_point(constants: BoundConstants, k_steps: int = 10) -> UpgradePoint:
    """Budget at which the ``K``- and ``(K+1)``-rung bounds coincide.

    In units of ``2**(K+1)`` the crossing does not depend on ``K``.
    """
    g, a, c = constants.gamma, constants.a_const, constants.c_const

    def gap(u):
        lhs = 4.0 * (1.0 + 128.0 * a * float(_c_pow(c, u - g - 1.0)))
        rhs = 1.0 + 128.0 * a * float(_c_pow(c, u / 2.0 - g - 1.0))
        return lhs - rhs

    lo = 2.0 * (g + 1.0) + 1e-9
    hi = lo + 1.0
    while gap(hi) <= 0:
        hi *= 2.0
        if hi > 1e6:
            raise InfeasibleError("no upgrade point found")
    if gap(lo) >= 0:
        raise InfeasibleError("bounds never cross")
    u = brentq(gap, lo, hi, xtol=1e-13)
    return UpgradePoint(u, u - g - 0.5, u / 2.0 - g - 0.5, u * 2.0 ** (k_steps + 1))


def piecewise_k(n, u_star: float):
    """Rung count used at budget ``N``: ``u* 2**K < N <= u* 2**(K+1)``, at least 1."""
    n = np.asarray(n, dtype=float)
    k = np.ceil(np.log2(n / u_star)) - 1.0
    # guard the log against rounding at the breakpoints
    k = np.where(n > u_star * 2.0 ** (k + 1), k + 1, k)
    k = np.where(n <= u_star * 2.0 ** k, k - 1, k)
    return np.maximum(k, 1).astype(np.int64)


def piecewise_bound(n, constants: BoundConstants):
    """Lower envelope of the fixed-``K`` bounds; NaN where even ``K = 1`` is infeasible."""
    u = upgrade_point(constants).u_star
    n = np.atleast_1d(np.asarray(n, dtype=float))
    k = piecewise_k(n, u)
    e = _vs_n_exponent(n, k, constants.gamma)
    val = TWO_PI_3_SQ * (1.0 + 128.0 * constants.a_const * _c_pow(constants.c_const, e)) / 4.0 ** k
    return np.where(e > 0, val, np.nan)


def qfi_inverse_vs_n(n, k_steps, gamma: float):
    """Inverse QFI of the ramp at budget ``N``, ``3 / ((N/2**K - 4 gamma/3) 4**K)``."""
    n = np.asarray(n, dtype=float)
    k_steps = np.asarray(k_steps, dtype=float)
    d = n / 2.0 ** k_steps - 4.0 * gamma / 3.0
    return np.where(d > 0, 3.0 / (np.where(d > 0, d, 1.0) * 4.0 ** k_steps), np.nan)


def qfi_inverse_piecewise(n, constants: BoundConstants):
    u = upgrade_point(constants).u_star
    n = np.atleast_1d(np.asarray(n, dtype=float))
    return qfi_inverse_vs_n(n, piecewise_k(n, u), constants.gamma)


def sql_crossing(constants: BoundConstants, n_max: int = 10 ** 6) -> int:
    """Smallest integer budget at which the piecewise bound is below ``1/N``."""
    start = 1
    chunk = 1 << 16
    while start <= n_max:
        n = np.arange(start, min(start + chunk, n_max + 1), dtype=float)
        with np.errstate(invalid="ignore"):
            hit = np.nonzero(piecewise_bound(n, constants) < 1.0 / n)[0]
        if hit.size:
            return int(n[hit[0]])
        start += chunk
    raise InfeasibleError("no crossing below n_max")


# ---------------------------------------------------------------------------
# redistribution of leftover probes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Redistribution:
    """Extra shots per step for a change ``delta_n`` of the probe budget.

    ``delta_nu[j]`` is added to both quadratures of step ``j + 1``;
    ``extra_type0`` is a single Type-0 shot at step 1 absorbing an odd
    ``delta_n``. For negative budgets ``level`` counts how many times every
    step below the top one lost a shot before the binary pattern ``bits``
    was applied.
    """

    delta_n: int
    delta_nu: tuple
    bits: tuple
    extra_type0: int = 0
    level: int = 0

    def probe_change(self) -> int:
        return 2 * sum(d * 2 ** j for j, d in enumerate(self.delta_nu)) + self.extra_type0


def _binary(h: int, k: int) -> list[int]:
    return [(h >> j) & 1 for j in range(k)]


def redistribution_range(k_steps: int) -> tuple[int, int]:
    """Admissible ``delta_n``: down to ``-2(2**K - 2)`` and up to ``2 * 2**K``."""
    return -2 * (2 ** k_steps - 2), 2 * 2 ** k_steps


def redistribute(delta_n: int, k_steps: int) -> Redistribution:
    """Optimal extra shots for a leftover (or missing) budget ``delta_n``.

    ``delta_n >= 0``: the binary digits of ``floor(delta_n / 2)``, low digit
    on the smallest step; the top of the range, ``2 * 2**K``, has no K-digit
    pattern and uses ``(2, 1, ..., 1)``. An odd remainder becomes one extra
    Type-0 shot at step 1.

    ``delta_n < 0``: the top step is untouched and shots are withdrawn from
    the others in binary; after one full withdrawal (every lower step down
    by one) the pattern starts over.
    """
    lo, hi = redistribution_range(k_steps)
    if not lo <= delta_n <= hi:
        raise InfeasibleError(f"delta_n={delta_n} outside [{lo}, {hi}] for K={k_steps}")
    if delta_n >= 0:
        h, odd = divmod(delta_n, 2)
        if h == 2 ** k_steps:
            nu = [2] + [1] * (k_steps - 1)
            return Redistribution(delta_n, tuple(nu), tuple(nu), odd, 0)
        bits = _binary(h, k_steps)
        return Redistribution(delta_n, tuple(bits), tuple(bits), odd, 0)
    d = -delta_n
    h = (d + 1) // 2  # an odd deficit over-withdraws one probe and returns it
    odd = 2 * h - d
    cap = 2 ** (k_steps - 1) - 1  # units a full lower-step withdrawal removes
    if k_steps == 1:
        raise InfeasibleError("a single-step plan has no lower steps to withdraw from")
    level = 0
    if h > cap:
        level, h = 1, h - cap
    bits = _binary(h, k_steps - 1) + [0]
    nu = [-(level + b) if j < k_steps - 1 else 0 for j, b in enumerate(bits)]
    return Redistribution(delta_n, tuple(nu), tuple(-b for b in bits), odd, level)


def apply_redistribution(plan: SchedulePlan, red: Redistribution) -> SchedulePlan:
    steps = []
    for j, (st, d) in enumerate(zip(plan.steps, red.delta_nu)):
        extra = red.extra_type0 if j == 0 else 0
        nu0, nup = st.nu0 + d + extra, st.nuplus + d
        if nu0 < 0 or nup < 0:
            raise InfeasibleError("redistribution empties a step")
        steps.append(StepSpec(st.m, nu0, nup))
    return SchedulePlan(plan.base, plan.shrink, tuple(steps), plan.last_step_mode, plan.max_size_cap)


def relaxed_counts(params: RampParams, delta_nu: Sequence[float], extra_type0: int = 0):
    """Real shot counts ``x_j - 1/2 + delta_nu_j`` used by the closed forms."""
    base = params.x_values() - 0.5 + np.asarray(delta_nu, dtype=float)
    nu0 = base.copy()
    nu0[0] += extra_type0
    return nu0, base


def mse_bound_relaxed(params: RampParams, delta_nu: Sequence[float], extra_type0: int = 0) -> float:
    """`mse_bound_counts` on the relaxed (unrounded) ramp shifted by ``delta_nu``."""
    nu0, nup = relaxed_counts(params, delta_nu, extra_type0)
    sizes = ladder_sizes(params.k_steps)
    return mse_bound_counts(sizes, nu0, nup, params.constants)


def mse_bound_redistributed(params: RampParams, delta_n: int) -> float:
    """Closed-form bound after an optimal redistribution of ``0 <= delta_n <= 2 * 2**K`` probes."""
    lo, hi = 0, 2 * 2 ** params.k_steps
    if not lo <= delta_n <= hi:
        raise InfeasibleError(f"delta_n={delta_n} outside [{lo}, {hi}]")
    c = params.constants
    corr = TWO_PI_3_SQ * (1.0 - 1.0 / c.c_const) * 64.0 * c.a_const * float(_c_pow(c.c_const, params.x_k - 0.5))
    return mse_bound_ramp(params) - corr * delta_n / 2.0 ** (3 * params.k_steps)


def redistribution_gap(params: RampParams) -> float:
    """Closed form minus relaxed bound; constant in ``delta_n`` below the range top.

    It equals ``(2pi/3)**2 128 A / (2**(3K) C**(x_K - 1/2))``, the geometric
    tail that the closed form adds by summing ``2**j`` up to ``2**(K+1)``
    rather than ``2**(K+1) - 2``.
    """
    c = params.constants
    return TWO_PI_3_SQ * 128.0 * c.a_const * float(_c_pow(c.c_const, params.x_k - 0.5)) / 2.0 ** (3 * params.k_steps)


# ---------------------------------------------------------------------------
# the four improving moves
# ---------------------------------------------------------------------------


def move_fuse(dnu: Sequence[int], j: int) -> list[int] | None:
    """Two shots at step ``j`` become one at ``j + 1``; needs ``dnu[j] >= dnu[j+1] + 2``."""
    if j + 1 >= len(dnu) or dnu[j] < dnu[j + 1] + 2:
        return None
    out = list(dnu)
    out[j] -= 2
    out[j + 1] += 1
    return out


def move_split(dnu: Sequence[int], j: int) -> list[int] | None:
    """One shot at step ``j + 1`` becomes two at ``j``; needs ``dnu[j+1] >= dnu[j] + 2``."""
    if j + 1 >= len(dnu) or dnu[j + 1] < dnu[j] + 2:
        return None
    out = list(dnu)
    out[j] += 2
    out[j + 1] -= 1
    return out


def move_carry(dnu: Sequence[int], j: int) -> list[int] | None:
    """``2 1 ... 1 0 -> 0 0 ... 0 1`` starting at index ``j``."""
    if j >= len(dnu) or dnu[j] != 2:
        return None
    i = j + 1
    while i < len(dnu) and dnu[i] == 1:
        i += 1
    if i >= len(dnu) or dnu[i] != 0:
        return None
    out = list(dnu)
    out[j:i] = [0] * (i - j)
    out[i] = 1
    return out


def move_borrow(dnu: Sequence[int], j: int) -> list[int] | None:
    """``-1 0 ... 0 1 -> 1 1 ... 1 0`` starting at index ``j``."""
    if j >= len(dnu) or dnu[j] != -1:
        return None
    i = j + 1
    while i < len(dnu) and dnu[i] == 0:
        i += 1
    if i >= len(dnu) or dnu[i] != 1:
        return None
    out = list(dnu)
    out[j:i] = [1] * (i - j)
    out[i] = 0
    return out


MOVES = {"fuse": move_fuse, "split": move_split, "carry": move_carry, "borrow": move_borrow}


# ---------------------------------------------------------------------------
# quantum Fisher information
# ---------------------------------------------------------------------------


def qfi(plan: SchedulePlan) -> float:
    """QFI of the full probe state, ``sum_j (nu0_j + nuplus_j) M_j**2``."""
    return float(sum(s.shots * s.m * s.m for s in plan.steps))


def qfi_ramp_base(params: RampParams) -> float:
    """``(2 gamma / 3 + 2 x_K + 1) 4**K / 3``."""
    g = params.constants.gamma
    return (2.0 * g / 3.0 + 2.0 * params.x_k + 1.0) * 4.0 ** params.k_steps / 3.0


def qfi_extra(delta_nu: Sequence[int]) -> float:
    """QFI added by ``delta_nu``, ``2 sum_j 4**(j-1) delta_nu_j``."""
    return 2.0 * sum(d * 4 ** j for j, d in enumerate(delta_nu))


def qfi_bounds_redistributed(params: RampParams, delta_n: int) -> tuple[float, float]:
    """Bracket ``(base + dN**2/6, base + dN**2/2)`` of the upper QFI after redistribution."""
    base = qfi_ramp_base(params)
    return base + delta_n ** 2 / 6.0, base + delta_n ** 2 / 2.0


def target_ramp(k_steps: int, target_n: int, constants: BoundConstants) -> tuple[SchedulePlan, Redistribution]:
    """Ramp plus redistribution spending exactly ``target_n`` probes."""
    g = constants.gamma
    x = ((target_n - 2.0 * g * (2 ** k_steps - k_steps - 1)) / (2 ** k_steps - 1)) / 2.0
    lo, hi = redistribution_range(k_steps)
    for _ in range(64):
        params = RampParams(k_steps, x, constants)
        plan = ramp(params)
        delta = target_n - total_probes(plan)
        if 0 <= delta <= hi:
            red = redistribute(delta, k_steps)
            return apply_redistribution(plan, red), red
        x += -0.25 if delta < 0 else 0.25
    raise InfeasibleError(f"cannot meet N={target_n} with K={k_steps}")
