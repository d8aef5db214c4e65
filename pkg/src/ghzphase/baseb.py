"""Ladders with a generic growth factor ``b``: ``M_j = b**(j-1)``, window ``pi/(b+1)``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BoundConstants


def validity_check(base: int, shrink: int) -> bool:
    """True iff exactly one replica interval can meet the prior one, i.e. ``n == b + 1``."""
    if base < 2 or shrink < 2:
        raise ValueError("base and shrink must be at least 2")
    return shrink == base + 1


def gamma_b(base: int) -> float:
    """Ramp slope ``12 log b / sin(pi/n)**2`` for analytic constants."""
    s = math.sin(math.pi / (base + 1))
    return 12.0 * math.log(base) / (s * s)


def base_constants(base: int) -> BoundConstants:
    """``A = 4`` and ``C = exp(sin(pi/n)**2 / 4)`` with ``n = b + 1``."""
    return BoundConstants.analytic(base)


def base_prefactor(base: int, x_k, a_const: float = 4.0):
    """Bound on ``MSE * N**2`` for a base-``b`` ramp with ``x_K`` top copies.

    ``16 pi**2 / (b**2 - 1)**2 * [b**2/4 + b**7 A / ((b-1)**3 C**(x_K - 1/2))]
    * [gamma/(b-1) + x_K + 1/2]**2``.
    """
    if base < 2:
        raise ValueError("base must be at least 2")
    b = float(base)
    c = base_constants(base).c_const
    g = gamma_b(base)
    x = np.asarray(x_k, dtype=float)
    err = b ** 7 * a_const / ((b - 1.0) ** 3 * np.power(c, x - 0.5))
    out = 16.0 * math.pi ** 2 / (b * b - 1.0) ** 2 * (b * b / 4.0 + err) * (g / (b - 1.0) + x + 0.5) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BaseStudyRow:
    base: int
    shrink: int
    c_analytic: float
    gamma_b: float
    x_k_opt: float
    prefactor: float

    @property
    def prefactor_over_pi(self) -> float:
        """``sqrt(prefactor) / pi``, the figure usually quoted as ``(value * pi)**2``."""
        return math.sqrt(self.prefactor) / math.pi


def optimize_base(base: int, step: float = 0.01, x_max: float = 1000.0) -> tuple[float, float]:
    """Minimize `base_prefactor` over a real grid ``step, 2 step, ..., x_max``."""
    xs = np.arange(1, int(round(x_max / step)) + 1) * step
    vals = base_prefactor(base, xs)
    i = int(np.argmin(vals))
    if i in (0, xs.size - 1):
        raise ValueError(f"optimum for base {base} lies at the grid edge; widen the scan")
    return float(xs[i]), float(vals[i])


def base_study(b_max: int = 10, b_min: int = 2, step: float = 0.01, x_max: float = 1000.0) -> list[BaseStudyRow]:
    rows = []
    for b in range(b_min, b_max + 1):
        x, v = optimize_base(b, step, x_max)
        rows.append(BaseStudyRow(b, b + 1, base_constants(b).c_const, gamma_b(b), x, v))
    return rows


def best_base(rows) -> BaseStudyRow:
    return min(rows, key=lambda r: r.prefactor)
