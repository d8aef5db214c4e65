"""Angle arithmetic, the schedule data model and the randomness contract.

Everything here is an immutable value. Angles are canonicalized to
``[0, 2*pi)`` on construction so that downstream interval tests can compare
representatives directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Calibrated failure-bound constants (prefactor, base) for the pi/3 window.
NUMERIC_A = 0.5949
NUMERIC_C = 1.6640
#: Largest box half-width in frequency space that keeps the pi/3 window.
EPSILON_PI3 = math.sqrt(6.0) / 8.0

LADDER = "ladder"
ADAPTIVE_MLE = "adaptive_mle"
LAST_STEP_MODES = (LADDER, ADAPTIVE_MLE)


class InfeasibleError(ValueError):
    """Raised when planner parameters admit no valid schedule."""


# ---------------------------------------------------------------------------
# angles
# ---------------------------------------------------------------------------


def canonicalize(x) -> "Angle":
    """Reduce ``x`` (radians) to its representative in ``[0, 2*pi)``."""
    return Angle(x)


def wrap(x):
    """Vectorized reduction to ``[0, 2*pi)``; accepts scalars or arrays."""
    y = np.mod(x, TWO_PI)
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    return np.where(y >= TWO_PI, 0.0, y)


class Angle(float):
    """A phase on the unit circle, stored as its canonical float value.

    Arithmetic on an ``Angle`` returns plain floats; wrap the result again
    where a canonical representative is required.
    """

    __slots__ = ()

    def __new__(cls, x=0.0):
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"angle must be finite, got {x!r}")
        y = math.fmod(x, TWO_PI)
        if y < 0.0:
            y += TWO_PI
        if y >= TWO_PI:
            y = 0.0
        return super().__new__(cls, y)

    def __repr__(self):
        return f"Angle({float(self)!r})"


def circle_distance(a, b):
    """Distance on the unit circle, ``pi - |(a - b) mod 2pi - pi|``.

    Works elementwise on arrays; the result lies in ``[0, pi]``.
    """
    x = np.mod(np.subtract(a, b), TWO_PI)
    d = math.pi - np.abs(x - math.pi)
    if np.ndim(d) == 0:
        return float(d)
    return d


def signed_offset(a, b):
    """Signed representative of ``a - b`` in ``[-pi, pi)``."""
    return np.mod(np.subtract(a, b) + math.pi, TWO_PI) - math.pi


def round_half_up(x):
    """Nearest integer with ties rounded up (0.5 -> 1, 2.5 -> 3)."""
    if np.ndim(x) == 0:
        return int(math.floor(float(x) + 0.5))
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# schedule model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSpec:
    """One rung of the ladder: ``nu0`` Type-0 and ``nuplus`` Type-+ shots of
    GHZ states with ``m`` probes each."""

    m: int
    nu0: int
    nuplus: int

    def __post_init__(self):
        for name in ("m", "nu0", "nuplus"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.m < 1:
            raise ValueError(f"entanglement size must be >= 1, got {self.m}")
        if self.nu0 < 0 or self.nuplus < 0:
            raise ValueError("shot counts must be non-negative")

    @property
    def shots(self) -> int:
        return self.nu0 + self.nuplus

    @property
    def probes(self) -> int:
        return self.shots * self.m


def ladder_sizes(k_steps: int, base: int = 2, cap: int | None = None) -> list[int]:
    """Entanglement sizes of a ``k_steps`` ladder.

    Without a cap the sizes are ``base**(j-1)``. With a cap ``R`` they are
    ``ceil(R / 2**(K-j))`` (base 2 only), so the last rung has exactly ``R``
    probes.
    """
    if cap is None:
        return [base ** (j - 1) for j in range(1, k_steps + 1)]
    if base != 2:
        raise ValueError("capped ladders are defined for base 2 only")
    return [-(-cap // 2 ** (k_steps - j)) for j in range(1, k_steps + 1)]


def steps_for_cap(cap: int) -> int:
    """Smallest K with ``ceil(cap / 2**(K-1)) == 1``."""
    if cap < 1:
        raise ValueError("cap must be a positive integer")
    k = 1
    while -(-cap // 2 ** (k - 1)) != 1:
        k += 1
    return k


@dataclass(frozen=True)
class SchedulePlan:
    """A K-step measurement schedule.

    Attributes
    ----------
    base : int
        Growth factor of the entanglement sizes.
    shrink : int
        Confidence-window divisor; the per-step window is ``pi / shrink``.
        Must equal ``base + 1`` for the replica selection to be unambiguous.
    steps : tuple of StepSpec
    last_step_mode : {"ladder", "adaptive_mle"}
    max_size_cap : int or None
        Optional maximal GHZ size ``R``; sizes are then a ceiling ladder.
    """

    base: int = 2
    shrink: int = 3
    steps: tuple[StepSpec, ...] = ()
    last_step_mode: str = LADDER
    max_size_cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.base < 2:
            raise ValueError(f"base must be >= 2, got {self.base}")
        if self.shrink != self.base + 1:
            raise ValueError(
                f"shrink must equal base + 1 (base={self.base}, shrink={self.shrink})"
            )
        if self.last_step_mode not in LAST_STEP_MODES:
            raise ValueError(f"unknown last_step_mode {self.last_step_mode!r}")
        if self.max_size_cap is not None and self.steps:
            if steps_for_cap(self.max_size_cap) != len(self.steps):
                raise ValueError("a capped plan must have the minimal number of steps")
        expected = ladder_sizes(len(self.steps), self.base, self.max_size_cap)
        got = [s.m for s in self.steps]
        if got != expected:
            raise ValueError(f"step sizes {got} do not match the ladder {expected}")
        if self.last_step_mode == ADAPTIVE_MLE and len(self.steps) < 2:
            raise ValueError("an adaptive last step needs at least one localization step")

    @property
    def k_steps(self) -> int:
        return len(self.steps)

    @property
    def sizes(self) -> list[int]:
        return [s.m for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "shrink": self.shrink,
            "cap": self.max_size_cap,
            "last_step_mode": self.last_step_mode,
            "steps": [{"m": s.m, "nu0": s.nu0, "nuplus": s.nuplus} for s in self.steps],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "SchedulePlan":
        allowed = {"base", "shrink", "cap", "last_step_mode", "steps"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown plan fields: {sorted(unknown)}")
        steps = []
        for raw in doc.get("steps", []):
            extra = set(raw) - {"m", "nu0", "nuplus"}
            if extra:
                raise ValueError(f"unknown step fields: {sorted(extra)}")
            steps.append(StepSpec(raw["m"], raw["nu0"], raw["nuplus"]))
        return cls(
            base=doc.get("base", 2),
            shrink=doc.get("shrink", doc.get("base", 2) + 1),
            steps=tuple(steps),
            last_step_mode=doc.get("last_step_mode", LADDER),
            max_size_cap=doc.get("cap"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SchedulePlan":
        return cls.from_dict(json.loads(text))

    @classmethod
    def symmetric(
        cls,
        nus: Sequence[int],
        base: int = 2,
        last_step_mode: str = LADDER,
        cap: int | None = None,
    ) -> "SchedulePlan":
        """Plan with ``nu0 == nuplus == nus[j]`` on a standard ladder."""
        sizes = ladder_sizes(len(nus), base, cap)
        steps = tuple(StepSpec(m, int(n), int(n)) for m, n in zip(sizes, nus))
        return cls(base, base + 1, steps, last_step_mode, cap)


def total_probes(plan: SchedulePlan | Iterable[StepSpec]) -> int:
    """Number of probes consumed, ``sum_j (nu0_j + nuplus_j) * m_j``."""
    steps = plan.steps if isinstance(plan, SchedulePlan) else plan
    return sum(s.probes for s in steps)


# ---------------------------------------------------------------------------
# bound constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the per-step failure bound ``A * C**(-nu)``.

    ``gamma`` is the slope of the optimal resource ramp, ``3 / log_b(C)``;
    it is derived from ``c_const`` unless given explicitly.
    """

    a_const: float
    c_const: float
    epsilon: float = EPSILON_PI3
    base: int = 2
    gamma: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.a_const < 0:
            raise ValueError("A must be non-negative")
        if not self.c_const > 1.0:
            raise ValueError(f"C must exceed 1, got {self.c_const}")
        if self.gamma is None:
            g = 0.0 if math.isinf(self.c_const) else 3.0 / math.log(self.c_const, self.base)
            object.__setattr__(self, "gamma", g)

    @property
    def log_c(self) -> float:
        return math.log(self.c_const)

    @classmethod
    def numeric(cls) -> "BoundConstants":
        """Constants fitted by exact enumeration for the pi/3 window."""
        return cls(NUMERIC_A, NUMERIC_C)

    @classmethod
    def hoeffding(cls, eps: float = EPSILON_PI3) -> "BoundConstants":
        """Analytic constants ``A = 4``, ``C = exp(2 eps^2)``."""
        return cls(4.0, math.exp(2.0 * eps * eps), epsilon=eps)

    @classmethod
    def analytic(cls, base: int) -> "BoundConstants":
        """Analytic constants for a base-``b`` ladder with window ``pi/(b+1)``."""
        n = base + 1
        s = math.sin(math.pi / n)
        return cls(4.0, math.exp(0.25 * s * s), epsilon=s / (2.0 * math.sqrt(2.0)), base=base)

    def to_dict(self) -> dict:
        return {
            "a_const": self.a_const,
            "c_const": self.c_const,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "base": self.base,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BoundConstants":
        allowed = {"a_const", "c_const", "gamma", "epsilon", "base"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown constants fields: {sorted(unknown)}")
        return cls(
            float(doc["a_const"]),
            float(doc["c_const"]),
            epsilon=float(doc.get("epsilon", EPSILON_PI3)),
            base=int(doc.get("base", 2)),
            gamma=None if doc.get("gamma") is None else float(doc["gamma"]),
        )


# ---------------------------------------------------------------------------
# randomness contract
# ---------------------------------------------------------------------------

# Independent Philox key lanes; the second key word selects the lane.
STREAM_OUTCOME = 0
STREAM_SPECTATOR = 1
STREAM_SURVIVAL = 2

_MASK64 = (1 << 64) - 1


def uniform_block(seed: int, stream: int, first_trial: int, n_trials: int, per_trial: int):
    """Uniforms for trials ``first_trial .. first_trial + n_trials - 1``.

    Each trial owns a fixed slice of a counter-based Philox stream keyed by
    ``(seed, stream)``, so row ``t`` depends only on the global trial index
    and never on how trials are split across calls or workers.
    """
    if per_trial == 0 or n_trials == 0:
        return np.empty((n_trials, per_trial))
    blocks = -(-per_trial // 4)  # one Philox counter step yields 4 doubles
    bitgen = np.random.Philox(key=np.array([seed & _MASK64, stream], dtype=np.uint64))
    if first_trial:
        bitgen.advance(first_trial * blocks)
    raw = np.random.Generator(bitgen).random(n_trials * blocks * 4)
    return raw.reshape(n_trials, blocks * 4)[:, :per_trial]
