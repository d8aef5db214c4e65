"""Interval-halving phase estimation over a ladder of GHZ sizes.

Step ``j`` measures ``M_j * theta`` modulo ``2*pi``. That fixes ``theta`` up
to ``M_j`` replicas spaced ``2*pi / M_j`` apart, and the fold keeps the
replica compatible with the confidence interval inherited from step
``j - 1``. When ``shrink == base + 1`` at most one replica can be
compatible, so the choice is never ambiguous.

The scalar API (`fold_step`, `run_estimation`) is a thin veneer over the
array engine `simulate_trials`, which the campaign harness also uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import (
    ADAPTIVE_MLE,
    STREAM_OUTCOME,
    STREAM_SPECTATOR,
    STREAM_SURVIVAL,
    TWO_PI,
    Angle,
    SchedulePlan,
    circle_distance,
    signed_offset,
    uniform_block,
    wrap,
)
from .measurement import estimate_from_counts, quadrature_mle, type0_probability

BACKENDS = ("collective", "parity", "noiseless")


class StepRecord(NamedTuple):
    m: int
    mjtheta_hat: float
    replica: int | None
    theta_hat: float
    success: bool | None


@dataclass(frozen=True)
class EstimationState:
    """Running estimate after ``step_index`` folds.

    ``half_width`` is the confidence half-width ``pi / (n * M_j)`` of the
    last completed step (``pi`` before any step).
    """

    theta_hat: Angle = Angle(0.0)
    step_index: int = 0
    half_width: float = math.pi
    history: tuple = field(default_factory=tuple)


def fold_array(theta_hat, w_prev, mj_hat, m):
    """Vectorized replica selection.

    Args:
        theta_hat: previous estimates in ``[0, 2*pi)``.
        w_prev: half-width of the previous confidence interval.
        mj_hat: estimates of ``m * theta`` in ``[0, 2*pi)``.
        m: entanglement size of the current step.

    Returns:
        ``(new_theta_hat, replica)``, where ``replica`` is the integer ``k``
        with ``m * new_theta_hat = mj_hat + 2*pi*k`` before wrapping.
    """
    s = TWO_PI / m
    theta_hat = np.asarray(theta_hat, dtype=float)
    shift = np.floor((theta_hat - w_prev) / s)
    xi = np.asarray(mj_hat, dtype=float) / m + shift * s
    down = (xi >= theta_hat + 0.5 * s) & (xi < theta_hat + 1.5 * s)
    up = (xi >= theta_hat - 1.5 * s) & (xi < theta_hat - 0.5 * s)
    adj = np.where(down, -1.0, np.where(up, 1.0, 0.0))
    xi = xi + adj * s
    replica = (shift + adj).astype(np.int64)
    return wrap(xi), replica


def fold_step(state: EstimationState, mjtheta_hat, m: int, base: int = 2, shrink: int = 3,
              theta_true=None) -> EstimationState:
    """Fold one step's estimate of ``m * theta`` into the running state.

    The first step has no prior interval and is taken verbatim. ``base`` is
    accepted for symmetry with the plan model; the fold only needs the
    previous half-width and ``m``, so ceiling ladders work unchanged.
    """
    mj = float(Angle(mjtheta_hat))
    if state.step_index == 0:
        new, replica = wrap(mj / m), 0
    else:
        new, replica = fold_array(float(state.theta_hat), state.half_width, mj, m)
        new, replica = float(new), int(replica)
    success = None
    if theta_true is not None:
        success = bool(circle_distance(mj, m * float(theta_true)) <= math.pi / shrink)
    rec = StepRecord(m, mj, replica, float(new), success)
    return EstimationState(Angle(new), state.step_index + 1, math.pi / (shrink * m),
                           state.history + (rec,))


def overlap_count(theta_hat, w_prev, mjtheta_hat, m: int, w_new: float) -> int:
    """Number of replicas whose interval ``c +- w_new`` meets ``theta_hat +- w_prev``.

    Intervals are half-open, so touching endpoints count on one side only.
    """
    k = np.arange(m)
    c = (float(mjtheta_hat) + TWO_PI * k) / m
    d = signed_offset(c, float(theta_hat))
    w = w_prev + w_new
    return int(np.count_nonzero((d >= -w) & (d < w)))


def check_equivalence(theta_true, state: EstimationState, shrink: int = 3) -> bool:
    """Check that per-step success matches the folded-interval condition.

    For every step whose predecessors all succeeded, the condition
    ``|M_j theta_hat - M_j theta| <= pi/n`` (mod ``2*pi``) must agree with
    ``|theta_hat_j - theta| <= pi/(n M_j)``.
    """
    theta = float(theta_true)
    for rec in state.history:
        m = rec.m
        step_ok = circle_distance(rec.mjtheta_hat, m * theta) <= math.pi / shrink
        fold_ok = circle_distance(rec.theta_hat, theta) <= math.pi / (shrink * m) * (1 + 1e-12)
        if step_ok != fold_ok:
            return False
        if not step_ok:
            break
    return True


# ---------------------------------------------------------------------------
# array engine
# ---------------------------------------------------------------------------


class TrialBatch(NamedTuple):
    theta_hat: np.ndarray       # (T,)
    mj_hat: np.ndarray          # (T, K)
    theta_path: np.ndarray      # (T, K) estimate after each step
    replica: np.ndarray         # (T, K)
    success: np.ndarray         # (T, K) bool
    survivors: np.ndarray       # (T, K, 2) surviving shots per quadrature


def per_trial_uniforms(plan: SchedulePlan, backend: str = "collective") -> tuple[int, int]:
    """Uniforms per trial on the outcome and spectator streams."""
    shots = sum(s.shots for s in plan.steps)
    spect = sum(s.shots * (s.m - 1) for s in plan.steps) if backend == "parity" else 0
    return shots, spect


def _outcomes(p, u_out, u_spec, m, backend):
    """Outcome-0 indicator per shot; ``p`` has the shape of ``u_out``."""
    if backend != "parity" or m == 1:
        return u_out < p
    t, shots = u_out.shape
    bits = u_spec.reshape(t, shots, m - 1) < 0.5
    spect = bits.sum(axis=2)
    last = (u_out < p) ^ (spect % 2 == 1)
    return (spect + last) % 2 == 1


def simulate_trials(theta, plan: SchedulePlan, seed: int, first_trial: int = 0,
                    n_trials: int = 1, backend: str = "collective",
                    eta: float | None = None) -> TrialBatch:
    """Run ``n_trials`` independent estimations at a fixed true phase.

    Trial ``t`` draws its randomness from slice ``first_trial + t`` of each
    stream, so any chunking of a campaign gives the same per-trial results.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    theta = float(theta)
    steps = plan.steps
    k_steps = len(steps)
    n = plan.shrink
    t_all = n_trials
    noiseless = backend == "noiseless"
    n_out, n_spec = per_trial_uniforms(plan, backend)
    if not noiseless:
        u_out = uniform_block(seed, STREAM_OUTCOME, first_trial, t_all, n_out)
        u_spec = uniform_block(seed, STREAM_SPECTATOR, first_trial, t_all, n_spec) if n_spec else None
        lossy = eta is not None and eta < 1.0
        u_surv = uniform_block(seed, STREAM_SURVIVAL, first_trial, t_all, n_out) if lossy else None
    mj_hat = np.zeros((t_all, k_steps))
    path = np.zeros((t_all, k_steps))
    replica = np.zeros((t_all, k_steps), dtype=np.int64)
    survivors = np.zeros((t_all, k_steps, 2))
    th = np.zeros(t_all)
    w_prev = math.pi
    off = 0
    soff = 0
    for j, st in enumerate(steps):
        m = st.m
        adaptive = plan.last_step_mode == ADAPTIVE_MLE and j == k_steps - 1
        if adaptive:
            c0 = th - math.pi / (2 * m)
            p_a = np.broadcast_to(type0_probability(theta - c0, m)[:, None], (t_all, st.nu0))
            p_b = np.broadcast_to(type0_probability(theta - th, m)[:, None], (t_all, st.nuplus))
        else:
            p_a = np.full((t_all, st.nu0), type0_probability(theta, m))
            p_b = np.full((t_all, st.nuplus), type0_probability(theta - math.pi / (2 * m), m))
        if noiseless:
            a0 = p_a.sum(axis=1)
            ap = p_b.sum(axis=1)
            s0 = np.full(t_all, float(st.nu0))
            sp = np.full(t_all, float(st.nuplus))
        else:
            sl0 = slice(off, off + st.nu0)
            slp = slice(off + st.nu0, off + st.shots)
            us0 = usp = None
            if u_spec is not None:
                us0 = u_spec[:, soff: soff + st.nu0 * (m - 1)]
                usp = u_spec[:, soff + st.nu0 * (m - 1): soff + st.shots * (m - 1)]
            o0 = _outcomes(p_a, u_out[:, sl0], us0, m, backend)
            op = _outcomes(p_b, u_out[:, slp], usp, m, backend)
            if u_surv is not None:
                keep = eta ** m
                k0 = u_surv[:, sl0] < keep
                kp = u_surv[:, slp] < keep
                o0 &= k0
                op &= kp
                s0 = k0.sum(axis=1).astype(float)
                sp = kp.sum(axis=1).astype(float)
            else:
                s0 = np.full(t_all, float(st.nu0))
                sp = np.full(t_all, float(st.nuplus))
            a0 = o0.sum(axis=1).astype(float)
            ap = op.sum(axis=1).astype(float)
        survivors[:, j, 0] = s0
        survivors[:, j, 1] = sp
        if adaptive:
            th = quadrature_mle(a0, s0, ap, sp, m, th, w_prev)
            mj_hat[:, j] = wrap(m * th)
            replica[:, j] = -1
        else:
            est = estimate_from_counts(a0, s0, ap, sp)
            mj_hat[:, j] = est
            if j == 0:
                th = wrap(est / m)
            else:
                th, replica[:, j] = fold_array(th, w_prev, est, m)
        path[:, j] = th
        w_prev = math.pi / (n * m)
        off += st.shots
        soff += st.shots * (m - 1)
    sizes = np.array([s.m for s in steps], dtype=float)
    success = circle_distance(mj_hat, wrap(sizes[None, :] * theta)) <= math.pi / n
    success = np.asarray(success, dtype=bool).reshape(t_all, k_steps)
    return TrialBatch(th, mj_hat, path, replica, success, survivors)


def first_failure(success: np.ndarray) -> np.ndarray:
    """1-based index of the first failed step per trial, 0 if none failed."""
    failed = ~success
    any_fail = failed.any(axis=1)
    return np.where(any_fail, failed.argmax(axis=1) + 1, 0)


def run_estimation(theta_true, plan: SchedulePlan, backend: str = "collective",
                   seed: int = 0, trial: int = 0, eta: float | None = None):
    """Estimate ``theta_true`` once; returns ``(theta_hat, state)``."""
    res = simulate_trials(theta_true, plan, seed, trial, 1, backend, eta)
    hist = []
    for j in range(plan.k_steps):
        rep = int(res.replica[0, j])
        hist.append(StepRecord(plan.steps[j].m, float(res.mj_hat[0, j]), None if rep < 0 else rep,
                               float(res.theta_path[0, j]), bool(res.success[0, j])))
    last_m = plan.steps[-1].m if plan.steps else 1
    width = math.pi / (plan.shrink * last_m) if plan.steps else math.pi
    state = EstimationState(Angle(res.theta_hat[0]), plan.k_steps, width, tuple(hist))
    return state.theta_hat, state

