"""Monte Carlo campaigns and the tabular data behind each figure.

A campaign runs many independent estimations per true phase. The global
trial index of trial ``t`` at grid point ``i`` is ``i * trials + t`` and
selects that trial's slice of every random stream, so the result does not
depend on chunk sizes or on how many worker processes share the load.
"""

from __future__ import annotations

import csv
import io
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .baseb import base_study
from .constrained import (
    HybridPlanParams,
    LossModel,
    hybrid_last_step,
    hybrid_localization,
    hybrid_mse_bound,
    hybrid_total_probes,
    lossy_comparison,
    lossy_mse_bound,
    matched_ideal_xk,
)
from .core import TWO_PI, BoundConstants, SchedulePlan, circle_distance, total_probes
from .estimator import BACKENDS, first_failure, per_trial_uniforms, simulate_trials
from .planner import (
    RampParams,
    mse_bound_ramp,
    mse_bound_raw,
    mse_bound_vs_n,
    piecewise_bound,
    qfi_inverse_piecewise,
    upgrade_point,
)

FIGURES = ("fig5", "fig6", "fig7", "fig8", "fig9", "fig10")

# uniforms held in memory per chunk, summed over streams
_CHUNK_UNIFORMS = 1 << 22


def default_theta_grid(k_steps: int, uniform: int = 24, adversarial: int = 8,
                       offset: float = 1e-3) -> np.ndarray:
    """Uniform angles plus angles just past period boundaries ``k 2pi / 2**K``.

    The adversarial points sit where the finest ladder step has its
    replica boundaries, shifted by ``offset`` so they are not exactly on
    them.
    """
    u = TWO_PI * (np.arange(uniform) + 0.5) / uniform
    period = TWO_PI / 2 ** k_steps
    picks = np.linspace(0, 2 ** k_steps, adversarial, endpoint=False).astype(int)
    adv = np.mod(picks * period + offset, TWO_PI)
    return np.concatenate([u, adv])


@dataclass(frozen=True)
class CampaignSpec:
    plan: SchedulePlan
    theta_values: tuple
    trials: int
    seed: int = 0
    backend: str = "collective"
    loss: LossModel | None = None
    constants: BoundConstants = BoundConstants.numeric()
    ramp_params: RampParams | None = None  # enables the closed-form bound
    workers: int = 1
    chunk: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta_values", tuple(float(t) for t in self.theta_values))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.theta_values:
            raise ValueError("theta grid must be non-empty")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")

    def chunk_size(self) -> int:
        if self.chunk:
            return int(self.chunk)
        out, spec = per_trial_uniforms(self.plan, self.backend)
        per = out * (2 if self.loss is not None else 1) + spec
        return max(1, _CHUNK_UNIFORMS // max(per, 1))


@dataclass(frozen=True)
class CampaignSummary:
    empirical_mse: float
    empirical_rmse: float
    per_step_first_failure: tuple  # index j-1 counts runs whose first failure is step j
    bound_raw: float
    bound_closed: float
    n_total: int
    trials: int
    per_theta_mse: tuple = field(default=())
    max_drift_violations: int = 0

    @property
    def normalized_mse(self) -> float:
        """``MSE * N**2``."""
        return self.empirical_mse * self.n_total ** 2

    @property
    def max_theta_mse(self) -> float:
        return max(self.per_theta_mse) if self.per_theta_mse else float("nan")


def _chunk_job(args):
    plan, theta, seed, first, count, backend, eta = args
    res = simulate_trials(theta, plan, seed, first, count, backend, eta)
    err = np.asarray(circle_distance(res.theta_hat, theta))
    ff = first_failure(res.success)
    hist = np.bincount(ff, minlength=plan.k_steps + 1)
    # drift: a first failure at j >= 2 leaves the final error below 8pi/(3 * 2**(j-1))
    viol = 0
    if plan.base == 2 and plan.max_size_cap is None and plan.last_step_mode == "ladder":
        late = ff >= 2
        if np.any(late):
            lim = 8.0 * math.pi / (3.0 * 2.0 ** (ff[late] - 1))
            viol = int(np.count_nonzero(err[late] > lim * (1 + 1e-12)))
    return math.fsum((err * err).tolist()), hist, viol


def _jobs(spec: CampaignSpec):
    eta = None if spec.loss is None else spec.loss.eta
    size = spec.chunk_size()
    for i, theta in enumerate(spec.theta_values):
        base = i * spec.trials
        for start in range(0, spec.trials, size):
            count = min(size, spec.trials - start)
            yield i, (spec.plan, theta, spec.seed, base + start, count, spec.backend, eta)


def run_campaign(spec: CampaignSpec) -> CampaignSummary:
    """Empirical MSE over the theta grid, with first-failure statistics and bounds."""
    jobs = list(_jobs(spec))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_chunk_job, [a for _, a in jobs]))
    else:
        results = [_chunk_job(a) for _, a in jobs]
    per_theta = [[] for _ in spec.theta_values]
    hist = np.zeros(spec.plan.k_steps + 1, dtype=np.int64)
    viol = 0
    for (i, _), (sq, h, v) in zip(jobs, results):
        per_theta[i].append(sq)
        hist += h
        viol += v
    n_runs = spec.trials * len(spec.theta_values)
    total = math.fsum(s for chunk in per_theta for s in chunk)
    mse = total / n_runs
    theta_mse = tuple(math.fsum(c) / spec.trials for c in per_theta)
    if spec.loss is not None:
        raw = lossy_mse_bound(spec.plan, spec.loss, spec.constants)
    else:
        raw = mse_bound_raw(spec.plan, spec.constants)
    closed = mse_bound_ramp(spec.ramp_params) if spec.ramp_params is not None else float("nan")
    return CampaignSummary(mse, math.sqrt(mse), tuple(int(x) for x in hist[1:]), raw, closed,
                           total_probes(spec.plan), n_runs, theta_mse, viol)


# ---------------------------------------------------------------------------
# figure data
# ---------------------------------------------------------------------------


@dataclass
class Table:
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def as_records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]


def _nan_to_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def fig5_data(constants: BoundConstants, k_steps: int = 15, points: int = 200,
              u_lo: float = 12.0, u_hi: float = 40.0) -> Table:
    """Bounds at ``K`` and ``K + 1`` rungs against ``N``, around their crossing."""
    n = np.geomspace(u_lo * 2 ** (k_steps + 1), u_hi * 2 ** (k_steps + 1), points)
    rows = []
    for v in n:
        row = [float(v)]
        for k in (k_steps, k_steps + 1):
            try:
                row.append(mse_bound_vs_n(v, k, constants))
            except ValueError:
                row.append(float("nan"))
        rows.append(row)
    up = upgrade_point(constants, k_steps)
    meta = {"k": k_steps, "u_star": up.u_star, "n_star": up.n_star,
            "x_k_at_n_star": up.x_k, "x_k1_at_n_star": up.x_k1}
    return Table(["n", f"bound_k{k_steps}", f"bound_k{k_steps + 1}"], rows, meta)


def fig6_data(constants: BoundConstants, n0: float = 1e2, n1: float = 1e7, points: int = 400) -> Table:
    """Piecewise bound and inverse QFI against the SQL and Heisenberg references."""
    n = np.geomspace(n0, n1, points)
    with np.errstate(invalid="ignore"):
        mse = piecewise_bound(n, constants)
        qinv = qfi_inverse_piecewise(n, constants)
    rows = [[float(a), 1.0 / a, math.pi ** 2 / a ** 2, float(b), float(c)]
            for a, b, c in zip(n, mse, qinv)]
    return Table(["n", "sql", "hs", "mse_bound", "qfi_inv"], rows)


def fig7_data(constants: BoundConstants, k_steps: int = 10, x_km1: float = 30.0) -> Table:
    """Hybrid shot distribution next to the loss-free ramp spending the same budget."""
    p = HybridPlanParams(k_steps, x_km1, constants)
    hyb = np.append(hybrid_localization(p), hybrid_last_step(p))
    n = hybrid_total_probes(p, rounded=True)
    xk = matched_ideal_xk(n, k_steps, constants)
    ramp_x = RampParams(k_steps, xk, constants).x_values()
    rows = [[j + 1, 2 ** j, float(ramp_x[j]), float(hyb[j])] for j in range(k_steps)]
    meta = {"n_total": n, "x_k_ramp": xk, "bound_ramp": mse_bound_ramp(RampParams(k_steps, xk, constants)),
            "bound_hybrid": hybrid_mse_bound(p)}
    return Table(["j", "m", "x_ramp", "x_hybrid"], rows, meta)


def fig8_data(constants: BoundConstants, k_steps: int = 10, x_k: float = 10.0, eta: float = 0.998) -> Table:
    """Per-step shots of the lossy ramp against the matched loss-free ramp."""
    r = lossy_comparison(k_steps, x_k, LossModel(eta), constants)
    rows = [[j + 1, 2 ** j, float(r.x_provisioned[j]), float(r.x_ideal[j]), float(r.delta_states[j])]
            for j in range(k_steps)]
    meta = {"n_total": r.n_total, "x_k_ideal": r.x_k_ideal, "eta": eta}
    return Table(["j", "m", "x_prime", "x_ideal", "delta_states"], rows, meta)


def fig9_data(constants: BoundConstants, k_steps: int = 10, x_k: float = 10.0, eta: float = 0.998) -> Table:
    """Per-step probe reallocation ``(x'_j - x_j) 2**j``, absolute and relative."""
    r = lossy_comparison(k_steps, x_k, LossModel(eta), constants)
    rows = [[j + 1, 2 ** j, float(r.delta_probes[j]), float(r.delta_states[j] / r.x_ideal[j])]
            for j in range(k_steps)]
    meta = {"n_total": r.n_total, "x_k_ideal": r.x_k_ideal, "eta": eta}
    return Table(["j", "m", "delta_probes", "relative_change"], rows, meta)


def fig10_data(b_max: int = 10) -> Table:
    rows = [[r.base, r.shrink, r.c_analytic, r.gamma_b, r.x_k_opt, r.prefactor]
            for r in base_study(b_max)]
    return Table(["b", "n", "c", "gamma", "x_k_opt", "prefactor"], rows)


def emit_figure_data(figure: str, constants: BoundConstants = BoundConstants.numeric(), **params) -> Table:
    builders = {
        "fig5": lambda: fig5_data(constants, **params),
        "fig6": lambda: fig6_data(constants, **params),
        "fig7": lambda: fig7_data(constants, **params),
        "fig8": lambda: fig8_data(constants, **params),
        "fig9": lambda: fig9_data(constants, **params),
        "fig10": lambda: fig10_data(**params),
    }
    if figure not in builders:
        raise ValueError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    return builders[figure]()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def describe_version() -> str:
    """``git describe`` of the checkout when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(stream, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> None:
    """CSV with a ``# key=value`` header carrying version and run metadata."""
    header = {"version": describe_version()}
    header.update(meta or {})
    for k, v in header.items():
        stream.write(f"# {k}={_fmt(v) if not isinstance(v, str) else v}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def read_csv(text: str) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of `write_csv`: ``(meta, columns, rows)`` as strings."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        elif line:
            body.append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    return meta, rows[0], rows[1:]


def table_to_json(table: Table) -> dict:
    return {
        "meta": {k: _nan_to_none(v) for k, v in table.meta.items()},
        "columns": table.columns,
        "rows": [[_nan_to_none(v) for v in r] for r in table.rows],
    }
