"""Spherically constrained flow with the closed-form Lagrange multiplier.

The flow ``dx/dt = -lam(x) x + h + f(x)`` stays on the sphere |x|^2 = N when
``lam(x) = x . (h + f(x)) / N``; differentiating the constraint gives exactly
that multiplier, so no implicit solve is needed.  Integration is classical
RK4 with the multiplier recomputed at every stage, plus an optional
renormalization of |x| after each step that removes the residual
O(dt^5)-per-step drift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ParameterError
from .field_model import FieldInstance, covariance_pair
from .search import CountReport, EquilibriumPoint

__all__ = [
    "Trajectory",
    "DynamicsOptions",
    "RunResult",
    "lambda_of_state",
    "velocity",
    "integrate",
    "run_to_equilibrium",
    "run_to_equilibrium_batch",
    "default_dt",
]


def lambda_of_state(inst: FieldInstance, x: np.ndarray,
                    tol: float = 1e-6) -> float | np.ndarray:
    """Lagrange multiplier ``x . (h + f(x)) / N`` on the sphere (batched).

    Raises for points off the sphere beyond `tol` (relative on |x|^2/N).
    """
    x = np.asarray(x, dtype=float)
    drift = (np.abs((x * x).sum(axis=-1) / inst.n - 1.0)).max()
    if drift > tol:
        raise DomainError(f"state off the sphere: | |x|^2/N - 1 | = {drift:.3e}")
    lam = (x * inst.drift(x)).sum(axis=-1) / inst.n
    return float(lam) if np.ndim(lam) == 0 else lam


def velocity(inst: FieldInstance, x: np.ndarray) -> np.ndarray:
    """Constrained flow velocity -lam(x) x + h + f(x) (batched, no sphere check)."""
    x = np.asarray(x, dtype=float)
    d = inst.drift(x)
    lam = (x * d).sum(axis=-1, keepdims=True) / inst.n
    return d - lam * x


def default_dt(inst: FieldInstance) -> float:
    """Field-scale step 0.01/sqrt(Phi1'(1) + sigma^2)."""
    p = inst.params
    dphi1 = 0.0 if p.field_free else covariance_pair(p).dphi1(1.0)
    scale = math.sqrt(dphi1 + p.sigma ** 2)
    if scale == 0.0:
        raise ParameterError("no field scale: provide dt explicitly")
    return 0.01 / scale


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    lambdas: np.ndarray
    speeds: np.ndarray
    constraint_drift: float

    def to_csv(self, path, full_state: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            head = ["t", "lambda", "speed"]
            if full_state:
                head += [f"x{i}" for i in range(self.states.shape[1])]
            writer.writerow(head)
            for i, t in enumerate(self.times):
                row = [repr(float(t)), repr(float(self.lambdas[i])),
                       repr(float(self.speeds[i]))]
                if full_state:
                    row += [repr(float(v)) for v in self.states[i]]
                writer.writerow(row)


def _check_start(inst: FieldInstance, x0: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != inst.n:
        raise ParameterError(f"start has dimension {x0.shape[-1]}, field {inst.n}")
    off = np.abs((x0 * x0).sum(axis=-1) / inst.n - 1.0)
    if off.max() > 1e-12:
        raise DomainError(f"start off the sphere: | |x|^2/N - 1 | = {off.max():.3e}")
    return x0


def _rk4_step(inst: FieldInstance, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = velocity(inst, x)
    k2 = velocity(inst, x + 0.5 * dt * k1)
    k3 = velocity(inst, x + 0.5 * dt * k2)
    k4 = velocity(inst, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(inst: FieldInstance, x0: np.ndarray, dt: float, t_end: float,
              renormalize: bool = True, sample_stride: int = 1) -> Trajectory:
    """Integrate the constrained flow from a point on the sphere.

    With `renormalize` the state is projected back to radius sqrt(N) after
    every step; otherwise the norm drifts at the scheme's order and the run
    aborts if |x| leaves a 10% band.
    """
    if dt <= 0 or t_end <= 0:
        raise ParameterError("dt and t_end must be positive")
    x = _check_start(inst, x0).copy()
    sqrt_n = math.sqrt(inst.n)
    steps = int(math.ceil(t_end / dt))
    times, states, lambdas, speeds = [], [], [], []
    drift = 0.0

    def record(t, x):
        times.append(t)
        states.append(x.copy())
        lambdas.append((x * inst.drift(x)).sum() / inst.n)
        speeds.append(np.linalg.norm(velocity(inst, x)))

    record(0.0, x)
    for i in range(1, steps + 1):
        x = _rk4_step(inst, x, dt)
        norm = np.linalg.norm(x)
        if renormalize:
            x = sqrt_n * x / norm
        elif abs(norm / sqrt_n - 1.0) > 0.1:
            raise NumericalError(
                f"integration diverged at t={i * dt:.3g}: |x|/sqrt(N) = "
                f"{norm / sqrt_n:.3f} (renormalization is off)")
        drift = max(drift, abs(norm * norm / inst.n - 1.0) if not renormalize
                    else abs((x * x).sum() / inst.n - 1.0))
        if i % sample_stride == 0 or i == steps:
            record(i * dt, x)
    return Trajectory(times=np.array(times), states=np.array(states),
                      lambdas=np.array(lambdas), speeds=np.array(speeds),
                      constraint_drift=float(drift))


@dataclass(frozen=True)
class DynamicsOptions:
    dt: float | None = None
    t_max: float | None = None
    v_tol: float = 1e-8
    renormalize: bool = True
    check_every: int = 8


@dataclass
class RunResult:
    converged: bool
    status: str  # "converged" | "no-convergence"
    x: np.ndarray
    lam: float
    v_norm: float
    t: float
    matched: EquilibriumPoint | None = None


def _match_point(report: CountReport, x: np.ndarray) -> EquilibriumPoint | None:
    for pt in report.points:
        if np.linalg.norm(pt.x - x) <= report.dedup_radius:
            return pt
    return None


def run_to_equilibrium(inst: FieldInstance, x0: np.ndarray,
                       opts: DynamicsOptions | None = None,
                       report: CountReport | None = None) -> RunResult:
    """Integrate until the velocity norm drops below `v_tol` or time runs out.

    Convergence is detected on the velocity, not on state differences, to
    avoid false positives on slowly drifting manifolds.  Non-relaxational
    flows may cycle forever; that outcome is reported, not raised.  With a
    `report`, a converged terminal state is matched against the enumerated
    equilibria by the report's dedup radius.
    """
    return run_to_equilibrium_batch(inst, np.asarray(x0)[None, :], opts,
                                    report)[0]


def run_to_equilibrium_batch(inst: FieldInstance, x0s: np.ndarray,
                             opts: DynamicsOptions | None = None,
                             report: CountReport | None = None
                             ) -> list[RunResult]:
    """Batched `run_to_equilibrium` over rows of x0s (shared time grid)."""
    opts = opts or DynamicsOptions()
    dt = opts.dt if opts.dt is not None else default_dt(inst)
    if opts.t_max is not None:
        t_max = opts.t_max
    else:
        # 8000 default-sized steps = 80 units of the slowest field scale
        t_max = 8000.0 * dt
    x = _check_start(inst, x0s).copy()
    sqrt_n = math.sqrt(inst.n)
    b = x.shape[0]
    done = np.zeros(b, dtype=bool)
    t_done = np.full(b, np.nan)
    steps = int(math.ceil(t_max / dt))
    for i in range(1, steps + 1):
        act = ~done
        if not np.any(act):
            break
        x[act] = _rk4_step(inst, x[act], dt)
        if opts.renormalize:
            x[act] = sqrt_n * x[act] / np.linalg.norm(x[act], axis=1, keepdims=True)
        if i % opts.check_every == 0 or i == steps:
            v = np.linalg.norm(velocity(inst, x[act]), axis=1)
            newly = np.flatnonzero(act)[v <= opts.v_tol]
            done[newly] = True
            t_done[newly] = i * dt
    results = []
    vfinal = np.linalg.norm(velocity(inst, x), axis=1)
    lam = (x * inst.drift(x)).sum(axis=1) / inst.n
    for j in range(b):
        conv = bool(done[j])
        matched = None
        if conv and report is not None:
            matched = _match_point(report, x[j])
        results.append(RunResult(
            converged=conv,
            status="converged" if conv else "no-convergence",
            x=x[j].copy(), lam=float(lam[j]), v_norm=float(vfinal[j]),
            t=float(t_done[j]) if conv else float(steps * dt),
            matched=matched))
    return results
