"""Brute-force equilibrium enumeration by multi-start damped Newton.

An equilibrium is a pair (x, lam) solving the bordered system

    -lam x_k + h_k + f_k(x) = 0   (k = 1..N),      |x|^2 = N.

All starts are advanced simultaneously: the batched (N+1)-dimensional Newton
step uses the analytic field Jacobian plus the bordering row/column, damped by
residual-monotone step halving.  Converged starts are deduplicated by
Euclidean distance in x (lam is a function of x at a root), and a saturation
heuristic flags instances whose discovery curve was still rising.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from ._rng import derive_seed, stream
from .errors import NumericalError, ParameterError
from .field_model import FieldInstance, ModelParams, covariance_pair, sample_field
from .predictor import derived_params, mean_total_exact, predict_asymptotic

__all__ = [
    "SolverOptions",
    "EquilibriumPoint",
    "CountReport",
    "MCCountResult",
    "find_equilibria",
    "tangent_spectrum",
    "mc_mean_count",
    "save_count_report_json",
    "mc_result_to_csv",
]


@dataclass(frozen=True)
class SolverOptions:
    """Multi-start Newton controls.

    `n_starts=None` budgets 200 starts per predicted equilibrium (capped at
    10^4).  `dedup_radius=None` defaults to 1e-6 sqrt(N).
    """

    n_starts: int | None = None
    tol: float = 1e-10
    dedup_radius: float | None = None
    max_iter: int = 80
    max_halvings: int = 50
    seed: int = 0
    saturation_fraction: float = 0.25
    max_dim: int = 10


@dataclass
class EquilibriumPoint:
    x: np.ndarray
    lam: float
    residual: float
    tangent_spectrum: np.ndarray
    basin_hits: int


@dataclass
class CountReport:
    n_found: int
    points: list[EquilibriumPoint]
    n_starts: int
    dedup_radius: float
    saturated: bool
    seed: int
    n_converged_starts: int = 0


def _expected_count(params: ModelParams) -> float:
    """Predicted mean count used only to budget the number of starts."""
    if params.field_free:
        return 2.0
    try:
        dp = derived_params(covariance_pair(params), params.sigma)
    except (ParameterError, ValueError):
        return 2.0 * params.n
    try:
        return mean_total_exact(dp, params.n).value
    except Exception:
        pass
    try:
        return predict_asymptotic(dp, params.n).value
    except Exception:
        return 2.0 * params.n


def default_n_starts(params: ModelParams) -> int:
    """Start budget: 200 per predicted equilibrium, in [64, 10^4]."""
    budget = 200.0 * max(_expected_count(params), 1.0)
    return int(min(max(budget, 64), 10_000))


def _system_residual(inst: FieldInstance, x: np.ndarray, lam: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(F, C, max-norm residual) of the equilibrium system, batched."""
    f = inst.drift(x) - lam[..., None] * x
    c = (x * x).sum(axis=-1) - inst.n
    res = np.maximum(np.abs(f).max(axis=-1), np.abs(c))
    return f, c, res


def find_equilibria(inst: FieldInstance, opts: SolverOptions | None = None
                    ) -> CountReport:
    """Enumerate equilibria of one field instance.

    Initial points are uniform on the sphere with the Lagrange multiplier
    seeded from its closed form; an instance is `saturated` when the last
    quarter of the starts discovered nothing new.  Non-saturation is reported
    in the flag, never raised.
    """
    opts = opts or SolverOptions()
    n = inst.n
    if n > opts.max_dim:
        raise ParameterError(
            f"direct enumeration is configured for N <= {opts.max_dim}, got {n}")
    if inst.params.field_free and inst.params.sigma == 0.0:
        raise ParameterError("f = 0 and h = 0: every point of the sphere is "
                             "an equilibrium, enumeration is meaningless")

    n_starts = opts.n_starts
    if n_starts is None:
        n_starts = default_n_starts(inst.params)
    radius = opts.dedup_radius
    if radius is None:
        radius = 1e-6 * math.sqrt(n)

    rng = stream(opts.seed, 0)
    g = rng.standard_normal((n_starts, n))
    x = math.sqrt(n) * g / np.linalg.norm(g, axis=1, keepdims=True)
    lam = (x * inst.drift(x)).sum(axis=1) / n

    eye = np.eye(n)
    active = np.ones(n_starts, dtype=bool)
    converged = np.zeros(n_starts, dtype=bool)
    f, c, res = _system_residual(inst, x, lam)
    checkpoint = res.copy()

    for it in range(opts.max_iter):
        newly = active & (res <= opts.tol)
        converged |= newly
        active &= ~newly
        if it and it % 10 == 0:
            # cull wanderers: a start must keep shrinking its residual
            # (convergent Newton runs end superlinearly, so this is loose)
            active &= res <= 0.7 * checkpoint
            checkpoint = res.copy()
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        xa, la, ra = x[idx], lam[idx], res[idx]
        k = inst.eval_jacobian(xa)
        m = len(idx)
        a_mat = np.zeros((m, n + 1, n + 1))
        a_mat[:, :n, :n] = k - la[:, None, None] * eye
        a_mat[:, :n, n] = -xa
        a_mat[:, n, :n] = 2.0 * xa
        rhs = np.concatenate([-f[idx], -c[idx, None]], axis=1)
        delta = _solve_batch(a_mat, rhs)

        # damped update: full step first, then batched blocks of halving
        # levels for the rows still searching for a step size
        xt, lt = xa + delta[:, :n], la + delta[:, n]
        ft, ct, rt = _system_residual(inst, xt, lt)
        accepted = rt <= (1.0 - 1e-4) * ra
        rem = np.flatnonzero(~accepted)
        for lo_level, hi_level in ((1, 8), (9, opts.max_halvings)):
            if rem.size == 0 or hi_level < lo_level:
                continue
            tgrid = 0.5 ** np.arange(lo_level, hi_level + 1)
            cand_x = xa[rem, None, :] + tgrid[None, :, None] * delta[rem, None, :n]
            cand_l = la[rem, None] + tgrid[None, :] * delta[rem, None, n]
            fc, cc, rc = _system_residual(
                inst, cand_x.reshape(-1, n), cand_l.ravel())
            rc = rc.reshape(rem.size, -1)
            ok = rc <= (1.0 - 1e-4 * tgrid[None, :]) * ra[rem, None]
            first = np.where(ok.any(axis=1), ok.argmax(axis=1), -1)
            took = first >= 0
            rows = rem[took]
            sel = first[took]
            xt[rows] = cand_x[took, sel, :]
            lt[rows] = cand_l[took, sel]
            ft[rows] = fc.reshape(rem.size, len(tgrid), n)[took, sel]
            ct[rows] = cc.reshape(rem.size, -1)[took, sel]
            rt[rows] = rc[took, sel]
            accepted[rows] = True
            rem = rem[~took]
        x[idx[accepted]] = xt[accepted]
        lam[idx[accepted]] = lt[accepted]
        f[idx[accepted]] = ft[accepted]
        c[idx[accepted]] = ct[accepted]
        res[idx[accepted]] = rt[accepted]
        # starts that cannot decrease the residual at any step size stall out
        active[idx[~accepted]] = False
    newly = active & (res <= opts.tol)
    converged |= newly

    # deduplicate in start order (discovery order drives the saturation flag)
    reps: list[int] = []
    hits: list[int] = []
    last_new = -1
    conv_idx = np.flatnonzero(converged)
    for i in conv_idx:
        assigned = False
        for j, r in enumerate(reps):
            if np.linalg.norm(x[i] - x[r]) <= radius:
                hits[j] += 1
                assigned = True
                break
        if not assigned:
            reps.append(int(i))
            hits.append(1)
            last_new = int(i)
    saturated = (len(conv_idx) > 0
                 and last_new < (1.0 - opts.saturation_fraction) * n_starts)

    points = []
    for r, hit in zip(reps, hits):
        _, _, rr = _system_residual(inst, x[r][None, :], lam[r][None])
        points.append(EquilibriumPoint(
            x=x[r].copy(), lam=float(lam[r]), residual=float(rr[0]),
            tangent_spectrum=tangent_spectrum_at(inst, x[r], float(lam[r])),
            basin_hits=hit))
    points.sort(key=lambda pt: (pt.lam, tuple(pt.x)))
    return CountReport(n_found=len(points), points=points, n_starts=n_starts,
                       dedup_radius=radius, saturated=bool(saturated),
                       seed=opts.seed,
                       n_converged_starts=int(converged.sum()))


def _solve_batch(a_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched linear solve with a least-squares fallback on singular systems."""
    try:
        return np.linalg.solve(a_mat, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(rhs)
        for i in range(len(a_mat)):
            try:
                out[i] = np.linalg.solve(a_mat[i], rhs[i])
            except np.linalg.LinAlgError:
                out[i] = np.linalg.lstsq(a_mat[i], rhs[i], rcond=None)[0]
        return out


def tangent_spectrum_at(inst: FieldInstance, x: np.ndarray, lam: float
                        ) -> np.ndarray:
    """Eigenvalues of the flow linearization restricted to the tangent space.

    With Q an orthonormal basis of the tangent space at x, the N-1
    eigenvalues of ``Q^T (K - lam I) Q`` are returned sorted by (real, imag).
    """
    x = np.asarray(x, dtype=float)
    q = scipy.linalg.null_space(x[None, :])
    k = inst.eval_jacobian(x)
    a = q.T @ (k - lam * np.eye(inst.n)) @ q
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError("tangent eigenvalue computation failed") from exc
    order = np.lexsort((ev.imag, ev.real))
    return ev[order]


def tangent_spectrum(inst: FieldInstance, pt: EquilibriumPoint) -> np.ndarray:
    """Tangent-space spectrum of a converged equilibrium point."""
    if pt.residual > 1e-6:
        raise ParameterError(
            f"point residual {pt.residual:.2e} too large for a spectrum report")
    return tangent_spectrum_at(inst, pt.x, pt.lam)


# ---------------------------------------------------------------------------
# Monte Carlo over instances
# ---------------------------------------------------------------------------

@dataclass
class MCCountResult:
    mean: float
    stderr: float
    counts: np.ndarray
    saturated: np.ndarray
    instance_seeds: list[int]
    n_excluded: int
    histogram_edges: np.ndarray | None = None
    histogram_mean: np.ndarray | None = None
    histogram_stderr: np.ndarray | None = None

    @property
    def n_unsaturated(self) -> int:
        return int((~self.saturated).sum())


def mc_mean_count(params: ModelParams, n_instances: int,
                  opts: SolverOptions | None = None, seed: int = 0,
                  lambda_edges=None, strict: bool = False,
                  threads: int = 1) -> MCCountResult:
    """Average equilibrium count over independent field instances.

    Instance seeds are derived from `seed` by a stable hash, so enlarging the
    study never changes earlier instances.  With `strict`, non-saturated
    instances are excluded from the statistics (they are always recorded).
    When `lambda_edges` is given, counts are also binned by the Lagrange
    multiplier of each root.  Instances are independent; `threads` > 1 solves
    them on a thread pool with results merged in instance order, so the
    output does not depend on scheduling.
    """
    if n_instances < 1:
        raise ParameterError("n_instances must be >= 1")
    opts = opts or SolverOptions()
    if opts.n_starts is None:
        # one budget for the whole sweep (all instances share the params)
        opts = replace(opts, n_starts=default_n_starts(params))
    edges = None if lambda_edges is None else np.asarray(lambda_edges, float)

    counts = np.empty(n_instances)
    saturated = np.empty(n_instances, dtype=bool)
    instance_seeds = [derive_seed(seed, f"instance-{i}")
                      for i in range(n_instances)]
    hist = None if edges is None else np.zeros((n_instances, len(edges) - 1))

    def solve_one(i: int) -> CountReport:
        inst = sample_field(params, instance_seeds[i])
        return find_equilibria(inst, replace(opts, seed=derive_seed(seed, f"starts-{i}")))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(solve_one, range(n_instances)))
    else:
        reports = map(solve_one, range(n_instances))
    for i, rep in enumerate(reports):
        counts[i] = rep.n_found
        saturated[i] = rep.saturated
        if hist is not None:
            lams = np.array([pt.lam for pt in rep.points])
            hist[i], _ = np.histogram(lams, bins=edges)

    keep = saturated if strict else np.ones(n_instances, dtype=bool)
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise NumericalError("all instances were non-saturated under strict mode")
    mean = float(counts[keep].mean())
    stderr = (float(counts[keep].std(ddof=1) / math.sqrt(n_keep))
              if n_keep > 1 else 0.0)
    result = MCCountResult(mean=mean, stderr=stderr, counts=counts,
                           saturated=saturated, instance_seeds=instance_seeds,
                           n_excluded=int(n_instances - n_keep))
    if hist is not None:
        hk = hist[keep]
        result.histogram_edges = edges
        result.histogram_mean = hk.mean(axis=0)
        result.histogram_stderr = (hk.std(ddof=1, axis=0) / math.sqrt(n_keep)
                                   if n_keep > 1 else np.zeros(hk.shape[1]))
    return result


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def save_count_report_json(rep: CountReport, path) -> None:
    payload = {
        "n_found": rep.n_found,
        "n_starts": rep.n_starts,
        "n_converged_starts": rep.n_converged_starts,
        "dedup_radius": rep.dedup_radius,
        "saturated": rep.saturated,
        "seed": rep.seed,
        "points": [
            {
                "x": pt.x.tolist(),
                "lambda": pt.lam,
                "residual": pt.residual,
                "basin_hits": pt.basin_hits,
                "tangent_spectrum": [[z.real, z.imag] for z in pt.tangent_spectrum],
            }
            for pt in rep.points
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def mc_result_to_csv(result: MCCountResult, path) -> None:
    """Per-instance summary rows: instance, n_found, saturated, seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "n_found", "saturated", "seed"])
        for i, (c, s, sd) in enumerate(zip(result.counts, result.saturated,
                                           result.instance_seeds)):
            writer.writerow([i, int(c), bool(s), sd])
