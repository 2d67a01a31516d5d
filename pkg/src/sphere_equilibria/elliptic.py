"""Real Gaussian elliptic ensemble: sampling and real-eigenvalue densities.

The ensemble interpolates between GOE (``tau = 1``) and the real Ginibre
ensemble (``tau = 0``) through the entry correlation
``<X_ij X_nm> = delta_in delta_jm + tau delta_jn delta_im``.  The mean density
of *real* eigenvalues has a closed form in terms of rescaled Hermite
polynomials; evaluating it for matrix sizes in the hundreds requires the
normalized, scale-carrying recurrences implemented here, since the raw
polynomials and factorials overflow doubles near N ~ 150.

Density conventions: ``rho(x)`` is normalized so that its integral over the
real line equals the expected number of real eigenvalues of an N x N draw.
Asymptotic profiles are expressed in the rescaled variable ``lam = x/sqrt(N)``.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from ._rng import stream
from .errors import DomainError, NumericalError, ParameterError
from .quadrature import gauss_legendre, log_quad

__all__ = [
    "EllipticParams",
    "DensityProfile",
    "sample_elliptic",
    "sample_elliptic_batch",
    "real_eigenvalues",
    "real_eigenvalue_counts",
    "real_eigenvalue_values",
    "hermite_tau",
    "rho_real_exact",
    "log_rho_real_exact",
    "rho_real_bulk",
    "rho_real_outside",
    "rho_real_edge",
    "rho_real_weak_nongradient",
    "mean_real_count",
    "expected_real_count",
    "expected_counts_in_bins",
    "support_lambda_max",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class EllipticParams:
    """Matrix size and symmetry correlation of the real elliptic ensemble."""

    n: int
    tau: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if not (-1.0 < self.tau <= 1.0):
            raise ParameterError(f"tau must lie in (-1, 1], got {self.tau}")

    def require_exact_density(self) -> None:
        """Exact closed-form density needs even n and |tau| < 1."""
        if self.n % 2 != 0:
            raise DomainError(
                f"exact real-eigenvalue density requires even n (got n={self.n}); "
                "use the Monte Carlo estimator instead")
        if abs(self.tau) >= 1.0:
            raise DomainError(
                f"exact real-eigenvalue density requires |tau| < 1 (got tau={self.tau}); "
                "use the Monte Carlo estimator instead")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_elliptic_batch(p: EllipticParams, trials: int, seed: int,
                          stream_id: int = 0) -> np.ndarray:
    """Draw `trials` matrices, shape (trials, n, n).

    Construction: ``X = sqrt((1+tau)/2) S + sqrt((1-tau)/2) A`` where S and A
    are the symmetric/antisymmetric parts of an iid standard Gaussian matrix
    scaled by sqrt(2) (so S has off-diagonal variance 1 and diagonal variance
    2, A off-diagonal variance 1).  The resulting entries satisfy
    Var(X_ij) = 1 off-diagonal, Var(X_ii) = 1 + tau, Cov(X_ij, X_ji) = tau.
    """
    g = stream(seed, stream_id).standard_normal((trials, p.n, p.n))
    gt = np.swapaxes(g, -1, -2)
    s = (g + gt) / np.sqrt(2.0)
    a = (g - gt) / np.sqrt(2.0)
    return np.sqrt((1.0 + p.tau) / 2.0) * s + np.sqrt((1.0 - p.tau) / 2.0) * a


def sample_elliptic(p: EllipticParams, seed: int) -> np.ndarray:
    """Single draw from the ensemble; deterministic in (p, seed)."""
    return sample_elliptic_batch(p, 1, seed)[0]


# ---------------------------------------------------------------------------
# real eigenvalues
# ---------------------------------------------------------------------------

def real_eigenvalues(x: np.ndarray) -> np.ndarray:
    """Sorted real eigenvalues of a real square matrix.

    Real eigenvalues are read off as the 1x1 diagonal blocks of the real
    Schur form.  LAPACK standardizes 2x2 blocks to have complex-conjugate
    eigenvalues, so the subdiagonal test is structural: no imaginary-part
    threshold is involved.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("matrix entries must be finite")
    try:
        t, _ = scipy.linalg.schur(x, output="real")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(
            f"Schur decomposition failed (cond ~ {np.linalg.cond(x):.3e})") from exc
    n = x.shape[0]
    out = []
    i = 0
    while i < n:
        if i == n - 1 or t[i + 1, i] == 0.0:
            out.append(t[i, i])
            i += 1
        else:
            i += 2  # 2x2 block: complex-conjugate pair
    return np.sort(np.array(out))


def real_eigenvalue_counts(mats: np.ndarray) -> np.ndarray:
    """Number of real eigenvalues for each matrix in a (B, n, n) batch.

    Uses batched LAPACK eigenvalues; dgeev assigns an exactly-zero imaginary
    part to eigenvalues coming from 1x1 Schur blocks, so ``imag == 0`` is the
    same structural test as `real_eigenvalues`.
    """
    ev = np.linalg.eigvals(np.asarray(mats, dtype=float))
    return (ev.imag == 0.0).sum(axis=-1)


def real_eigenvalue_values(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(counts per draw, flat array of all real eigenvalues) for a batch."""
    ev = np.linalg.eigvals(np.asarray(mats, dtype=float))
    mask = ev.imag == 0.0
    return mask.sum(axis=-1), ev.real[mask]


# ---------------------------------------------------------------------------
# rescaled Hermite polynomials
# ---------------------------------------------------------------------------

def hermite_tau(k: int, tau: float, x):
    """Rescaled Hermite polynomial h_k by the three-term recurrence.

    ``h_{k+1} = x h_k - tau k h_{k-1}`` with h_0 = 1, h_1 = x.  For tau = 1
    these are the probabilists' Hermite polynomials, for tau = 0 plain powers
    x**k.  Unnormalized: overflows for large k |x|; the density evaluator
    uses an internal scaled variant instead.
    """
    if k < 0 or int(k) != k:
        raise ParameterError(f"k must be a nonnegative integer, got {k}")
    x = np.asarray(x, dtype=float)
    h_prev = np.zeros_like(x)
    h_cur = np.ones_like(x)
    for j in range(k):
        h_prev, h_cur = h_cur, x * h_cur - tau * j * h_prev
    return h_cur if h_cur.ndim else float(h_cur)


def _psi_hat_scan(n_top: int, tau: float, xs: np.ndarray,
                  want: frozenset[int], rho1_upto: int = -1):
    """Scaled oscillator functions psi_hat_k = exp(-x^2/(2(1+tau))) h_k/sqrt(k!).

    Runs the normalized recurrence
    ``hhat_{k+1} = (x hhat_k - tau sqrt(k) hhat_{k-1}) / sqrt(k+1)`` up to
    k = n_top, carrying a per-point scale exponent so intermediate values
    never leave the double range.

    Returns (dict k -> (sign, log|psi_hat_k|), log sum_{k<=rho1_upto} psi_hat_k^2).
    """
    xs = np.asarray(xs, dtype=float)
    gauss_log = -xs * xs / (2.0 * (1.0 + tau))
    a_prev = np.zeros_like(xs)
    a_cur = np.ones_like(xs)
    scale_log = np.zeros_like(xs)
    out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    run_max = np.full_like(xs, -np.inf)
    run_sum = np.zeros_like(xs)

    for k in range(n_top + 1):
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(a_cur)) + scale_log + gauss_log
        if k <= rho1_upto:
            term = 2.0 * lg
            bigger = term > run_max
            with np.errstate(invalid="ignore"):
                run_sum = np.where(
                    bigger,
                    run_sum * np.exp(np.minimum(run_max - term, 0.0)) + 1.0,
                    run_sum + np.exp(np.minimum(term - run_max, 0.0)))
            run_max = np.maximum(run_max, term)
        if k in want:
            out[k] = (np.sign(a_cur), lg)
        a_prev, a_cur = a_cur, (xs * a_cur - tau * np.sqrt(k) * a_prev) / np.sqrt(k + 1.0)
        # rescale both carried values when they leave a safe magnitude band
        m = np.maximum(np.abs(a_prev), np.abs(a_cur))
        adjust = (m > 1e100) | ((m > 0.0) & (m < 1e-100))
        fac = np.where(adjust, m, 1.0)
        a_prev = a_prev / fac
        a_cur = a_cur / fac
        scale_log = scale_log + np.log(fac)

    with np.errstate(divide="ignore"):
        rho1_log = run_max + np.log(run_sum)
    return out, rho1_log


def _psi_hat_values(k: int, tau: float, xs: np.ndarray) -> np.ndarray:
    """psi_hat_k in linear scale (bounded by ~1 for all tau in (-1, 1])."""
    got, _ = _psi_hat_scan(k, tau, xs, frozenset({k}))
    sign, lg = got[k]
    return sign * np.exp(lg)


class _PsiHatAntiderivative:
    """Cached cumulative integral ``Ihat(x) = int_0^x psi_hat_{n-2}(u) du``.

    Built once per (n, tau) as adaptive Gauss-Legendre panels on [0, xmax],
    extended lazily; panels are bisected until the two-half refinement changes
    a panel by less than `tol` of the running maximum of |Ihat|.  psi_hat_{n-2}
    is even (n even), so the antiderivative is odd and only x >= 0 is stored.
    """

    _ORDER = 16

    def __init__(self, n: int, tau: float, tol: float = 1e-12):
        self.n = n
        self.tau = tau
        self.tol = tol
        self.edges = np.array([0.0])
        self.prefix = np.array([0.0])
        self._scale = 1e-2  # refreshed from the built prefix
        self._lock = threading.RLock()  # guards lazy panel extension

    def _f(self, u: np.ndarray) -> np.ndarray:
        return _psi_hat_values(self.n - 2, self.tau, u)

    def _panel_sums(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        xi, w = gauss_legendre(self._ORDER)
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        nodes = mid[:, None] + half[:, None] * xi[None, :]
        vals = self._f(nodes.ravel()).reshape(nodes.shape)
        return half * (vals @ w)

    def _build(self, lo0: float, hi0: float) -> tuple[np.ndarray, np.ndarray]:
        """Adaptively integrate over [lo0, hi0]; return (panel_edges, panel_sums)."""
        width = max(0.25 * (1.0 + self.tau) / math.sqrt(self.n), 1e-3)
        count = max(int(math.ceil((hi0 - lo0) / width)), 4)
        edges = np.linspace(lo0, hi0, count + 1)
        lo, hi = edges[:-1], edges[1:]
        parent = self._panel_sums(lo, hi)
        done_lo, done_hi, done_val = [], [], []
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            left = self._panel_sums(lo, mid)
            right = self._panel_sums(mid, hi)
            err = np.abs(parent - left - right)
            ok = err <= self.tol * self._scale
            done_lo.append(np.concatenate([lo[ok], mid[ok]]))
            done_hi.append(np.concatenate([mid[ok], hi[ok]]))
            done_val.append(np.concatenate([left[ok], right[ok]]))
            if np.all(ok):
                break
            keep = ~ok
            lo = np.concatenate([lo[keep], mid[keep]])
            hi = np.concatenate([mid[keep], hi[keep]])
            parent = np.concatenate([left[keep], right[keep]])
        else:  # pragma: no cover - defensive
            raise NumericalError("antiderivative panels failed to converge")
        plo = np.concatenate(done_lo)
        order = np.argsort(plo)
        return np.concatenate(done_lo)[order], np.concatenate(done_val)[order]

    def _extend(self, xmax: float) -> None:
        if xmax <= self.edges[-1]:
            return
        lo0 = float(self.edges[-1])
        hi0 = float(xmax) * 1.0625 + 1e-9
        plo, pval = self._build(lo0, hi0)
        # panels partition [lo0, hi0]: right edges are the next left edges
        uppers = np.append(plo[1:], hi0)
        cum = self.prefix[-1] + np.cumsum(pval)
        self.edges = np.concatenate([self.edges, uppers])
        self.prefix = np.concatenate([self.prefix, cum])
        self._scale = max(self._scale, float(np.abs(self.prefix).max()))

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        ax = np.abs(xs)
        with self._lock:
            if ax.size and float(ax.max()) > self.edges[-1]:
                self._extend(float(ax.max()))
            edges, prefix = self.edges, self.prefix
        idx = np.searchsorted(edges, ax, side="right") - 1
        idx = np.clip(idx, 0, len(edges) - 2)
        left = edges[idx]
        base = prefix[idx]
        partial = np.zeros_like(ax)
        has_tail = ax > left
        if np.any(has_tail):
            partial[has_tail] = self._panel_sums(left[has_tail], ax[has_tail])
        return np.sign(xs) * (base + partial)


_ANTIDERIVATIVE_CACHE: dict[tuple[int, float], _PsiHatAntiderivative] = {}
_CACHE_LOCK = threading.Lock()


def _antiderivative(n: int, tau: float) -> _PsiHatAntiderivative:
    key = (n, float(tau))
    with _CACHE_LOCK:
        if key not in _ANTIDERIVATIVE_CACHE:
            if len(_ANTIDERIVATIVE_CACHE) > 64:
                _ANTIDERIVATIVE_CACHE.clear()
            _ANTIDERIVATIVE_CACHE[key] = _PsiHatAntiderivative(n, tau)
        return _ANTIDERIVATIVE_CACHE[key]


# ---------------------------------------------------------------------------
# exact finite-N density
# ---------------------------------------------------------------------------

def log_rho_real_exact(p: EllipticParams, x) -> np.ndarray:
    """log of the exact mean density of real eigenvalues at x (vectorized).

    The density splits into a positive Hermite-series part
    ``(1/sqrt(2 pi)) sum_{k<=N-2} psi_k^2 / k!`` and a boundary part
    ``sqrt(N-1)/(sqrt(2 pi)(1+tau)) psi_hat_{N-1}(x) int_0^x psi_hat_{N-2}``,
    both assembled from scale-carrying recurrences so the result is finite in
    log space for any x.
    """
    p.require_exact_density()
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    n, tau = p.n, p.tau

    got, rho1_log = _psi_hat_scan(n - 1, tau, xs, frozenset({n - 1}),
                                  rho1_upto=n - 2)
    rho1_log = rho1_log - math.log(_SQRT_2PI)
    sign_nm1, log_nm1 = got[n - 1]

    anti = _antiderivative(n, tau)(xs)
    coef_log = 0.5 * math.log(n - 1.0) - math.log(_SQRT_2PI) - math.log1p(tau)
    with np.errstate(divide="ignore"):
        rho2_log = coef_log + log_nm1 + np.log(np.abs(anti))
    rho2_sign = sign_nm1 * np.sign(anti)

    m = np.maximum(rho1_log, rho2_log)
    m = np.where(np.isfinite(m), m, -np.inf)
    with np.errstate(invalid="ignore"):
        combined = np.where(
            m == -np.inf, 0.0,
            np.exp(rho1_log - m) + rho2_sign * np.exp(rho2_log - m))
    # the exact density is nonnegative; clip values at the rounding floor
    combined = np.maximum(combined, 0.0)
    with np.errstate(divide="ignore"):
        out = m + np.log(combined)
    return out if np.ndim(x) else out[0]


def rho_real_exact(p: EllipticParams, x):
    """Exact mean density of real eigenvalues at x (N even, |tau| < 1)."""
    return np.exp(log_rho_real_exact(p, x))


def support_lambda_max(n: int, tau: float, rel: float = 1e-16) -> float:
    """lam beyond which the density at lam*sqrt(N) is below `rel` of the bulk.

    Uses the outside-the-bulk exponential bound; bisection on the decay rate.
    """
    target = -math.log(rel) / n
    lo = 1.0 + tau + 1e-9
    hi = lo + 1.0
    while _outside_rate(tau, hi) < target + math.log(10.0 * n) / n:
        hi *= 2.0
        if hi > 1e6:  # pragma: no cover - defensive
            break
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _outside_rate(tau, mid) < target + math.log(10.0 * n) / n:
            lo = mid
        else:
            hi = mid
    return hi * 1.05


def _outside_rate(tau: float, lam: float) -> float:
    """Decay exponent of the density outside the bulk, per unit N."""
    s = math.sqrt(max(lam * lam - 4.0 * tau, 0.0))
    # (lam - s)^2 / (8 tau) rewritten as 2 tau / (lam + s)^2: stable at tau -> 0
    return (-0.5 + lam * lam / (2.0 * (1.0 + tau))
            - 2.0 * tau / (lam + s) ** 2 - math.log((lam + s) / 2.0))


# ---------------------------------------------------------------------------
# asymptotic profiles
# ---------------------------------------------------------------------------

def rho_real_bulk(tau: float) -> float:
    """Large-N density value inside the bulk |lam| < 1 + tau."""
    if abs(tau) >= 1.0:
        raise DomainError(f"bulk density requires |tau| < 1, got {tau}")
    return 1.0 / math.sqrt(2.0 * math.pi * (1.0 - tau * tau))


def rho_real_outside(tau: float, lam: float, n: int | None = None
                     ) -> tuple[float, float]:
    """(decay rate, prefactor) of the density outside the bulk.

    ``rho(lam sqrt(N)) ~ prefactor * exp(-N * rate)`` for |lam| > 1 + tau.
    Without `n` the prefactor is returned per unit sqrt(N).  The tau -> 0
    limit is taken analytically by the stable form of the rate.
    """
    if abs(tau) >= 1.0:
        raise DomainError(f"outside asymptote requires |tau| < 1, got {tau}")
    al = abs(lam)
    if al <= 1.0 + tau:
        raise DomainError(
            f"|lam| = {al} is inside the bulk edge 1 + tau = {1.0 + tau}")
    rate = _outside_rate(tau, al)
    s = math.sqrt(al * al - 4.0 * tau)
    q = math.sqrt(1.0 / (2.0 * math.pi * (1.0 + tau) * s * (al + s)))
    if n is not None:
        q *= math.sqrt(n)
    return rate, q


def rho_real_edge(zeta) -> np.ndarray:
    """Universal edge profile of the real-eigenvalue density.

    ``(1/(2 sqrt(2 pi))) [erfc(sqrt(2) z) + e^{-z^2} (1 + erf z)/sqrt(2)]``;
    tends to 1/sqrt(2 pi) as z -> -inf and to e^{-z^2}/(2 sqrt(pi)) for large z.
    """
    z = np.asarray(zeta, dtype=float)
    out = (scipy.special.erfc(np.sqrt(2.0) * z)
           + np.exp(-z * z) * (1.0 + scipy.special.erf(z)) / np.sqrt(2.0))
    out = out / (2.0 * _SQRT_2PI)
    return out if out.ndim else float(out)


def rho_real_weak_nongradient(u: float, lam: float, n: int) -> float:
    """Density profile for nearly symmetric matrices, tau = 1 - u^2/N.

    ``sqrt(N)/pi * int_0^sqrt(1-lam^2/4) exp(-u^2 t^2) dt`` for |lam| < 2;
    u = 0 reduces to the GOE semicircle sqrt(N) sqrt(1 - lam^2/4) / pi.
    """
    if u < 0:
        raise DomainError(f"u must be nonnegative, got {u}")
    if abs(lam) >= 2.0:
        raise DomainError(f"weak non-gradient profile requires |lam| < 2, got {lam}")
    upper = math.sqrt(1.0 - 0.25 * lam * lam)
    if u == 0.0:
        integral = upper
    else:
        integral = math.sqrt(math.pi) / (2.0 * u) * math.erf(u * upper)
    return math.sqrt(n) / math.pi * integral


# ---------------------------------------------------------------------------
# Monte Carlo and integral cross-checks
# ---------------------------------------------------------------------------

def _merge_mean_m2(a: tuple[float, float, int], b: tuple[float, float, int]
                   ) -> tuple[float, float, int]:
    """Associative merge of (mean, M2, count) accumulators."""
    mean_a, m2_a, n_a = a
    mean_b, m2_b, n_b = b
    if n_a == 0:
        return b
    if n_b == 0:
        return a
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * n_b / n
    m2 = m2_a + m2_b + delta * delta * n_a * n_b / n
    return mean, m2, n


def mean_real_count(p: EllipticParams, trials: int, seed: int,
                    chunk: int = 4096) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) of the number of real eigenvalues.

    Trials are split into fixed chunks with one Philox stream each and merged
    with the associative (mean, M2) rule, so the result does not depend on
    evaluation order.  No parity or tau restriction; for tau = 1 every
    eigenvalue is real and the standard error is exactly zero.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    acc = (0.0, 0.0, 0)
    remaining = trials
    sid = 0
    while remaining > 0:
        take = min(chunk, remaining)
        counts = real_eigenvalue_counts(
            sample_elliptic_batch(p, take, seed, stream_id=sid)).astype(float)
        mean = counts.mean()
        m2 = float(((counts - mean) ** 2).sum())
        acc = _merge_mean_m2(acc, (float(mean), m2, take))
        remaining -= take
        sid += 1
    mean, m2, n = acc
    stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return mean, stderr


def expected_real_count(p: EllipticParams, rel_tol: float = 1e-10) -> float:
    """Integral of the exact density over the real line (even in x)."""
    p.require_exact_density()
    lam_max = support_lambda_max(p.n, p.tau)
    xmax = lam_max * math.sqrt(p.n)
    res = log_quad(lambda xs: log_rho_real_exact(p, xs), 0.0, xmax,
                   rel_tol=rel_tol)
    return 2.0 * res.value


def expected_counts_in_bins(p: EllipticParams, edges: np.ndarray) -> np.ndarray:
    """Expected number of real eigenvalues in each [edges_i, edges_{i+1}) bin."""
    p.require_exact_density()
    edges = np.asarray(edges, dtype=float)
    out = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        res = log_quad(lambda xs: log_rho_real_exact(p, xs),
                       float(edges[i]), float(edges[i + 1]),
                       rel_tol=1e-10, initial_panels=16)
        out[i] = res.value
    return out


# ---------------------------------------------------------------------------
# tabulated profiles
# ---------------------------------------------------------------------------

def _chebyshev_grid(lam_max: float, num: int) -> np.ndarray:
    j = np.arange(num)
    return np.sort(lam_max * np.cos(np.pi * j / (num - 1)))


@dataclass
class DensityProfile:
    """Tabulated real-eigenvalue density with evaluation metadata.

    `grid` holds rescaled positions lam = x / sqrt(N); `values` the density
    rho(lam sqrt(N)).  `normalization` is the expected total number of real
    eigenvalues associated with the profile.
    """

    grid: np.ndarray
    values: np.ndarray
    normalization: float
    method: str  # exact-hermite | bulk-asymptotic | edge-asymptotic | outside-asymptotic | monte-carlo
    n: int
    tau: float
    tolerance: float | None = None
    seed: int | None = None
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    _METHODS = ("exact-hermite", "bulk-asymptotic", "edge-asymptotic",
                "outside-asymptotic", "monte-carlo")

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.method not in self._METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if np.any(np.diff(self.grid) <= 0):
            raise ParameterError("grid must be strictly ascending")
        if np.any(self.values < 0):
            raise ParameterError("density values must be nonnegative")

    @classmethod
    def exact(cls, p: EllipticParams, num: int = 201,
              rel: float = 1e-16) -> "DensityProfile":
        lam_max = support_lambda_max(p.n, p.tau, rel=rel)
        grid = _chebyshev_grid(lam_max, num)
        values = rho_real_exact(p, grid * math.sqrt(p.n))
        return cls(grid=grid, values=values,
                   normalization=expected_real_count(p),
                   method="exact-hermite", n=p.n, tau=p.tau, tolerance=rel)

    @classmethod
    def monte_carlo(cls, p: EllipticParams, trials: int, seed: int,
                    bins: int = 25, lam_max: float | None = None,
                    chunk: int = 4096) -> "DensityProfile":
        """Histogram estimate of the density on `bins` equal lam-bins."""
        if lam_max is None:
            lam_max = (1.0 + p.tau) + 6.0 / math.sqrt(p.n)
        edges = np.linspace(-lam_max, lam_max, bins + 1)
        sums = np.zeros(bins)
        sqsums = np.zeros(bins)
        total = 0
        sid = 0
        remaining = trials
        while remaining > 0:
            take = min(chunk, remaining)
            mats = sample_elliptic_batch(p, take, seed, stream_id=sid)
            counts, vals = real_eigenvalue_values(mats)
            lam = vals / math.sqrt(p.n)
            idx = np.searchsorted(edges, lam, side="right") - 1
            ok = (idx >= 0) & (idx < bins)
            per_draw = np.zeros((take, bins))
            ev_draw = np.repeat(np.arange(take), counts)
            np.add.at(per_draw, (ev_draw[ok], idx[ok]), 1.0)
            sums += per_draw.sum(axis=0)
            sqsums += (per_draw ** 2).sum(axis=0)
            total += take
            remaining -= take
            sid += 1
        mean = sums / total
        var = (sqsums / total - mean ** 2) * total / max(total - 1, 1)
        stderr_counts = np.sqrt(var / total)
        width_x = np.diff(edges) * math.sqrt(p.n)
        centers = 0.5 * (edges[:-1] + edges[1:])
        return cls(grid=centers, values=mean / width_x,
                   normalization=float(sums.sum() / total),
                   method="monte-carlo", n=p.n, tau=p.tau, seed=seed,
                   stderr=stderr_counts / width_x,
                   metadata={"bins": bins, "trials": trials,
                             "bin_edges": edges.tolist()})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "rho", "method"])
            for lam, rho in zip(self.grid, self.values):
                writer.writerow([repr(float(lam)), repr(float(rho)), self.method])

    def to_json(self, path) -> None:
        payload = {
            "n": self.n,
            "tau": self.tau,
            "method": self.method,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "normalization": self.normalization,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
            "metadata": self.metadata,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
