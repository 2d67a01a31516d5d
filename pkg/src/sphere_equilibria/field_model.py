"""Explicit Gaussian random vector fields on the sphere of radius sqrt(N).

A field instance is built from three independent blocks of iid centred
Gaussians: an N x N matrix (linear couplings, entry variance J1^2/N), an
N x N x N tensor (quadratic couplings, entry variance J2^2/N^2) and an
N-vector magnetic field (entry variance sigma^2).  Asymmetry parameters
alpha1, alpha2 mix each block with its transposes; alpha1 = alpha2 = 1 makes
the field a gradient.

Instances store *unit* standard-normal draws and apply the J1/J2/sigma scales
at construction, so rescaling the coupling strengths while reusing the same
draws is exact (see `FieldInstance.with_scales`).
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .errors import ParameterError

__all__ = [
    "ModelParams",
    "CovariancePair",
    "FieldInstance",
    "sample_field",
    "covariance_pair",
    "field_covariance",
    "JacobianCovariance",
    "jacobian_covariance",
    "save_field",
    "load_field",
]

_MAGIC = b"SPHEQFLD1\n"
_W1_STREAM, _W2_STREAM, _WH_STREAM = 0, 1, 2


@dataclass(frozen=True)
class ModelParams:
    """The six scalars defining the random ensemble.

    ``field_free=True`` permits the degenerate j1 = j2 = 0 case (pure
    magnetic-field dynamics); otherwise the coupling field must be present.
    """

    n: int
    j1: float = 1.0
    j2: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    sigma: float = 0.0
    field_free: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"n must be an integer >= 2, got {self.n}")
        for name in ("j1", "j2", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be a nonnegative real, got {v}")
        for name in ("alpha1", "alpha2"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if self.j1 == 0.0 and self.j2 == 0.0 and not self.field_free:
            raise ParameterError(
                "j1 = j2 = 0 requires field_free=True (degenerate coupling field)")

    def to_dict(self) -> dict:
        return {"n": int(self.n), "j1": self.j1, "j2": self.j2,
                "alpha1": self.alpha1, "alpha2": self.alpha2,
                "sigma": self.sigma, "field_free": self.field_free}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**d)


@dataclass(frozen=True)
class CovariancePair:
    """Polynomial covariance functions of the field.

    ``E f_k(x) f_p(x') = delta_kp Phi1(u) + (x_p x'_k / N) Phi2(u)`` with
    u = x.x'/N.  For the explicit quadratic construction Phi1 has degree 2
    with no constant term and Phi2 degree 1:

        Phi1(u) = (1 + alpha1^2) J1^2 u + (1 + 2 alpha2^2) J2^2 u^2
        Phi2(u) = 2 alpha1 J1^2 + 2 alpha2 (2 + alpha2) J2^2 u
    """

    phi1_coeffs: tuple[float, float, float]  # constant, u, u^2
    phi2_coeffs: tuple[float, float]         # constant, u

    def __post_init__(self):
        p1, dp1, p2 = self.phi1(1.0), self.dphi1(1.0), self.phi2(1.0)
        if not p1 > 0:
            raise ParameterError(f"Phi1(1) must be positive, got {p1}")
        if dp1 < p1 - 1e-12 * abs(p1):
            raise ParameterError(f"Phi1'(1) = {dp1} < Phi1(1) = {p1}")
        if not (-p1 - 1e-12 <= p2 <= dp1 + 1e-12 * max(abs(dp1), 1.0)):
            raise ParameterError(
                f"Phi2(1) = {p2} outside the admissible band [-Phi1(1), Phi1'(1)]")

    def phi1(self, u):
        c0, c1, c2 = self.phi1_coeffs
        return c0 + u * (c1 + u * c2)

    def dphi1(self, u):
        _, c1, c2 = self.phi1_coeffs
        return c1 + 2.0 * c2 * u

    def d2phi1(self, u):
        return 2.0 * self.phi1_coeffs[2] + 0.0 * u

    def phi2(self, u):
        d0, d1 = self.phi2_coeffs
        return d0 + d1 * u

    def dphi2(self, u):
        return self.phi2_coeffs[1] + 0.0 * u

    def d2phi2(self, u):
        return 0.0 * u

    def scaled(self, c: float) -> "CovariancePair":
        """Both covariance functions multiplied by c > 0."""
        if c <= 0:
            raise ParameterError("scale factor must be positive")
        return CovariancePair(tuple(c * v for v in self.phi1_coeffs),
                              tuple(c * v for v in self.phi2_coeffs))


def covariance_pair(params: ModelParams) -> CovariancePair:
    """Analytic covariance functions of the sampled field."""
    if params.field_free:
        raise ParameterError("field-free params have no coupling covariance")
    a1, a2 = params.alpha1, params.alpha2
    j1sq, j2sq = params.j1 ** 2, params.j2 ** 2
    return CovariancePair(
        phi1_coeffs=(0.0, (1.0 + a1 * a1) * j1sq, (1.0 + 2.0 * a2 * a2) * j2sq),
        phi2_coeffs=(2.0 * a1 * j1sq, 2.0 * a2 * (2.0 + a2) * j2sq))


def field_covariance(cov: CovariancePair, x: np.ndarray, xp: np.ndarray,
                     k: int, p: int) -> float:
    """E f_k(x) f_p(x') from the covariance pair."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    n = len(x)
    u = float(x @ xp) / n
    return float((k == p) * cov.phi1(u) + x[p] * xp[k] / n * cov.phi2(u))


class JacobianCovariance:
    """Analytic covariances of (field, Jacobian) entries at a point x.

    Obtained by differentiating the two-function covariance structure and
    setting both arguments to x; valid on the sphere (u = 1) and, with
    u = |x|^2/N, anywhere else.
    """

    def __init__(self, cov: CovariancePair, x: np.ndarray):
        self.cov = cov
        self.x = np.asarray(x, dtype=float)
        self.n = len(self.x)
        self.u = float(self.x @ self.x) / self.n

    def field_grad(self, k: int, p: int, l: int) -> float:
        """<f_k * d f_p / d x_l>."""
        x, n, u, cov = self.x, self.n, self.u, self.cov
        val = 0.0
        if k == l:
            val += x[p] / n * cov.phi2(u)
        if k == p:
            val += x[l] / n * cov.dphi1(u)
        val += x[p] * x[l] * x[k] / n ** 2 * cov.dphi2(u)
        return float(val)

    def grad_grad(self, k: int, n_idx: int, p: int, l: int) -> float:
        """<(d f_k / d x_n) (d f_p / d x_l)>."""
        x, n, u, cov = self.x, self.n, self.u, self.cov
        val = 0.0
        if p == n_idx and k == l:
            val += cov.phi2(u) / n
        if k == p and l == n_idx:
            val += cov.dphi1(u) / n
        if k == p:
            val += x[l] * x[n_idx] / n ** 2 * cov.d2phi1(u)
        dphi2 = cov.dphi2(u)
        if k == l:
            val += x[p] * x[n_idx] / n ** 2 * dphi2
        if p == n_idx:
            val += x[l] * x[k] / n ** 2 * dphi2
        if l == n_idx:
            val += x[p] * x[k] / n ** 2 * dphi2
        val += x[p] * x[l] * x[k] * x[n_idx] / n ** 3 * cov.d2phi2(u)
        return float(val)


def jacobian_covariance(cov: CovariancePair, x: np.ndarray) -> JacobianCovariance:
    return JacobianCovariance(cov, x)


class FieldInstance:
    """One realization of the random field, immutable after construction.

    Attributes
    ----------
    params, seed : defining data; regenerating with the same pair reproduces
        the arrays bit-identically.
    v1, v2, h : the scaled Gaussian blocks.
    j1_matrix : N x N linear coupling ``V1 + alpha1 V1^T``.
    j2_tensor : N x N x N quadratic coupling
        ``V2_knm + alpha2 (V2_nkm + V2_nmk)``.
    """

    def __init__(self, params: ModelParams, seed: int, w1: np.ndarray,
                 w2: np.ndarray, wh: np.ndarray):
        n = params.n
        if w1.shape != (n, n) or w2.shape != (n, n, n) or wh.shape != (n,):
            raise ParameterError("unit-draw arrays have inconsistent shapes")
        self.params = params
        self.seed = int(seed)
        self._w1 = w1
        self._w2 = w2
        self._wh = wh
        self.v1 = (params.j1 / math.sqrt(n)) * w1
        self.v2 = (params.j2 / n) * w2
        self.h = params.sigma * wh
        self.j1_matrix = self.v1 + params.alpha1 * self.v1.T
        # J2[k, n, m] = V2[k, n, m] + alpha2 (V2[n, k, m] + V2[n, m, k])
        self.j2_tensor = (self.v2
                          + params.alpha2 * (np.transpose(self.v2, (1, 0, 2))
                                             + np.transpose(self.v2, (2, 0, 1))))
        self._j2_sym = self.j2_tensor + np.transpose(self.j2_tensor, (0, 2, 1))
        for arr in (self._w1, self._w2, self._wh, self.v1, self.v2, self.h,
                    self.j1_matrix, self.j2_tensor, self._j2_sym):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.params.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldInstance):
            return NotImplemented
        return (self.params == other.params and self.seed == other.seed
                and np.array_equal(self._w1, other._w1)
                and np.array_equal(self._w2, other._w2)
                and np.array_equal(self._wh, other._wh))

    def eval_field(self, x: np.ndarray) -> np.ndarray:
        """Coupling field f(x); accepts a single point (N,) or a batch (..., N).

        ``f_k = sum_j J1_kj x_j + sum_{nm} J2_knm x_n x_m`` (no magnetic term).
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ParameterError(f"expected last axis {self.n}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("x must be finite")
        lin = x @ self.j1_matrix.T
        quad = np.einsum("knm,...n,...m->...k", self.j2_tensor, x, x)
        return lin + quad

    def eval_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Analytic Jacobian K_kl = d f_k / d x_l at x (batched like eval_field)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ParameterError(f"expected last axis {self.n}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("x must be finite")
        quad = np.einsum("klm,...m->...kl", self._j2_sym, x)
        return self.j1_matrix + quad

    def drift(self, x: np.ndarray) -> np.ndarray:
        """h + f(x), the non-constraint part of the equation of motion."""
        return self.h + self.eval_field(x)

    def with_scales(self, j1: float | None = None, j2: float | None = None,
                    sigma: float | None = None) -> "FieldInstance":
        """Same unit draws under different coupling scales (exact rescaling)."""
        p = self.params
        new = ModelParams(n=p.n,
                          j1=p.j1 if j1 is None else j1,
                          j2=p.j2 if j2 is None else j2,
                          alpha1=p.alpha1, alpha2=p.alpha2,
                          sigma=p.sigma if sigma is None else sigma,
                          field_free=p.field_free)
        return FieldInstance(new, self.seed, self._w1, self._w2, self._wh)


def sample_field(params: ModelParams, seed: int) -> FieldInstance:
    """Draw a field realization; deterministic in (params, seed).

    The three blocks use independent Philox streams keyed by (seed, block id),
    so each block is reproducible regardless of generation order.
    """
    n = params.n
    w1 = stream(seed, _W1_STREAM).standard_normal((n, n))
    w2 = stream(seed, _W2_STREAM).standard_normal((n, n, n))
    wh = stream(seed, _WH_STREAM).standard_normal(n)
    return FieldInstance(params, seed, w1, w2, wh)


# ---------------------------------------------------------------------------
# binary container
# ---------------------------------------------------------------------------

def save_field(inst: FieldInstance, path) -> None:
    """Flat binary container: JSON header, then the raw unit draws.

    Layout: magic, little-endian uint64 header length, UTF-8 JSON header
    (params, seed, array shapes, dtype), then the C-order float64 bytes of
    the three unit-draw blocks.  Loading reproduces evaluation bit-exactly.
    """
    header = {
        "format": 1,
        "params": inst.params.to_dict(),
        "seed": inst.seed,
        "dtype": "<f8",
        "arrays": [
            {"name": "w1", "shape": list(inst._w1.shape)},
            {"name": "w2", "shape": list(inst._w2.shape)},
            {"name": "wh", "shape": list(inst._wh.shape)},
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in (inst._w1, inst._w2, inst._wh):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_field(path) -> FieldInstance:
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(len(_MAGIC)) != _MAGIC:
        raise ParameterError(f"{path}: not a field container (bad magic)")
    (hlen,) = struct.unpack("<Q", buf.read(8))
    header = json.loads(buf.read(hlen).decode())
    if header.get("format") != 1:
        raise ParameterError(f"{path}: unsupported container format")
    params = ModelParams.from_dict(header["params"])
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape))
        raw = buf.read(count * 8)
        if len(raw) != count * 8:
            raise ParameterError(f"{path}: truncated array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return FieldInstance(params, header["seed"],
                         arrays["w1"], arrays["w2"], arrays["wh"])
