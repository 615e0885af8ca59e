"""Comparison functions for curvature-dimension bounds.

``sin_like`` is the solution of ``f'' + kappa f = 0`` with ``f(0) = 0`` and
``f'(0) = 1``.  ``sigma`` and ``tau`` are the distortion coefficients built
from it.  Infinite values are returned as ``math.inf``; an infinite
dimension is written ``N = math.inf``.

All functions accept scalars or numpy arrays for ``r`` and return the same
shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadDimension, DomainExceeded

SERIES_CUTOFF = 1e-6
_DOMAIN_RTOL = 1e-12


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


@dataclass(frozen=True)
class CdParams:
    """Curvature bound ``K`` and effective dimension ``N`` on an ``n``-manifold.

    ``N`` must lie in ``(-inf, 0] U [n, inf]``, with ``N = 1`` always
    rejected (it is only reachable for ``n = 1``, where it is excluded).
    """

    K: float
    N: float
    n: int = 1

    def __post_init__(self):
        K, N, n = float(self.K), float(self.N), int(self.n)
        if not math.isfinite(K):
            raise BadDimension(f"K must be finite, got {K}")
        if math.isnan(N) or N == -math.inf:
            raise BadDimension(f"N must be a real number or +inf, got {N}")
        if n < 1:
            raise BadDimension(f"n must be a positive integer, got {n}")
        if 0 < N < n:
            raise BadDimension(f"N={N} lies in the excluded range (0, {n})")
        if N == 1:
            raise BadDimension("N=1 is excluded")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "n", n)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.N)

    @property
    def is_zero(self) -> bool:
        return self.N == 0

    @property
    def kappa(self) -> float:
        """``K/(N-1)``; equals ``-K`` at ``N = 0`` and ``0`` at ``N = inf``."""
        if self.is_infinite:
            return 0.0
        return self.K / (self.N - 1.0)

    def conjugate_radius(self) -> float:
        """Length past which ``sigma_kappa`` is infinite (``inf`` if ``kappa <= 0``)."""
        k = self.kappa
        return math.pi / math.sqrt(k) if k > 0 else math.inf

    def with_K(self, K):
        return CdParams(K, self.N, self.n)


def _series(kappa, r):
    x = kappa * r * r
    return r * (1.0 - x / 6.0 + x * x / 120.0 - x ** 3 / 5040.0 + x ** 4 / 362880.0)


def sin_like(kappa: float, r):
    """Evaluate ``s_kappa(r)``.

    Raises
    ------
    DomainExceeded
        If ``r < 0`` or ``kappa > 0`` and ``r`` exceeds ``pi / sqrt(kappa)``.
    """
    kappa = float(kappa)
    r, scalar = _as_array(r)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise DomainExceeded("r must be a nonnegative number")
    if kappa > 0:
        rmax = math.pi / math.sqrt(kappa)
        if np.any(r > rmax * (1 + _DOMAIN_RTOL)):
            raise DomainExceeded(f"r exceeds pi/sqrt(kappa) = {rmax}")
        r = np.minimum(r, rmax)
    small = np.abs(kappa) * r * r < SERIES_CUTOFF
    with np.errstate(over="ignore"):
        if kappa > 0:
            sq = math.sqrt(kappa)
            val = np.sin(sq * r) / sq
        elif kappa < 0:
            sq = math.sqrt(-kappa)
            val = np.sinh(sq * r) / sq
        else:
            val = r.copy()
    out = np.where(small, _series(kappa, r), val)
    if kappa > 0:
        out = np.maximum(out, 0.0)
    return _out(out, scalar)


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(~((lam > 0) & (lam < 1))):
        raise DomainExceeded("lambda must lie in the open interval (0, 1)")
    return lam


def log_sigma(kappa: float, lam, r):
    """Natural log of ``sigma``; ``+inf`` past the conjugate radius.

    Stable for large ``r`` when ``kappa < 0`` (no overflow of ``sinh``).
    """
    kappa = float(kappa)
    lam = _check_lambda(lam)
    r, scalar = _as_array(r)
    if np.any(r < 0):
        raise DomainExceeded("r must be nonnegative")
    lam, r = np.broadcast_arrays(lam, r)
    scalar = scalar and lam.ndim == 0
    x = kappa * r * r
    small = np.abs(x) < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # series ratio: lam * P(kappa (lam r)^2) / P(kappa r^2)
        def poly(y):
            return 1.0 - y / 6.0 + y * y / 120.0 - y ** 3 / 5040.0 + y ** 4 / 362880.0

        ser = np.log(lam) + np.log(poly(x * lam * lam)) - np.log(poly(x))
        if kappa > 0:
            sq = math.sqrt(kappa)
            beyond = sq * r >= math.pi
            val = np.log(np.sin(sq * lam * r)) - np.log(np.sin(sq * r))
            out = np.where(small, ser, val)
            out = np.where(beyond, np.inf, out)
        elif kappa < 0:
            a = math.sqrt(-kappa)
            val = a * r * (lam - 1.0) + np.log(np.expm1(-2 * a * lam * r) / np.expm1(-2 * a * r))
            out = np.where(small, ser, val)
        else:
            out = np.log(lam)
    out = np.where(r == 0, np.log(lam), out)
    return _out(np.asarray(out, dtype=float), scalar)


def sigma(kappa: float, lam, r):
    """``s_kappa(lam r) / s_kappa(r)``, with value ``lam`` at ``r = 0``.

    Returns ``inf`` when ``kappa > 0`` and ``r >= pi / sqrt(kappa)``.
    """
    ls = log_sigma(kappa, lam, r)
    with np.errstate(over="ignore"):
        out = np.exp(ls)
    return float(out) if np.ndim(out) == 0 else out


def _check_tau_params(params: CdParams):
    if params.N == 0 or params.N == 1 or params.is_infinite:
        raise BadDimension(f"tau is undefined for N={params.N}")


def log_tau(params: CdParams, lam, r):
    _check_tau_params(params)
    N = params.N
    lam_arr = _check_lambda(lam)
    ls = log_sigma(params.kappa, lam, r)
    with np.errstate(invalid="ignore"):
        out = np.log(lam_arr) / N + (N - 1.0) / N * np.asarray(ls)
    return float(out) if np.ndim(out) == 0 else out


def tau(params: CdParams, lam, r):
    """``lam^(1/N) * sigma_{K/(N-1)}(r)^((N-1)/N)``; ``lam`` at ``r = 0``.

    Raises
    ------
    BadDimension
        For ``N`` in ``{0, 1, inf}``.
    """
    lt = log_tau(params, lam, r)
    with np.errstate(over="ignore"):
        out = np.exp(lt)
    return float(out) if np.ndim(out) == 0 else out


def tau_sigma_identity_check(params: CdParams, lam: float, r: float, rtol: float = 1e-12) -> bool:
    """Check ``tau^N == lam * sigma^(N-1)`` at a point where both are finite."""
    t = tau(params, lam, r)
    s = sigma(params.kappa, lam, r)
    if not (math.isfinite(t) and math.isfinite(s)):
        raise DomainExceeded("identity check needs finite tau and sigma")
    lhs = t ** params.N
    rhs = lam * s ** (params.N - 1.0)
    return abs(lhs - rhs) <= rtol * max(1.0, abs(lhs), abs(rhs))


def log_cd_bound(params: CdParams, lam, dist, log_rho_s, log_rho_t):
    """Log of the lower bound for ``rho((1-lam)s + lam t)`` along a needle.

    Returns ``(log_bound, vacuous)``.  ``vacuous`` marks pairs past the
    conjugate radius where the bound carries no information.

    Finite ``N`` (including ``N = 0``, where ``kappa = -K``) uses the power
    mean with exponent ``1/(N-1)`` weighted by ``sigma``; ``N = inf`` uses
    the quadratic log-concavity bound.
    """
    lam = np.asarray(lam, dtype=float)
    dist = np.asarray(dist, dtype=float)
    ls = np.asarray(log_rho_s, dtype=float)
    lt = np.asarray(log_rho_t, dtype=float)
    if params.is_infinite:
        bound = (1 - lam) * ls + lam * lt + 0.5 * params.K * (1 - lam) * lam * dist ** 2
        return bound, np.zeros(np.shape(bound), dtype=bool)
    e = params.N - 1.0
    k = params.kappa
    a = log_sigma(k, 1 - lam, dist) + ls / e
    b = log_sigma(k, lam, dist) + lt / e
    vacuous = np.isinf(a) | np.isinf(b)
    with np.errstate(invalid="ignore"):
        bound = e * np.logaddexp(a, b)
    bound = np.where(vacuous, -np.inf, bound)
    return bound, vacuous


def bm_factor(K: float, lam, dist):
    """``lam * s_{-K}(d) / s_{-K}(lam d)``, the volume factor in the N=0 Brunn-Minkowski bound.

    Equals ``lam / sigma_{-K}^{(lam)}(d)``; zero where ``sigma`` is infinite.
    """
    lam_arr = np.asarray(lam, dtype=float)
    ls = log_sigma(-float(K), lam, dist)
    with np.errstate(over="ignore"):
        out = lam_arr * np.exp(-np.asarray(ls))
    return float(out) if np.ndim(out) == 0 else out
