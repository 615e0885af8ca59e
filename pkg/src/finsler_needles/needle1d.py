"""One-dimensional needles: densities on intervals and their checks.

A :class:`NeedleDensity` is a probability density on ``[a, b]`` given by an
unnormalized log-density.  CDF and quantile tables are built lazily on a
finite window that carries all but ``exp(-60)`` of the mass.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .comparison import CdParams, log_cd_bound, log_tau, log_sigma, sin_like
from .errors import (
    DomainExceeded,
    MassDiverged,
    NonSmoothDensity,
    OverlappingIntervals,
    QuantileFailure,
)
from .quadrature import bump_rule, gauss_legendre

DEFAULT_RESOLUTION = 20_000
TAIL_QUANTILE = 1e-9
FD_STEP = 1e-4
DEFAULT_SEED = 20240601
_LOG_WINDOW = 60.0


def _quiet(func):
    def wrapped(t):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return func(t)

    return wrapped


class NeedleDensity:
    """Probability density on ``[a, b]`` from an unnormalized ``logpdf``.

    Parameters
    ----------
    logpdf : callable
        Vectorized log of an unnormalized density; may return ``-inf``.
    a, b : float
        Domain endpoints, possibly infinite.
    dlogpdf, d2logpdf : callable, optional
        Closed-form first and second derivatives of ``logpdf``.  Central
        differences with step ``1e-4`` are used otherwise.
    window : (float, float), optional
        Finite interval carrying essentially all mass (needed only when an
        endpoint is infinite; located automatically if omitted).
    cd_region : (float, float), optional
        Interval on which curvature checks are meaningful.  Defaults to the
        usable support.
    smooth : bool
        ``False`` marks densities that are not twice differentiable.
    edges : array, optional
        Explicit cell edges for the CDF table.
    """

    def __init__(self, logpdf, a, b, *, dlogpdf=None, d2logpdf=None, window=None, cd_region=None,
                 smooth=True, resolution=DEFAULT_RESOLUTION, edges=None, name="density", meta=None):
        a, b = float(a), float(b)
        if not a < b:
            raise DomainExceeded(f"empty domain [{a}, {b}]")
        self.a, self.b = a, b
        self._logpdf = _quiet(logpdf)
        self._dlog = _quiet(dlogpdf) if dlogpdf is not None else None
        self._d2log = _quiet(d2logpdf) if d2logpdf is not None else None
        self.smooth = smooth
        self.resolution = int(resolution)
        self.name = name
        self.meta = dict(meta or {})
        self._edges = None if edges is None else np.asarray(edges, dtype=float)
        if self._edges is not None:
            window = (self._edges[0], self._edges[-1])
        if window is None:
            window = self._auto_window()
        lo, hi = max(float(window[0]), a), min(float(window[1]), b)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise MassDiverged(f"could not locate a finite window for {name}")
        self.window = (lo, hi)
        self._cd_region = cd_region

    # -- construction helpers -------------------------------------------------
    def _auto_window(self):
        base = [self.a if math.isfinite(self.a) else None, self.b if math.isfinite(self.b) else None]
        center = next((x for x in base if x is not None), 0.0)
        span = 1.0
        for _ in range(60):
            lo = self.a if math.isfinite(self.a) else center - span
            hi = self.b if math.isfinite(self.b) else center + span
            grid = np.linspace(lo, hi, 4001)
            vals = self._logpdf(grid)
            top = np.nanmax(vals)
            ok_lo = math.isfinite(self.a) or vals[0] < top - _LOG_WINDOW
            ok_hi = math.isfinite(self.b) or vals[-1] < top - _LOG_WINDOW
            if ok_lo and ok_hi and np.isfinite(top):
                return lo, hi
            span *= 2.0
        raise MassDiverged(f"density {self.name} does not decay on its infinite domain")

    @cached_property
    def _table(self):
        lo, hi = self.window
        edges = self._edges if self._edges is not None else np.linspace(lo, hi, self.resolution + 1)
        x, w = gauss_legendre(5)
        h = np.diff(edges)
        pts = edges[:-1, None] + h[:, None] * x[None, :]
        logs = self._logpdf(pts)
        shift = np.nanmax(np.where(np.isfinite(logs), logs, -np.inf))
        if not np.isfinite(shift):
            raise MassDiverged(f"density {self.name} vanishes on its window")
        cells = (np.exp(logs - shift) * w[None, :]).sum(axis=1) * h
        total = cells.sum()
        if not (np.isfinite(total) and total > 0):
            raise MassDiverged(f"mass of {self.name} is not finite and positive")
        cum = np.concatenate([[0.0], np.cumsum(cells)]) / total
        return edges, cells / total, cum, shift + math.log(total)

    @property
    def log_norm(self) -> float:
        """Log of the total mass of ``exp(logpdf)``."""
        return self._table[3]

    @property
    def mass(self) -> float:
        return math.exp(self.log_norm)

    # -- evaluation -------------------------------------------------------------
    def unnormalized(self, t):
        return np.exp(self.log_unnormalized(t))

    def log_unnormalized(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self._logpdf(t), dtype=float)
        out = np.where((t < self.a) | (t > self.b), -np.inf, out)
        return float(out) if out.ndim == 0 else out

    def logpdf(self, t):
        return self.log_unnormalized(t) - self.log_norm

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def dlogpdf(self, t):
        t = np.asarray(t, dtype=float)
        if self._dlog is not None:
            return self._dlog(t)
        h = FD_STEP
        return (self._logpdf(t + h) - self._logpdf(t - h)) / (2 * h)

    def d2logpdf(self, t):
        t = np.asarray(t, dtype=float)
        if self._d2log is not None:
            return self._d2log(t)
        h = FD_STEP
        return (self._logpdf(t + h) - 2 * self._logpdf(t) + self._logpdf(t - h)) / (h * h)

    @property
    def has_closed_derivatives(self) -> bool:
        return self._dlog is not None and self._d2log is not None

    def _partial(self, k, t):
        edges, _, _, log_norm = self._table
        x, w = gauss_legendre(5)
        lo = edges[k]
        h = t - lo
        pts = lo[..., None] + h[..., None] * x
        vals = np.exp(self._logpdf(pts) - log_norm)
        return (vals * w).sum(axis=-1) * h

    def cdf(self, t):
        edges, _, cum, _ = self._table
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, edges[0], edges[-1])
        k = np.clip(np.searchsorted(edges, tc, side="right") - 1, 0, edges.size - 2)
        out = np.clip(cum[k] + self._partial(k, tc), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def quantile(self, u, xtol=1e-14):
        """Inverse CDF by cell lookup and safeguarded Newton iteration."""
        edges, cells, cum, _ = self._table
        u = np.asarray(u, dtype=float)
        shape = u.shape
        u = u.ravel()
        if np.any((u < 0) | (u > 1)):
            raise QuantileFailure("probability outside [0, 1]")
        k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, cells.size - 1)
        # skip empty cells so the bracket holds positive mass
        nz = np.nonzero(cells > 0)[0]
        pos = np.clip(np.searchsorted(nz, k, side="left"), 0, nz.size - 1)
        k = nz[pos]
        lo, hi = edges[k].copy(), edges[k + 1].copy()
        target = u - cum[k]
        t = lo + (hi - lo) * np.clip(target / cells[k], 0.0, 1.0)
        active = np.arange(u.size)
        for _ in range(80):
            ka, ta = k[active], t[active]
            F = self._partial(ka, ta) - target[active]
            la = np.where(F < 0, ta, lo[active])
            ha = np.where(F >= 0, ta, hi[active])
            lo[active], hi[active] = la, ha
            f = self.pdf(ta)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = ta - F / f
            bad = ~np.isfinite(step) | (step <= la) | (step >= ha)
            hit = np.abs(F) <= 1e-17
            t_new = np.where(hit, ta, np.where(bad, 0.5 * (la + ha), step))
            t[active] = t_new
            scale = np.maximum(1.0, np.abs(t_new))
            done = hit | (np.abs(t_new - ta) <= xtol * scale) | (ha - la <= xtol * scale)
            active = active[~done]
            if active.size == 0:
                break
        t = np.where(u <= 0, self.a, np.where(u >= 1, self.b, t)).reshape(shape)
        return float(t) if t.ndim == 0 else t

    @cached_property
    def support(self):
        """Usable support: finite endpoints, or tail quantiles ``1e-9`` on infinite sides."""
        lo = self.a if math.isfinite(self.a) else float(self.quantile(TAIL_QUANTILE))
        hi = self.b if math.isfinite(self.b) else float(self.quantile(1 - TAIL_QUANTILE))
        return lo, hi

    @property
    def cd_region(self):
        if self._cd_region is None:
            return self.support
        lo, hi = self._cd_region
        s_lo, s_hi = self.support
        return max(lo, s_lo), min(hi, s_hi)

    def describe(self) -> dict:
        return {"name": self.name, "a": self.a, "b": self.b, **self.meta}

    def __repr__(self):
        return f"NeedleDensity({self.name}, [{self.a}, {self.b}])"


# -- factories -------------------------------------------------------------------

def uniform(a=0.0, b=1.0, **kw):
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    return NeedleDensity(zero, a, b, dlogpdf=zero, d2logpdf=zero, name="uniform",
                         meta={"kind": "uniform"}, **kw)


def sin_power(N, K=None, a=None, b=None, **kw):
    """``rho(t) ~ sin(sqrt(kappa) t)^(N-1)`` with ``kappa = K/(N-1)``.

    ``K`` defaults to ``N - 1`` so the natural domain is ``[0, pi]``.
    """
    N = float(N)
    if not N > 1:
        raise DomainExceeded("sin-power densities need N > 1")
    K = N - 1.0 if K is None else float(K)
    if not K > 0:
        raise DomainExceeded("sin-power densities need K > 0")
    kappa = K / (N - 1.0)
    sq = math.sqrt(kappa)
    L = math.pi / sq
    a = 0.0 if a is None else float(a)
    b = L if b is None else float(b)
    if a < 0 or b > L * (1 + 1e-12):
        raise DomainExceeded("sin-power domain must lie inside [0, pi/sqrt(kappa)]")
    return NeedleDensity(
        lambda t: (N - 1) * np.log(np.sin(sq * t)),
        a, min(b, L),
        dlogpdf=lambda t: (N - 1) * sq / np.tan(sq * t),
        d2logpdf=lambda t: -(N - 1) * kappa / np.sin(sq * t) ** 2,
        name=f"sin_power(N={N:g})",
        meta={"kind": "sin_power", "N": N, "K": K},
        **kw,
    )


def gaussian(K=1.0, center=0.0, a=-math.inf, b=math.inf, **kw):
    """``rho(t) ~ exp(-K (t - center)^2 / 2)``, optionally restricted to ``[a, b]``."""
    K = float(K)
    if not K > 0:
        raise DomainExceeded("gaussian needs K > 0")
    half = math.sqrt(2 * (_LOG_WINDOW + 20) / K)
    window = (max(a, center - half), min(b, center + half))
    return NeedleDensity(
        lambda t: -0.5 * K * (t - center) ** 2,
        a, b,
        dlogpdf=lambda t: -K * (t - center),
        d2logpdf=lambda t: np.full_like(np.asarray(t, dtype=float), -K),
        window=window,
        name=f"gaussian(K={K:g})",
        meta={"kind": "gaussian", "K": K, "center": center},
        **kw,
    )


def exp_tilt(rate=1.0, a=0.0, b=math.inf, **kw):
    """``rho(t) ~ exp(-rate t)`` on ``[a, b]``."""
    rate = float(rate)
    if math.isinf(b) and not rate > 0:
        raise MassDiverged("exp-tilt on a half-line needs rate > 0")
    window = None
    if math.isinf(b):
        window = (a, a + (_LOG_WINDOW + 20) / rate)
    return NeedleDensity(
        lambda t: -rate * t,
        a, b,
        dlogpdf=lambda t: np.full_like(np.asarray(t, dtype=float), -rate),
        d2logpdf=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        window=window,
        name=f"exp_tilt(rate={rate:g})",
        meta={"kind": "exp_tilt", "rate": rate},
        **kw,
    )


def from_grid(x, values, **kw):
    """Piecewise-linear density through ``(x, values)``; not twice differentiable."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != values.shape or x.size < 2:
        raise ValueError("x and values must be 1D arrays of equal length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("grid values must be finite and nonnegative")
    return NeedleDensity(
        lambda t: np.log(np.interp(t, x, values)),
        x[0], x[-1], smooth=False, edges=x, name="grid", meta={"kind": "grid", "points": int(x.size)}, **kw,
    )


@dataclass(frozen=True)
class AsymLine:
    """Line with ``d(s, t) = t - s`` forward and ``backward_factor * (t - s)`` backward."""

    backward_factor: float = 1.0

    def __post_init__(self):
        if not self.backward_factor > 0:
            raise ValueError("backward factor must be positive")

    @property
    def reversibility(self) -> float:
        return max(self.backward_factor, 1.0 / self.backward_factor)

    def distance(self, s, t):
        diff = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
        return np.where(diff >= 0, diff, -self.backward_factor * diff)


# -- curvature checks --------------------------------------------------------

@dataclass
class CheckReport:
    violations: int
    worst_margin: float
    trials: int
    vacuous: int = 0
    seed: int | None = None
    max_abs_margin: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return asdict(self)


def _sample_pairs(rng, lo, hi, trials):
    x = rng.uniform(lo, hi, size=(trials, 2))
    s, t = x.min(axis=1), x.max(axis=1)
    keep = t > s
    return s[keep], t[keep]


def check_cd_density(rho: NeedleDensity, params: CdParams, trials: int = 10_000, seed: int = DEFAULT_SEED,
                     tol: float = 1e-9) -> CheckReport:
    """Sample ``(s, t, lam)`` and test the needle curvature-dimension bound.

    The margin is ``log rho(mid) - log(bound)``, i.e. the relative slack.
    Pairs past the conjugate radius carry no constraint and are counted as
    ``vacuous`` passes.
    """
    rng = np.random.default_rng(seed)
    lo, hi = rho.cd_region
    s, t = _sample_pairs(rng, lo, hi, trials)
    lam = rng.uniform(0.0, 1.0, size=s.size)
    lam = np.clip(lam, 1e-12, 1 - 1e-12)
    mid = (1 - lam) * s + lam * t
    ls, lt, lm = rho.log_unnormalized(s), rho.log_unnormalized(t), rho.log_unnormalized(mid)
    bound, vacuous = log_cd_bound(params, lam, t - s, ls, lt)
    with np.errstate(invalid="ignore"):
        margin = lm - bound
    margin = np.where(vacuous | (bound == -np.inf), np.inf, margin)
    finite = np.isfinite(margin)
    worst = float(margin[finite].min()) if finite.any() else 0.0
    return CheckReport(
        violations=int(np.sum(margin < -tol)),
        worst_margin=worst,
        trials=int(s.size),
        vacuous=int(np.sum(~finite)),
        seed=seed,
        max_abs_margin=float(np.abs(margin[finite]).max()) if finite.any() else 0.0,
    )


def check_mcp_ratio(rho: NeedleDensity, params: CdParams, trials: int = 1000, seed: int = DEFAULT_SEED,
                    a: float | None = None, b: float | None = None, tol: float = 1e-9) -> CheckReport:
    """Test the two-sided contraction bound on ``rho(t) / rho(s)``.

    With ``a`` and ``b`` given only ``s < t`` inside ``(a, b)`` are sampled;
    otherwise all four points are drawn from the curvature region.
    """
    if params.is_infinite or params.N <= 1:
        raise DomainExceeded("the ratio bound needs finite N > 1")
    rng = np.random.default_rng(seed)
    lo, hi = rho.cd_region
    if a is None or b is None:
        pts = np.sort(rng.uniform(lo, hi, size=(trials, 4)), axis=1)
        aa, s, t, bb = pts.T
    else:
        s, t = _sample_pairs(rng, max(a, lo), min(b, hi), trials)
        aa, bb = np.full(s.size, float(a)), np.full(s.size, float(b))
    e = params.N - 1.0
    k = params.kappa
    limit = params.conjugate_radius()
    ok = (bb - aa) <= limit * (1 + 1e-12)
    aa, s, t, bb = aa[ok], s[ok], t[ok], bb[ok]
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = e * (np.log(sin_like(k, bb - t)) - np.log(sin_like(k, bb - s)))
        upper = e * (np.log(sin_like(k, t - aa)) - np.log(sin_like(k, s - aa)))
        mid = rho.log_unnormalized(t) - rho.log_unnormalized(s)
        m1 = mid - lower
        m2 = upper - mid
    margins = np.minimum(m1, m2)
    finite = np.isfinite(margins)
    return CheckReport(
        violations=int(np.sum(margins[finite] < -tol)),
        worst_margin=float(margins[finite].min()) if finite.any() else 0.0,
        trials=int(s.size),
        vacuous=int(np.sum(~ok)),
        seed=seed,
        max_abs_margin=float(np.max(np.abs(np.concatenate([m1[finite], m2[finite]])))) if finite.any() else 0.0,
    )


def curvature_quantity(rho: NeedleDensity, params: CdParams, t):
    """``psi'' - psi'^2/(N-1)`` for ``psi = -log rho`` (``psi''`` alone if ``N = inf``)."""
    d1 = -rho.dlogpdf(t)
    d2 = -rho.d2logpdf(t)
    if params.is_infinite:
        return d2
    return d2 - d1 * d1 / (params.N - 1.0)


def check_differential_form(rho: NeedleDensity, params: CdParams, points: int = 2001,
                            tol: float = 1e-6) -> CheckReport:
    """Grid test of ``psi'' - psi'^2/(N-1) >= K`` on the curvature region."""
    if not rho.smooth:
        raise NonSmoothDensity(f"{rho.name} is not twice differentiable")
    lo, hi = rho.cd_region
    pad = 0.0 if rho.has_closed_derivatives else 2 * FD_STEP
    t = np.linspace(lo + pad, hi - pad, points + 2)[1:-1]
    q = curvature_quantity(rho, params, t)
    margin = q - params.K
    finite = np.isfinite(margin)
    return CheckReport(
        violations=int(np.sum(margin[finite] < -tol)) + int(np.sum(np.isnan(margin))),
        worst_margin=float(margin[finite].min()) if finite.any() else 0.0,
        trials=int(t.size),
        max_abs_margin=float(np.abs(margin[finite]).max()) if finite.any() else 0.0,
        extra={"grid": [float(t[0]), float(t[-1])]},
    )


# -- smoothing ----------------------------------------------------------------

def mollify(rho: NeedleDensity, params: CdParams, eps: float, order: int = 64) -> NeedleDensity:
    """Power-mean convolution with a one-sided bump of width ``eps``.

    Finite ``N``: ``(rho^(1/(N-1)) * phi_eps)^(N-1)``; ``N = inf``:
    ``exp(log rho * phi_eps)``.  ``N = 0`` is the harmonic case
    ``1/(rho^-1 * phi_eps)``.  The result is renormalized; the raw mass
    is kept in ``meta['raw_mass']`` and ``unnormalized`` returns the raw
    values.  Curvature checks are restricted to ``[a + eps, b]``, where
    every translate stays inside the original support.
    """
    eps = float(eps)
    if not eps > 0:
        raise ValueError("eps must be positive")
    nodes, weights = bump_rule(order)
    keep = weights > 1e-300
    nodes, weights = nodes[keep], weights[keep] / weights[keep].sum()
    shifts = eps * nodes
    logw = np.log(weights)
    base_log = rho.logpdf

    def shifted(t, f):
        t = np.asarray(t, dtype=float)
        return f(t[..., None] - shifts)

    if params.is_infinite:
        def logpdf(t):
            return shifted(t, base_log) @ weights

        def dlog(t):
            return shifted(t, rho.dlogpdf) @ weights

        def d2log(t):
            return shifted(t, rho.d2logpdf) @ weights
    else:
        e = params.N - 1.0

        def logpdf(t):
            return e * logsumexp(shifted(t, base_log) / e + logw, axis=-1)

        def _parts(t):
            ell = shifted(t, base_log)
            g = np.exp(ell / e + logw - (logpdf(t) / e)[..., None])  # weights of g(t - s)/F(t)
            live = g > 0
            d1 = np.where(live, shifted(t, rho.dlogpdf), 0.0)
            d2 = np.where(live, shifted(t, rho.d2logpdf), 0.0)
            f1 = (g * d1).sum(axis=-1) / e  # F'/F
            f2 = (g * (d2 / e + d1 * d1 / (e * e))).sum(axis=-1)  # F''/F
            return f1, f2

        def dlog(t):
            f1, _ = _parts(t)
            return e * f1

        def d2log(t):
            f1, f2 = _parts(t)
            return e * (f2 - f1 * f1)

    grows = not params.is_infinite and params.N > 1
    a = rho.a
    b = rho.b + eps if grows else rho.b
    a_new = a if grows else a + eps
    lo_w, hi_w = rho.window
    cd_lo = a + eps if math.isfinite(a) else -math.inf
    closed = rho.smooth
    out = NeedleDensity(
        logpdf, a_new, b,
        dlogpdf=dlog if closed else None,
        d2logpdf=d2log if closed else None,
        window=(max(lo_w, a_new), min(hi_w + eps, b)),
        cd_region=(cd_lo, rho.b),
        smooth=rho.smooth,
        resolution=rho.resolution,
        name=f"mollified({rho.name}, eps={eps:g})",
        meta={"kind": "mollified", "eps": eps, "N": params.N, "base": rho.describe()},
    )
    raw_mass = out.mass
    if not (math.isfinite(raw_mass) and raw_mass > 0):
        raise MassDiverged(f"smoothed mass {raw_mass} is not finite")
    out.meta["raw_mass"] = raw_mass
    return out


# -- optimal transport on the line ------------------------------------------------

def _u_grid(n: int, *densities):
    """Probability grid, uniform in ``u`` and in each density's ``x``."""
    parts = [np.linspace(0.0, 1.0, n), np.geomspace(TAIL_QUANTILE, 1e-2, 200)]
    parts.append(1 - parts[1])
    for rho in densities:
        lo, hi = rho.support
        parts.append(rho.cdf(np.linspace(lo, hi, n)))
    return np.unique(np.clip(np.concatenate(parts), 0.0, 1.0))


def _quantile_with_support(rho: NeedleDensity, u):
    q = rho.quantile(u)
    lo, hi = rho.support
    return np.clip(q, lo, hi)


def _monotone_coupling(rho0, rho1, n):
    u = _u_grid(n, rho0, rho1)
    if not (math.isfinite(rho0.a) and math.isfinite(rho1.a)):
        u = u[u >= TAIL_QUANTILE]
    if not (math.isfinite(rho0.b) and math.isfinite(rho1.b)):
        u = u[u <= 1 - TAIL_QUANTILE]
    q0 = _quantile_with_support(rho0, u)
    q1 = _quantile_with_support(rho1, u)
    for rho, q in ((rho0, q0), (rho1, q1)):
        if np.any(rho.pdf(q[1:-1]) <= 0):
            raise QuantileFailure(f"CDF of {rho.name} is not strictly increasing on the support interior")
    # drop nodes that rounding made indistinguishable
    keep = np.concatenate([[True], (np.diff(q0) > 0) & (np.diff(q1) > 0)])
    keep[-1] = True
    return u[keep], q0[keep], q1[keep]


def _trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def displacement_interpolate(rho0: NeedleDensity, rho1: NeedleDensity, lam: float, n: int = DEFAULT_RESOLUTION):
    """Monotone-rearrangement interpolant at time ``lam`` and ``W2(rho0, rho1)``.

    Returns ``(density, w2)``; the density is a piecewise-linear grid density
    with ``rho_lam(x_lam(u)) = 1 / ((1-lam)/rho0(q0(u)) + lam/rho1(q1(u)))``.
    """
    if not 0 <= lam <= 1:
        raise DomainExceeded("lambda must lie in [0, 1]")
    u, q0, q1 = _monotone_coupling(rho0, rho1, n)
    w2 = math.sqrt(max(_trapezoid((q1 - q0) ** 2, u), 0.0))
    x = (1 - lam) * q0 + lam * q1
    with np.errstate(divide="ignore"):
        inv = (1 - lam) / rho0.pdf(q0) + lam / rho1.pdf(q1)
        dens = np.where(np.isfinite(inv), 1.0 / inv, 0.0)
    keep = np.concatenate([[True], np.diff(x) > 0])
    return from_grid(x[keep], dens[keep]), w2


@dataclass
class EntropyReport:
    violations: int
    rows: list
    tol: float

    @property
    def passed(self):
        return self.violations == 0


def check_entropy_convexity(rho0: NeedleDensity, rho1: NeedleDensity, params: CdParams, lambda_grid,
                            reference_potential=None, n: int = DEFAULT_RESOLUTION, tol: float = 1e-6) -> EntropyReport:
    """Entropy convexity along the monotone coupling against ``m = exp(-V) dt``.

    ``reference_potential`` is ``V`` (Lebesgue if omitted).  Each row holds
    ``lam``, the entropy of the interpolant and the right-hand side of the
    matching inequality (Renyi-type for finite ``N``, Boltzmann for
    ``N = inf``, essential supremum for ``N = 0``).
    """
    V = reference_potential or (lambda t: np.zeros_like(np.asarray(t, dtype=float)))
    u, q0, q1 = _monotone_coupling(rho0, rho1, n)
    d = np.abs(q1 - q0)
    log_r0 = rho0.logpdf(q0) + V(q0)
    log_r1 = rho1.logpdf(q1) + V(q1)
    inner = slice(1, -1)

    def ent(log_r):
        return _trapezoid(log_r, u)

    w2sq = _trapezoid((q1 - q0) ** 2, u)
    rows = []
    violations = 0
    for lam in np.atleast_1d(np.asarray(lambda_grid, dtype=float)):
        x = (1 - lam) * q0 + lam * q1
        with np.errstate(divide="ignore"):
            inv = (1 - lam) * np.exp(-rho0.logpdf(q0)) + lam * np.exp(-rho1.logpdf(q1))
            log_r = -np.log(inv) + V(x)
        if params.is_infinite:
            lhs = ent(log_r)
            rhs = (1 - lam) * ent(log_r0) + lam * ent(log_r1) - 0.5 * params.K * lam * (1 - lam) * w2sq
        elif params.is_zero:
            lhs = float(np.max(np.exp(log_r[inner])))
            f0 = np.exp(log_sigma(-params.K, 1 - lam, d) + log_r0) / (1 - lam)
            f1 = np.exp(log_sigma(-params.K, lam, d) + log_r1) / lam
            rhs = float(max(np.max(f0[inner]), np.max(f1[inner])))
        else:
            N = params.N
            lhs_int = _trapezoid(np.exp(-log_r / N), u)
            t0 = np.exp(log_tau(params, 1 - lam, d) - log_r0 / N)
            t1 = np.exp(log_tau(params, lam, d) - log_r1 / N)
            rhs_int = _trapezoid(t0 + t1, u)
            sign = -1.0 if N > 0 else 1.0
            lhs, rhs = sign * lhs_int, sign * rhs_int
        bad = lhs > rhs + tol
        violations += int(bad)
        rows.append({"lambda": float(lam), "entropy": float(lhs), "bound": float(rhs), "ok": not bad})
    return EntropyReport(violations, rows, tol)


# -- one-dimensional isoperimetry -----------------------------------------------------

def boundary_measure_1d(rho: NeedleDensity, line: AsymLine, intervals) -> float:
    """Exact boundary content of a finite union of closed intervals.

    Right endpoints inside the domain cost ``rho(w)``; left endpoints cost
    ``rho(u) / backward_factor``.  Touching intervals are merged.
    """
    ivs = sorted((float(u), float(w)) for u, w in intervals)
    merged = []
    for u, w in ivs:
        if w < u:
            raise ValueError(f"bad interval [{u}, {w}]")
        if u < rho.a or w > rho.b:
            raise DomainExceeded("interval leaves the domain")
        if merged and u < merged[-1][1]:
            raise OverlappingIntervals(f"[{u}, {w}] overlaps [{merged[-1][0]}, {merged[-1][1]}]")
        if merged and u == merged[-1][1]:
            merged[-1] = (merged[-1][0], w)
        else:
            merged.append((u, w))
    total = 0.0
    for u, w in merged:
        if w < rho.b:
            total += float(rho.pdf(w))
        if u > rho.a:
            total += float(rho.pdf(u)) / line.backward_factor
    return total


@dataclass
class Profile1D:
    value: float
    interval: tuple
    kind: str


def _interval_cost(rho, lam_b, p, theta):
    return rho.pdf(rho.quantile(p)) / lam_b + rho.pdf(rho.quantile(p + theta))


def profile_curve(rho: NeedleDensity, line: AsymLine, thetas, resolution: int = DEFAULT_RESOLUTION):
    """:func:`profile_1d` evaluated on a grid of ``theta`` values in one batch."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.array([r.value for r in _profile_many(rho, line, thetas, resolution)])


def _profile_many(rho, line, thetas, resolution):
    if np.any((thetas <= 0) | (thetas >= 1)):
        raise DomainExceeded("theta must lie in (0, 1)")
    lam_b = line.backward_factor
    c_left = rho.quantile(thetas)
    c_right = rho.quantile(1 - thetas)
    left = rho.pdf(c_left)
    right = rho.pdf(c_right) / lam_b
    out = []
    # interval scan on a (theta, p) grid in one batch
    frac = (np.arange(1, resolution) / resolution)[None, :]
    p = (1 - thetas)[:, None] * frac
    scan = _interval_cost(rho, lam_b, p, thetas[:, None])
    for j, th in enumerate(thetas):
        best = Profile1D(float(left[j]), (rho.a, float(c_left[j])), "left")
        if right[j] < best.value:
            best = Profile1D(float(right[j]), (float(c_right[j]), rho.b), "right")
        i = int(np.argmin(scan[j]))
        if scan[j, i] < best.value * (1 + 1e-6) + 1e-300:
            step = (1 - th) / resolution
            lo, hi = max(p[j, i] - step, 1e-15), min(p[j, i] + step, 1 - th - 1e-15)
            res = minimize_scalar(lambda x: float(_interval_cost(rho, lam_b, np.array([x]), th)[0]),
                                  bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            val, pc = (float(res.fun), float(res.x)) if res.fun <= scan[j, i] else (float(scan[j, i]), float(p[j, i]))
            if val < best.value:
                best = Profile1D(val, (float(rho.quantile(pc)), float(rho.quantile(pc + th))), "interval")
        out.append(best)
    return out


def profile_1d(rho: NeedleDensity, line: AsymLine, theta: float, resolution: int = DEFAULT_RESOLUTION,
               detail: bool = False):
    """Minimal boundary content over half-intervals and single intervals of mass ``theta``.

    Interior endpoints of an interval ``[u, w]`` cost ``rho(w)`` (forward
    end) and ``rho(u) / backward_factor``; endpoints on the domain boundary
    are free.  Intervals are scanned on ``resolution`` positions and the best
    one is refined by bounded scalar minimization.
    """
    best = _profile_many(rho, line, np.array([float(theta)]), resolution)[0]
    return best if detail else best.value
