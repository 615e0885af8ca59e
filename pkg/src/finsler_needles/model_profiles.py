"""Model isoperimetric profiles under a curvature-dimension-diameter bound.

Two closed forms are provided (sine-power and Gaussian models).  Other
parameter ranges fall back to a pointwise infimum of one-dimensional
profiles over a family of model needle densities ``J^(N-1)`` where
``J'' + kappa J = 0`` is positive on an interval of length at most ``D``
(log-quadratic densities for ``N = inf``).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtri

from .comparison import CdParams
from .errors import BadDimension, FamilyEmpty
from .needle1d import AsymLine, NeedleDensity, gaussian, profile_curve

FAMILY_RESOLUTION = 2000
FAMILY_SCAN = 400


@dataclass
class ProfileSpec:
    params: CdParams
    D: float = math.inf
    theta_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.05, 0.95, 19))

    def __post_init__(self):
        self.D = float(self.D)
        if not self.D > 0:
            raise FamilyEmpty("diameter bound must be positive")
        self.theta_grid = np.asarray(self.theta_grid, dtype=float)
        if np.any((self.theta_grid <= 0) | (self.theta_grid >= 1)) or np.any(np.diff(self.theta_grid) <= 0):
            raise ValueError("theta grid must be sorted inside (0, 1)")


@dataclass
class Profile:
    theta: np.ndarray
    values: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __call__(self, theta):
        return np.interp(theta, self.theta, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "value"])
        for t, v in zip(self.theta, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


def _check_theta(theta):
    theta = float(theta)
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    return theta


def levy_gromov_profile(K: float, N: float, theta: float) -> float:
    """Profile of the sine-power model ``sin(sqrt(K/(N-1)) r)^(N-1)`` on ``[0, pi sqrt((N-1)/K)]``."""
    theta = _check_theta(theta)
    if not (K > 0 and N > 1 and math.isfinite(N)):
        raise BadDimension("needs K > 0 and finite N > 1")
    if theta in (0.0, 1.0):
        return 0.0
    sq = math.sqrt(K / (N - 1))
    L = math.pi / sq
    dens = lambda r: max(math.sin(sq * r), 0.0) ** (N - 1)
    mass = lambda r: quad(dens, 0.0, r, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    total = mass(L)
    if theta == 0.5:
        R = 0.5 * L
    else:
        R = brentq(lambda r: mass(r) / total - theta, 0.0, L, xtol=1e-14, rtol=1e-15)
    return dens(R) / total


def bakry_ledoux_profile(K: float, theta: float) -> float:
    """Gaussian model profile ``sqrt(K/2pi) exp(-K a^2 / 2)`` with ``a`` the ``theta``-quantile of N(0, 1/K)."""
    theta = _check_theta(theta)
    if not K > 0:
        raise BadDimension("needs K > 0")
    if theta in (0.0, 1.0):
        return 0.0
    z = float(ndtri(theta))
    return math.sqrt(K / (2 * math.pi)) * math.exp(-0.5 * z * z)


def _jacobi_members(kappa: float, L: float, exponent: float, shifts: int):
    """Positive solutions of ``J'' + kappa J = 0`` on ``[0, L]`` as ``(name, log J)`` pairs."""
    out = []
    open_ends = exponent < 0  # J^exponent must stay integrable
    if kappa > 0:
        sq = math.sqrt(kappa)
        room = math.pi / sq - L
        cs = np.linspace(0.0, room, shifts) if room > 0 else np.array([0.0])
        if open_ends:
            cs = np.linspace(0.0, room, shifts + 2)[1:-1] if room > 0 else np.array([])
        for c in cs:
            out.append((f"sin(c={c:.4g})", lambda t, c=c: np.log(np.sin(sq * (t + c)))))
    elif kappa == 0:
        out.append(("const", lambda t: np.zeros_like(t)))
        for c in np.geomspace(1e-3, 1e3, shifts) * L:
            out.append((f"linear(c={c:.4g})", lambda t, c=c: np.log(t + c)))
        if not open_ends:
            out.append(("linear(c=0)", lambda t: np.log(t)))
    else:
        a = math.sqrt(-kappa)
        out.append(("exp+", lambda t: a * t))
        out.append(("exp-", lambda t: -a * t))
        for c in np.linspace(-2 * L, L, shifts):
            out.append((f"cosh(c={c:.4g})", lambda t, c=c: np.log(np.cosh(a * (t + c)))))
        cs = np.geomspace(1e-3, 10.0, shifts) * L
        for c in cs:
            out.append((f"sinh(c={c:.4g})", lambda t, c=c: np.log(np.sinh(a * (t + c)))))
        if not open_ends:
            out.append(("sinh(c=0)", lambda t: np.log(np.sinh(a * t))))
    return out


def model_family(params: CdParams, D: float, lengths: int = 6, shifts: int = 9):
    """Model needle densities for ``(K, N, D)``; raises :class:`FamilyEmpty` if none exist."""
    K, N, D = params.K, params.N, float(D)
    kw = {"resolution": FAMILY_RESOLUTION}
    if params.is_infinite:
        if math.isinf(D):
            if K > 0:
                return [gaussian(K, **kw)]
            raise FamilyEmpty("no finite model measure for K <= 0, N = inf, D = inf")
        members = []
        for L in D * np.linspace(1.0 / lengths, 1.0, lengths):
            if K != 0:
                for m in np.linspace(-L, 2 * L, shifts):
                    members.append(NeedleDensity(lambda t, m=m: -0.5 * K * (t - m) ** 2, 0.0, L,
                                                 name=f"quadratic(L={L:.4g}, m={m:.4g})", **kw))
            else:
                for c in np.linspace(-20.0 / L, 20.0 / L, shifts):
                    members.append(NeedleDensity(lambda t, c=c: c * t, 0.0, L,
                                                 name=f"exp(L={L:.4g}, c={c:.4g})", **kw))
        return members
    e = N - 1.0
    kappa = params.kappa
    Lmax = min(D, params.conjugate_radius())
    if math.isinf(Lmax):
        if e < 0 and kappa < 0:
            a = math.sqrt(-kappa)
            return [NeedleDensity(lambda t: e * np.log(np.cosh(a * t)), -math.inf, math.inf, name="cosh-power", **kw)]
        raise FamilyEmpty(f"no finite model measure for K={K}, N={N}, D=inf")
    members = []
    for L in Lmax * np.linspace(1.0 / lengths, 1.0, lengths):
        for name, logJ in _jacobi_members(kappa, L, e, shifts):
            members.append(NeedleDensity(lambda t, f=logJ: e * f(t), 0.0, L, name=f"{name}, L={L:.4g}", **kw))
    if not members:
        raise FamilyEmpty(f"empty model family for K={K}, N={N}, D={D}")
    return members


def family_profile(members, theta_grid, scan: int = FAMILY_SCAN):
    """Pointwise minimum of reversible one-dimensional profiles over ``members``."""
    line = AsymLine(1.0)
    best = np.full(len(theta_grid), np.inf)
    arg = [None] * len(theta_grid)
    for rho in members:
        vals = profile_curve(rho, line, theta_grid, scan)
        better = vals < best
        for j in np.nonzero(better)[0]:
            arg[j] = rho.name
        best = np.minimum(best, vals)
    return best, arg


def numerical_model_profile(spec: ProfileSpec, lengths: int = 6, shifts: int = 9) -> Profile:
    """Infimum of needle profiles over the model family on ``spec.theta_grid``."""
    members = model_family(spec.params, spec.D, lengths, shifts)
    values, arg = family_profile(members, spec.theta_grid)
    return Profile(spec.theta_grid.copy(), values, "numerical",
                   {"members": len(members), "argmin": arg, "K": spec.params.K, "N": spec.params.N, "D": spec.D})


def classical_branch(params: CdParams, D: float):
    """Name of the closed-form branch valid for ``(params, D)``, or ``None``."""
    if params.K > 0 and params.is_infinite and math.isinf(D):
        return "bakry_ledoux"
    if params.K > 0 and not params.is_infinite and params.N > 1 and D >= params.conjugate_radius() * (1 - 1e-12):
        return "levy_gromov"
    return None


def model_profile(params: CdParams, D: float, theta_grid) -> Profile:
    """Closed form when available, numerical family infimum otherwise."""
    theta_grid = np.asarray(theta_grid, dtype=float)
    branch = classical_branch(params, D)
    if branch == "bakry_ledoux":
        vals = [bakry_ledoux_profile(params.K, t) for t in theta_grid]
    elif branch == "levy_gromov":
        vals = [levy_gromov_profile(params.K, params.N, t) for t in theta_grid]
    else:
        return numerical_model_profile(ProfileSpec(params, D, theta_grid))
    return Profile(theta_grid.copy(), np.array(vals), branch, {"K": params.K, "N": params.N, "D": float(D)})
