"""Isoperimetric profile estimates on concrete asymmetric spaces.

Three kinds of spaces are handled: the circle with constant asymmetric
speed (:class:`CircleGrid`), a square lattice in the plane carrying a
constant asymmetric norm and a weight (:class:`LatticeNormSpace`), and a
needle on the asymmetric line.  Profiles are estimated over explicit
candidate families, so the estimates are upper bounds for the true profile
and comparing them with the model lower bound is a one-sided test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .comparison import CdParams, bm_factor
from .errors import MassUnreachable
from .localization import FiniteAsymSpace, solve_potential
from .model_profiles import Profile, model_profile
from .needle1d import AsymLine, NeedleDensity, profile_1d
from .norms import AsymmetricNorm, CircleStructure, circle_boundary_rate, sphere_directions

EPS_STEPS = (3, 5, 8)
LEVEL_RAMP = 2.0
MASS_TOL = 1e-3
CLOSED_RTOL = 1e-9
# keeps half-space normals off lattice directions, so levels split columns finely
ANGLE_OFFSET = 0.0123


# -- spaces -------------------------------------------------------------------

@dataclass
class CircleGrid:
    """``n`` equally spaced points on the circle structure with mass ``1/n`` each."""

    D: float
    Lambda: float = 1.0
    n: int = 10_000

    def __post_init__(self):
        self.structure = CircleStructure(self.D, self.Lambda)
        self.m = np.full(self.n, 1.0 / self.n)

    @property
    def spacing(self) -> float:
        """Forward distance between neighbouring points."""
        return self.D / self.n

    def steps_within(self, eps: float):
        """Forward and backward index steps reachable at distance ``<= eps``."""
        fwd = int(math.floor(eps / (self.D / self.n) * (1 + CLOSED_RTOL)))
        back = int(math.floor(eps * self.Lambda / (self.D / self.n) * (1 + CLOSED_RTOL)))
        return min(fwd, self.n), min(back, self.n)

    def forward_neighbourhood(self, mask, eps):
        fwd, back = self.steps_within(eps)
        out = mask.copy()
        for k in range(1, fwd + 1):
            out |= np.roll(mask, k)
        for k in range(1, back + 1):
            out |= np.roll(mask, -k)
        return out

    def arc(self, start: int, count: int):
        mask = np.zeros(self.n, dtype=bool)
        mask[(start + np.arange(count)) % self.n] = True
        return mask

    def to_finite(self) -> FiniteAsymSpace:
        x = np.arange(self.n) / self.n
        d = self.structure.distance(x[:, None], x[None, :])
        return FiniteAsymSpace(d, self.m.copy(), coords=x[:, None], validate=False)


class LatticeNormSpace:
    """Cell-centred square lattice on ``[-half_width, half_width]^2`` with ``d(x, y) = ||y - x||``.

    Cell masses are ``exp(log_weight) * h^2`` normalized to total mass one.
    Forward neighbourhoods are exact on the lattice: a point ``y`` is within
    ``eps`` of ``A`` iff ``y - x`` lies in the stencil of offsets of norm
    ``<= eps`` for some ``x`` in ``A``.
    """

    def __init__(self, norm: AsymmetricNorm, size: int = 300, half_width: float = 5.0, log_weight=None):
        self.norm = norm
        self.size = int(size)
        self.half_width = float(half_width)
        self.h = 2 * self.half_width / self.size
        axis = -self.half_width + self.h * (np.arange(self.size) + 0.5)
        self.axis = axis
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        self.coords = np.stack([X.ravel(), Y.ravel()], axis=1)
        if log_weight is None:
            log_weight = lambda p: -0.5 * np.sum(p * p, axis=-1)
        self.log_weight = log_weight
        lw = log_weight(self.coords)
        w = np.exp(lw - lw.max())
        self.m = w / w.sum()
        dirs = sphere_directions(2, 4096)
        self._min_unit = float(norm(dirs).min()) * 0.99
        self._stencils = {}

    @property
    def spacing(self) -> float:
        return self.h

    def stencil(self, eps: float) -> np.ndarray:
        key = round(eps / self.h, 9)
        if key not in self._stencils:
            r = int(math.ceil(eps / (self.h * self._min_unit))) + 1
            ij = np.stack(np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij"), -1).reshape(-1, 2)
            vals = self.norm(ij * self.h)
            keep = (vals <= eps * (1 + CLOSED_RTOL)) & np.any(ij != 0, axis=1)
            self._stencils[key] = ij[keep]
        return self._stencils[key]

    def _shifts(self, eps):
        n = self.size
        for di, dj in self.stencil(eps):
            yield (slice(max(0, -di), n - max(0, di)), slice(max(0, -dj), n - max(0, dj))), \
                  (slice(max(0, di), n - max(0, -di)), slice(max(0, dj), n - max(0, -dj))), (di, dj)

    def forward_neighbourhood(self, mask, eps):
        A = mask.reshape(self.size, self.size)
        out = A.copy()
        for src, dst, _ in self._shifts(eps):
            out[dst] |= A[src]
        return out.ravel()

    def support_function(self, u, count: int = 8192) -> float:
        """``max u.v`` over the unit ball ``{||v|| <= 1}``."""
        dirs = sphere_directions(2, count)
        return float(np.max(dirs @ np.asarray(u, dtype=float) / self.norm(dirs)))

    def reversibility_lower_bound(self, pairs: int = 2000, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, len(self.coords), pairs)
        j = rng.integers(0, len(self.coords), pairs)
        keep = i != j
        v = self.coords[j[keep]] - self.coords[i[keep]]
        return float(np.max(self.norm(v) / self.norm(-v)))


def forward_boundary(space, A, eps: float) -> float:
    """``(m(B+(A, eps)) - m(A)) / eps`` with the closed forward neighbourhood ``d(A, y) <= eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = space.m
    mask = np.zeros(len(m), dtype=bool)
    A = np.asarray(A)
    if A.dtype == bool:
        mask[:] = A
    else:
        mask[A.astype(int)] = True
    if not mask.any() or mask.all():
        return 0.0
    if isinstance(space, FiniteAsymSpace):
        reach = space.d[mask].min(axis=0) <= eps * (1 + CLOSED_RTOL)
    else:
        reach = space.forward_neighbourhood(mask, eps)
    return float(m[reach & ~mask].sum()) / eps


def richardson_boundary(space, mask, steps=EPS_STEPS) -> float:
    """Fit ``q(eps) = I + c eps`` to forward quotients at ``eps = k h`` and return ``I``."""
    eps = np.array([k * space.spacing for k in steps], dtype=float)
    q = np.array([forward_boundary(space, mask, e) for e in eps])
    design = np.stack([np.ones_like(eps), eps], axis=1)
    coef, *_ = np.linalg.lstsq(design, q, rcond=None)
    return float(coef[0])


def _ramped_mass(offset, m, s, width):
    """Mass of ``{offset <= s}`` with each point spread uniformly over a level window of ``width``."""
    return float(np.sum(m * np.clip((s + 0.5 * width - offset) / width, 0.0, 1.0)))


def level_boundary(space, level, mask, steps=EPS_STEPS, ramp: float = LEVEL_RAMP) -> float:
    """Boundary content of ``A = {level <= t}`` for a unit-speed level function.

    ``level`` must satisfy ``d(A_s, y) = (level(y) - s)_+`` for all its
    sublevel sets ``A_s``, so ``B+(A_s, eps) = A_{s + eps}``.  Central
    quotients ``(M(t + eps) - M(t - eps)) / 2 eps`` of ``M(s) = m(A_s)`` at
    ``eps = k h`` are extrapolated by fitting ``I + c eps^2``.  Point masses
    are spread over a level window of ``ramp * h`` to smooth the lattice
    staircase.
    """
    h = space.spacing
    level = np.asarray(level, dtype=float)
    t = 0.5 * (level[mask].max() + level[~mask].min())
    eps = np.array([k * h for k in steps], dtype=float)
    reach = eps[-1] + ramp * h
    near = np.abs(level - t) <= reach
    off, m = level[near] - t, space.m[near]
    q = np.array([(_ramped_mass(off, m, e, ramp * h) - _ramped_mass(off, m, -e, ramp * h)) / (2 * e) for e in eps])
    design = np.stack([np.ones_like(eps), eps ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(design, q, rcond=None)
    return float(coef[0])


def level_set_for_mass(values, m, theta: float, tol: float = MASS_TOL):
    """Sublevel set ``{values <= t}`` whose mass is closest to ``theta``."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    cum = np.cumsum(m[order])
    # only cut between distinct values
    last = np.append(sv[1:] != sv[:-1], True)
    cuts = np.nonzero(last)[0]
    k = cuts[np.argmin(np.abs(cum[cuts] - theta))]
    if abs(cum[k] - theta) > tol:
        raise MassUnreachable(f"closest level has mass {cum[k]:.6g}, wanted {theta}")
    mask = np.zeros(len(values), dtype=bool)
    mask[order[: k + 1]] = True
    return mask


# -- instances and estimates -------------------------------------------------------

@dataclass
class IsoInstance:
    """A space together with the curvature data used for the model comparison.

    ``kind`` is one of ``"circle"``, ``"lattice"`` and ``"needle"``.  For the
    circle ``params`` is ``None`` and the model value is ``(1 + Lambda) / D``.
    """

    kind: str
    space: object
    params: CdParams | None
    D: float = math.inf
    Lambda: float = 1.0
    tol_grid: float = 0.02
    line: AsymLine | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("circle", "lattice", "needle"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.Lambda < 1:
            raise ValueError("Lambda must be >= 1")

    def lambda_consistent(self) -> bool:
        if self.kind == "lattice":
            return self.space.reversibility_lower_bound() <= self.Lambda + 1e-6
        if self.kind == "needle":
            return self.line.reversibility <= self.Lambda + 1e-6
        return self.space.Lambda <= self.Lambda + 1e-6

    def model_values(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "circle":
            return np.full(theta.shape, circle_boundary_rate(self.space.structure))
        return model_profile(self.params, self.D, theta).values / self.Lambda


def circle_instance(D: float, Lambda: float, n: int = 10_000) -> IsoInstance:
    grid = CircleGrid(D, Lambda, n)
    return IsoInstance("circle", grid, None, D, Lambda, tol_grid=0.02 * (1 + Lambda) / D)


def needle_instance(rho: NeedleDensity, params: CdParams, line: AsymLine | None = None, D: float = math.inf) -> IsoInstance:
    line = AsymLine(1.0) if line is None else line
    return IsoInstance("needle", rho, params, D, line.reversibility, tol_grid=1e-6, line=line)


def randers_gaussian_instance(norm: AsymmetricNorm, K: float = 1.0, size: int = 300, half_width: float = 5.0,
                              Lambda: float | None = None) -> IsoInstance:
    """Lattice with weight ``exp(-K |x|^2 / 2)`` and the transferred bound ``K' = K inf |v|^2 / ||v||^2``."""
    from .norms import reversibility_constant

    dirs = sphere_directions(2, 20_000)
    k_prime = K * float(np.min(1.0 / norm(dirs) ** 2))
    space = LatticeNormSpace(norm, size, half_width, lambda p: -0.5 * K * np.sum(p * p, axis=-1))
    lam = reversibility_constant(norm) if Lambda is None else Lambda
    return IsoInstance("lattice", space, CdParams(k_prime, math.inf, 2), math.inf, lam, tol_grid=0.02,
                       meta={"K": K, "K_prime": k_prime})


@dataclass
class CandidateSpec:
    """Candidate shapes for lattice profiles.

    Every candidate is a sublevel set of a unit-speed level function:
    half-spaces use ``x.u / h(u)`` with ``h`` the support function of the
    unit ball, forward balls use ``||x - c||`` and potential candidates use
    the extension ``min_i phi_i + ||x - x_i||`` of a solved coarse potential.
    """

    half_space_directions: int = 16
    ball_centers: tuple = ((0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0))
    potential_directions: int = 4
    coarse_size: int = 15


def _lattice_candidates(space: LatticeNormSpace, theta: float, spec: CandidateSpec):
    coords = space.coords
    for k in range(spec.half_space_directions):
        ang = 2 * math.pi * k / spec.half_space_directions + ANGLE_OFFSET
        u = np.array([math.cos(ang), math.sin(ang)])
        yield f"half_space(angle={ang:.4f})", coords @ u / space.support_function(u)
    for c in spec.ball_centers:
        c = np.asarray(c, dtype=float)
        yield f"forward_ball(center={tuple(float(v) for v in c)})", space.norm(coords - c)
    for k in range(spec.potential_directions):
        ang = 2 * math.pi * k / spec.potential_directions + ANGLE_OFFSET
        yield f"potential(angle={ang:.4f})", _coarse_potential(space, theta, ang, spec.coarse_size)


def _coarse_potential(space: LatticeNormSpace, theta, angle, coarse):
    """Optimal potential for ``chi_A - m(A)`` on a coarse lattice, extended by ``min_i phi_i + ||y - x_i||``."""
    hw = space.half_width
    ax = np.linspace(-hw, hw, coarse + 2)[1:-1]
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    lw = space.log_weight(pts)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    u = np.array([math.cos(angle), math.sin(angle)])
    proj = pts @ u
    order = np.argsort(proj)
    A = np.zeros(len(pts), dtype=bool)
    A[order[: int(np.searchsorted(np.cumsum(w[order]), theta)) + 1]] = True
    f = A.astype(float) - float(w[A].sum())
    d = space.norm(pts[None, :, :] - pts[:, None, :])
    np.fill_diagonal(d, 0.0)
    sol = solve_potential(FiniteAsymSpace(d, w, validate=False), f)
    ext = np.full(len(space.coords), np.inf)
    for i in range(len(pts)):
        np.minimum(ext, sol.phi[i] + space.norm(space.coords - pts[i]), out=ext)
    return ext


def estimate_profile(inst: IsoInstance, theta_grid, candidates: CandidateSpec | None = None) -> Profile:
    """Family minimum of Richardson-extrapolated boundary quotients at each ``theta``."""
    theta_grid = np.asarray(theta_grid, dtype=float)
    values, which = [], []
    if inst.kind == "needle":
        for th in theta_grid:
            best = profile_1d(inst.space, inst.line, th, detail=True)
            values.append(best.value)
            which.append(best.kind)
    elif inst.kind == "circle":
        grid = inst.space
        for th in theta_grid:
            count = int(round(th * grid.n))
            if abs(count / grid.n - th) > MASS_TOL:
                raise MassUnreachable(f"no arc of mass {th}")
            values.append(richardson_boundary(grid, grid.arc(0, count)))
            which.append("arc")
    else:
        spec = CandidateSpec() if candidates is None else candidates
        space = inst.space
        for th in theta_grid:
            best, arg = math.inf, None
            for name, g in _lattice_candidates(space, th, spec):
                mask = level_set_for_mass(g, space.m, th)
                val = level_boundary(space, g, mask)
                if val < best:
                    best, arg = val, name
            if arg is None:
                raise MassUnreachable("empty candidate family")
            values.append(best)
            which.append(arg)
    return Profile(theta_grid.copy(), np.array(values), f"estimate:{inst.kind}", {"argmin": which})


@dataclass
class MarginReport:
    theta: np.ndarray
    estimate: np.ndarray
    model: np.ndarray
    tol_grid: float

    @property
    def margins(self) -> np.ndarray:
        return self.estimate - self.model

    @property
    def violations(self) -> int:
        return int(np.sum(self.margins < -self.tol_grid))

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def rows(self):
        return [{"theta": float(t), "I_est": float(e), "Lambda_inv_model": float(mo), "margin": float(e - mo)}
                for t, e, mo in zip(self.theta, self.estimate, self.model)]


def verify_main_inequality(inst: IsoInstance, profile: Profile) -> MarginReport:
    """Compare an estimated profile with ``Lambda^-1 I_{K,N,D}`` (circle: ``(1 + Lambda) / D``)."""
    return MarginReport(profile.theta, profile.values, inst.model_values(profile.theta), inst.tol_grid)


# -- Brunn-Minkowski -------------------------------------------------------------------

@dataclass
class BMReport:
    rows: list
    tol: float

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if r["lhs"] < r["rhs"] - self.tol)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _factor_min(K, lam, dmin, dmax):
    """Minimum of the volume factor over ``d`` in ``[dmin, dmax]`` (the factor is monotone in ``d``)."""
    ends = np.array([max(dmin, 0.0), dmax])
    return float(np.min(bm_factor(K, lam, ends)))


def _interval_distance_range(line, a0, b0, a1, b1):
    xs = np.array([a0, b0])[:, None]
    ys = np.array([a1, b1])[None, :]
    d = line.distance(xs, ys)
    lo = 0.0 if (a1 <= b0 and a0 <= b1) else float(d.min())
    return lo, float(d.max())


def check_brunn_minkowski(log_weight, K: float, A0, A1, lambda_grid, line: AsymLine | None = None,
                          tol: float = 1e-9) -> BMReport:
    """Brunn-Minkowski check for intervals ``A0, A1`` on the line with weight ``exp(log_weight)``.

    Minimal geodesics of the asymmetric line are segments, so the
    intermediate set is the interval of convex combinations.  Masses are
    integrated by adaptive quadrature.
    """
    from .quadrature import adaptive_simpson

    line = AsymLine(1.0) if line is None else line
    w = lambda t: math.exp(log_weight(t))
    (a0, b0), (a1, b1) = A0, A1
    m0, m1 = adaptive_simpson(w, a0, b0, 1e-13), adaptive_simpson(w, a1, b1, 1e-13)
    dmin, dmax = _interval_distance_range(line, a0, b0, a1, b1)
    rows = []
    for lam in lambda_grid:
        lam = float(lam)
        lo, hi = (1 - lam) * a0 + lam * a1, (1 - lam) * b0 + lam * b1
        lhs = adaptive_simpson(w, lo, hi, 1e-13)
        f0 = _factor_min(K, 1 - lam, dmin, dmax)
        f1 = _factor_min(K, lam, dmin, dmax)
        rows.append({"lambda": lam, "lhs": lhs, "rhs": min(f0 * m0, f1 * m1), "set": (lo, hi)})
    return BMReport(rows, tol)


def check_brunn_minkowski_discrete(x, cell_mass, K: float, A0, A1, lambda_grid, line: AsymLine | None = None) -> BMReport:
    """Discrete Brunn-Minkowski check on a uniform grid ``x`` with cell masses.

    ``A0`` and ``A1`` are index sets standing for unions of grid cells.  All
    pairwise intermediate points are enumerated and every cell whose centre
    lies within one spacing of one of them is counted; this cover contains
    the continuous intermediate set of the two cell unions.  The tolerance
    is one cell mass.
    """
    line = AsymLine(1.0) if line is None else line
    x = np.asarray(x, dtype=float)
    cell_mass = np.asarray(cell_mass, dtype=float)
    h = float(x[1] - x[0])
    i0 = np.asarray(sorted(set(int(i) for i in A0)))
    i1 = np.asarray(sorted(set(int(i) for i in A1)))
    m0, m1 = cell_mass[i0].sum(), cell_mass[i1].sum()
    dist = line.distance(x[i0][:, None], x[i1][None, :])
    spread = h * max(1.0, line.backward_factor)
    dmin, dmax = max(float(dist.min()) - spread, 0.0), float(dist.max()) + spread
    rows = []
    for lam in lambda_grid:
        lam = float(lam)
        mids = ((1 - lam) * x[i0][:, None] + lam * x[i1][None, :]).ravel()
        mids = np.unique(np.round((mids - x[0]) / h, 9))
        hit = np.zeros(len(x), dtype=bool)
        for off in (-1, 0, 1):
            k = np.floor(mids).astype(int) + off
            for kk in (k, k + 1):
                ok = (kk >= 0) & (kk < len(x))
                near = np.abs(kk[ok] - mids[ok]) <= 1 + 1e-9
                hit[kk[ok][near]] = True
        lhs = float(cell_mass[hit].sum())
        rhs = min(_factor_min(K, 1 - lam, dmin, dmax) * m0, _factor_min(K, lam, dmin, dmax) * m1)
        rows.append({"lambda": lam, "lhs": lhs, "rhs": rhs, "cells": int(hit.sum())})
    return BMReport(rows, float(cell_mass.max()))
