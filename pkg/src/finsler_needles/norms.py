"""Asymmetric (Minkowski) norms on R^n, n <= 3, and the weighted circle.

A norm maps an array of shape ``(..., dim)`` to an array of shape ``(...)``.
Distances follow the forward convention ``d(x, y) = ||y - x||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import NotANorm, ParseError, ToleranceNotMet
from .quadrature import bump, gauss_legendre

SWEEP_SIZE = 10_000


def sphere_directions(dim: int, count: int = SWEEP_SIZE) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors (Fibonacci lattice in 3D)."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise NotANorm(f"dimension {dim} not supported (n <= 3)")


class AsymmetricNorm:
    """Base class; subclasses implement ``_evaluate`` on ``(m, dim)`` arrays."""

    dim: int

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected last axis of size {self.dim}, got {x.shape}")
        flat = x.reshape(-1, self.dim)
        out = self._evaluate(flat).reshape(x.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x, y):
        return self(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))

    @cached_property
    def reversibility(self) -> float:
        return reversibility_constant(self)

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(eq=False)
class Euclidean(AsymmetricNorm):
    """``sqrt(x^T A x)`` for a symmetric positive definite ``A``."""

    A: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.dim = self.A.shape[0]
        _check_spd(self.A)

    def _evaluate(self, x):
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", x, self.A, x), 0.0))

    def describe(self):
        return {"form": "euclidean", "A": self.A.tolist()}


@dataclass(eq=False)
class Randers(AsymmetricNorm):
    """``sqrt(x^T A x) + b . x`` with ``b^T A^{-1} b < 1``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.dim = self.A.shape[0]
        if self.b.shape != (self.dim,):
            raise NotANorm("drift vector has the wrong dimension")
        _check_spd(self.A)
        q = float(self.b @ np.linalg.solve(self.A, self.b))
        if not q < 1:
            raise NotANorm(f"Randers drift too large: b^T A^-1 b = {q} >= 1")

    def _evaluate(self, x):
        quad = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", x, self.A, x), 0.0))
        return quad + x @ self.b

    def exact_reversibility(self) -> float:
        """Closed form ``(1 + beta) / (1 - beta)`` with ``beta = sqrt(b^T A^-1 b)``."""
        beta = math.sqrt(float(self.b @ np.linalg.solve(self.A, self.b)))
        return (1 + beta) / (1 - beta)

    def describe(self):
        return {"form": "randers", "A": self.A.tolist(), "b": self.b.tolist()}


def _check_spd(A):
    if A.shape[0] != A.shape[1] or A.shape[0] > 3:
        raise NotANorm("matrix must be square of size <= 3")
    if not np.allclose(A, A.T, atol=1e-14):
        raise NotANorm("matrix must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise NotANorm("matrix must be positive definite")


class TableBased(AsymmetricNorm):
    """Planar norm given by its values on equally spaced unit directions.

    The unit ball is the polygon with vertices ``u_k / values[k]``; the norm
    is the gauge of that polygon, so it is exactly 1-homogeneous and is a
    norm precisely when the polygon is convex.
    """

    def __init__(self, values, tol: float = 1e-10):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise NotANorm("need at least three directional samples")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise NotANorm("directional values must be finite and positive")
        self.dim = 2
        self.values = values
        count = values.size
        self._step = 2 * np.pi / count
        ang = self._step * np.arange(count)
        verts = np.stack([np.cos(ang), np.sin(ang)], axis=1) / values[:, None]
        nxt = np.roll(verts, -1, axis=0)
        e1 = nxt - verts
        e2 = np.roll(e1, -1, axis=0)
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        bad = np.nonzero(cross < -tol * np.maximum(scale, 1e-300))[0]
        if bad.size:
            k = int(bad[0]) + 1
            raise NotANorm(f"samples are not in convex position near direction index {k % count}")
        # edge functional n_k with n_k . v_k = n_k . v_{k+1} = 1
        det = verts[:, 0] * nxt[:, 1] - verts[:, 1] * nxt[:, 0]
        self._normals = np.stack([(nxt[:, 1] - verts[:, 1]) / det, (verts[:, 0] - nxt[:, 0]) / det], axis=1)

    @classmethod
    def from_function(cls, func, count: int = 4096, **kw):
        ang = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return cls(np.asarray(func(dirs), dtype=float), **kw)

    @classmethod
    def regular_polygon(cls, sides: int = 6, count: int = 4096, rotation: float = 0.0):
        """Norm whose unit ball is a regular polygon with unit circumradius."""
        mid = rotation + np.pi / sides + 2 * np.pi * np.arange(sides) / sides
        facets = np.stack([np.cos(mid), np.sin(mid)], axis=1) / math.cos(np.pi / sides)
        return cls.from_function(lambda d: (d @ facets.T).max(axis=1), count)

    def _evaluate(self, x):
        ang = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
        k = np.minimum((ang / self._step).astype(int), self.values.size - 1)
        return np.einsum("ij,ij->i", self._normals[k], x)

    def describe(self):
        return {"form": "table", "values": self.values.tolist()}


class SmoothedNorm(AsymmetricNorm):
    """Mollified and strongly convexified version of a base norm.

    ``||x||' = int ||x - delta |x| y|| phi(y) dy`` with ``phi`` the
    normalized bump on the unit ball, then
    ``||x||'' = sqrt(||x||'^2 + delta |x|^2)``.
    """

    def __init__(self, base: AsymmetricNorm, delta: float, radial: int = 16, angular: int = 32):
        self.base = base
        self.delta = float(delta)
        self.dim = base.dim
        self._nodes, self._weights = _ball_rule(base.dim, radial, angular)

    def mollified(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        r = self.delta * np.linalg.norm(x, axis=1)
        pts = x[:, None, :] - r[:, None, None] * self._nodes[None, :, :]
        vals = self.base(pts)
        return vals @ self._weights

    def _evaluate(self, x):
        first = self.mollified(x)
        return np.sqrt(first ** 2 + self.delta * np.einsum("ij,ij->i", x, x))

    def describe(self):
        return {"form": "smoothed", "delta": self.delta, "base": self.base.describe()}


def _ball_rule(dim: int, radial: int, angular: int):
    """Symmetric quadrature for the normalized bump on the unit ball."""
    if dim == 1:
        t, w = gauss_legendre(2 * radial)
        t = 2 * t - 1
        w = w * bump(t)
        return t[:, None], w / w.sum()
    rho, wr = gauss_legendre(radial)
    wr = wr * rho ** (dim - 1) * bump(rho)
    if dim == 2:
        a = 2 * np.pi * (np.arange(angular) + 0.5) / angular
        dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
    else:
        half = sphere_directions(3, angular * angular // 4)
        dirs = np.concatenate([half, -half])
    nodes = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    weights = np.repeat(wr, dirs.shape[0])
    return nodes, weights / weights.sum()


def evaluate(norm: AsymmetricNorm, x):
    return norm(x)


def asym_distance(norm: AsymmetricNorm, x, y):
    """``d(x, y) = ||y - x||``."""
    return norm.distance(x, y)


def _ratio(norm, dirs):
    return norm(-dirs) / norm(dirs)


def reversibility_constant(norm: AsymmetricNorm, sweep: int = 4096) -> float:
    """``sup_v ||-v|| / ||v||`` by a direction sweep plus local refinement."""
    dim = norm.dim
    if dim == 1:
        a, b = norm(np.array([1.0])), norm(np.array([-1.0]))
        return max(a / b, b / a)
    dirs = sphere_directions(dim, sweep)
    ratios = _ratio(norm, dirs)
    best = int(np.argmax(ratios))
    if dim == 2:
        step = 2 * np.pi / sweep
        a0 = math.atan2(dirs[best, 1], dirs[best, 0])

        def neg(a):
            v = np.array([[math.cos(a), math.sin(a)]])
            return -float(_ratio(norm, v)[0])

        res = minimize_scalar(neg, bounds=(a0 - step, a0 + step), method="bounded", options={"xatol": 1e-12})
        return max(float(ratios[best]), -float(res.fun), 1.0)

    v0 = dirs[best]

    def neg3(p):
        v = np.array([[math.sin(p[0]) * math.cos(p[1]), math.sin(p[0]) * math.sin(p[1]), math.cos(p[0])]])
        return -float(_ratio(norm, v)[0])

    p0 = np.array([math.acos(np.clip(v0[2], -1, 1)), math.atan2(v0[1], v0[0])])
    res = minimize(neg3, p0, method="Nelder-Mead", options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 4000})
    return max(float(ratios[best]), -float(res.fun), 1.0)


def sandwich_ratios(smoothed: AsymmetricNorm, base: AsymmetricNorm, count: int = SWEEP_SIZE):
    dirs = sphere_directions(base.dim, count)
    return smoothed(dirs) / base(dirs)


def smooth_norm(norm: AsymmetricNorm, epsilon: float, count: int = SWEEP_SIZE, max_halvings: int = 40) -> SmoothedNorm:
    """Return a smoothed norm with ``||x|| <= ||x||_eps <= (1 + eps) ||x||``.

    ``delta`` is halved from 0.5 until the sandwich holds on ``count``
    sweep directions (``>= 10^4`` in dimensions 2 and 3).
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    delta = 0.5
    for _ in range(max_halvings):
        cand = SmoothedNorm(norm, delta)
        ratios = sandwich_ratios(cand, norm, count)
        if ratios.min() >= 1 - 1e-12 and ratios.max() <= 1 + epsilon:
            cand.sandwich = (float(ratios.min()), float(ratios.max()))
            return cand
        delta /= 2
    raise ToleranceNotMet(f"no delta >= {delta * 2} achieved the (1+{epsilon}) sandwich")


def convexity_probe(norm: AsymmetricNorm, count: int = 2048, h: float = 1e-3) -> float:
    """Smallest tangential second difference of ``||.||^2`` over unit directions (2D)."""
    if norm.dim != 2:
        raise ValueError("probe implemented for planar norms")
    dirs = sphere_directions(2, count)
    tang = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
    f = lambda p: norm(p) ** 2
    second = (f(dirs + h * tang) - 2 * f(dirs) + f(dirs - h * tang)) / h ** 2
    return float(second.min())


@dataclass(frozen=True)
class CircleStructure:
    """Circle R/Z with ``F(d/dx) = D``, ``F(-d/dx) = D / Lambda`` and ``m = dx``."""

    D: float
    Lambda: float = 1.0
    forward_speed: float = field(init=False)
    backward_speed: float = field(init=False)

    def __post_init__(self):
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ValueError("D must be a positive finite length")
        if not self.Lambda >= 1:
            raise ValueError("Lambda must be >= 1")
        object.__setattr__(self, "forward_speed", float(self.D))
        object.__setattr__(self, "backward_speed", float(self.D) / float(self.Lambda))

    def distance(self, x, y):
        """Distance from coordinate ``x`` to ``y`` (both taken mod 1)."""
        fwd = np.mod(np.asarray(y, dtype=float) - np.asarray(x, dtype=float), 1.0)
        return np.minimum(fwd * self.forward_speed, (1.0 - fwd) * self.backward_speed)


def circle_boundary_rate(cs: CircleStructure) -> float:
    """Isoperimetric profile of the circle structure; constant in ``theta``."""
    return (1.0 + cs.Lambda) / cs.D


def norm_from_dict(desc: dict) -> AsymmetricNorm:
    """Build a norm from a JSON descriptor (see docs/formats.md)."""
    try:
        form = desc["form"].lower()
        if form == "euclidean":
            return Euclidean(desc.get("A", np.eye(int(desc.get("dim", 2)))))
        if form == "randers":
            b = np.asarray(desc["b"], dtype=float)
            return Randers(desc.get("A", np.eye(b.size)), b)
        if form == "table":
            return TableBased(desc["values"])
        if form == "polygon":
            return TableBased.regular_polygon(int(desc.get("sides", 6)), rotation=float(desc.get("rotation", 0.0)))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad norm descriptor: {exc}") from exc
    raise ParseError(f"unknown norm form {desc.get('form')!r}")
