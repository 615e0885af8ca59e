"""Small quadrature helpers."""
from __future__ import annotations

import numpy as np


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-12, max_depth: int = 50) -> float:
    """Integrate a scalar function on ``[a, b]`` by recursive Simpson refinement.

    Uses an explicit stack and Richardson correction of each accepted panel.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4 * frm + fhi)
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
    return sign * total


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int):
    """Nodes and weights on ``[0, 1]``."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[order]


def cell_integrals(f, edges: np.ndarray, order: int = 5) -> np.ndarray:
    """Integral of a vectorized ``f`` over each cell ``[edges[i], edges[i+1]]``."""
    x, w = gauss_legendre(order)
    lo = edges[:-1, None]
    h = np.diff(edges)[:, None]
    pts = lo + h * x[None, :]
    vals = f(pts)
    return (vals * w[None, :]).sum(axis=1) * h[:, 0]


def bump(t):
    """Unnormalized bump ``exp(-1/(1-t^2))`` on ``|t| < 1``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def bump_rule(order: int = 64):
    """Quadrature for the normalized one-sided bump on ``[0, 1]``.

    Returns nodes ``u`` and weights summing to one, for integrals
    ``int g(u) phi(u) du`` with ``phi`` the bump rescaled to ``[0, 1]``.
    """
    x, w = gauss_legendre(order)
    phi = bump(2.0 * x - 1.0)
    wt = w * phi
    return x, wt / wt.sum()
