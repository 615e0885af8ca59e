"""Discrete needle decompositions on finite asymmetric metric-measure spaces.

The mean-zero maximization ``max sum f m phi`` over 1-Lipschitz ``phi``
(``phi(j) - phi(i) <= d(i, j)``) is solved as a transshipment problem by
successive shortest paths.  Tight pairs of the optimal potential define the
transport rays and the partition of the space into free points (D),
points on exactly one ray (T), and branching points (B+ / B-).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path

from .errors import (
    AmbiguousInterior,
    InvalidSpace,
    NotMeanZero,
    NotSaturated,
    NumericalDualityGap,
)

TIGHT_RTOL = 1e-7


@dataclass
class FiniteAsymSpace:
    """Finite point set with an asymmetric distance matrix and positive weights."""

    d: np.ndarray
    m: np.ndarray
    points: list = None
    coords: np.ndarray = None
    validate: bool = True
    triangle_tol: float = 1e-12

    def __post_init__(self):
        self.d = np.array(self.d, dtype=float)
        self.m = np.array(self.m, dtype=float)
        n = self.d.shape[0]
        if self.d.ndim != 2 or self.d.shape != (n, n):
            raise InvalidSpace("distance matrix must be square")
        if self.m.shape != (n,):
            raise InvalidSpace("need one weight per point")
        if np.any(self.m <= 0) or not np.all(np.isfinite(self.m)):
            raise InvalidSpace("weights must be positive and finite")
        if self.points is None:
            self.points = list(range(n))
        if len(self.points) != n:
            raise InvalidSpace("need one id per point")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
        if np.any(np.diag(self.d) != 0):
            raise InvalidSpace("d(i, i) must be 0")
        off = ~np.eye(n, dtype=bool)
        if np.any(self.d[off] <= 0) or not np.all(np.isfinite(self.d)):
            raise InvalidSpace("d(i, j) must be positive and finite for i != j")
        if self.validate:
            worst, triple = triangle_defect(self.d)
            if worst > self.triangle_tol * max(1.0, float(self.d.max())):
                raise InvalidSpace(f"ordered triangle inequality fails by {worst:.3g} at {triple}")

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.m.sum())

    @classmethod
    def repaired(cls, d, m, **kw):
        """Replace ``d`` by its shortest-path closure before validation."""
        return cls(metric_closure(d), m, **kw)


def metric_closure(d) -> np.ndarray:
    d = np.array(d, dtype=float)
    out = shortest_path(d, method="FW", directed=True)
    np.fill_diagonal(out, 0.0)
    return out


def triangle_defect(d: np.ndarray, chunk: int = 64):
    """Largest ``d(i,j) - d(i,k) - d(k,j)`` and a triple attaining it."""
    n = d.shape[0]
    worst, where = -math.inf, None
    for start in range(0, n, chunk):
        ks = slice(start, min(n, start + chunk))
        via = d[:, ks, None] + d[None, ks, :]  # (i, k, j)
        gap = d[:, None, :] - via
        idx = np.unravel_index(np.argmax(gap), gap.shape)
        if gap[idx] > worst:
            worst = float(gap[idx])
            where = (int(idx[0]), int(idx[1]) + start, int(idx[2]))
    return worst, where


def line_space(x, m=None, backward_factor: float = 1.0) -> FiniteAsymSpace:
    """Points on the real line with ``d(s, t) = t - s`` forward and ``backward_factor * (s - t)`` backward."""
    x = np.asarray(x, dtype=float)
    diff = x[None, :] - x[:, None]
    d = np.where(diff >= 0, diff, -backward_factor * diff)
    m = np.full(x.size, 1.0 / x.size) if m is None else m
    return FiniteAsymSpace(d, m, coords=x[:, None], validate=False)


def norm_space(coords, norm, m=None) -> FiniteAsymSpace:
    """Points in R^n with ``d(x, y) = ||y - x||``."""
    coords = np.asarray(coords, dtype=float)
    d = norm(coords[None, :, :] - coords[:, None, :])
    np.fill_diagonal(d, 0.0)
    m = np.full(len(coords), 1.0 / len(coords)) if m is None else m
    return FiniteAsymSpace(d, m, coords=coords, validate=False)


# -- transshipment ----------------------------------------------------------------

@dataclass
class PotentialSolution:
    phi: np.ndarray
    flow: sparse.csr_matrix
    objective: float
    dual_objective: float
    augmentations: int = 0

    @property
    def gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    def lipschitz_violation(self, space: FiniteAsymSpace) -> float:
        return float(np.max(self.phi[None, :] - self.phi[:, None] - space.d))


def _dense_dijkstra(cost: np.ndarray, sources: np.ndarray, targets: np.ndarray):
    """Multi-source Dijkstra on a dense nonnegative cost matrix.

    Stops after the first target is settled; returns distances (``inf`` for
    unsettled nodes are replaced by the stopping distance by the caller),
    predecessors, the reached target and the settled mask.
    """
    n = cost.shape[0]
    dist = np.full(n, np.inf)
    pred = np.full(n, -1)
    done = np.zeros(n, dtype=bool)
    dist[sources] = 0.0
    is_target = np.zeros(n, dtype=bool)
    is_target[targets] = True
    while True:
        cand = np.where(done, np.inf, dist)
        u = int(np.argmin(cand))
        if not np.isfinite(cand[u]):
            return dist, pred, -1, done
        done[u] = True
        if is_target[u]:
            return dist, pred, u, done
        alt = dist[u] + cost[u]
        better = (alt < dist) & ~done
        dist[better] = alt[better]
        pred[better] = u


def solve_potential(space: FiniteAsymSpace, f, gap_rtol: float = 1e-7, canonical: bool = True) -> PotentialSolution:
    """Optimal 1-Lipschitz potential for ``max sum f m phi`` and the dual transport flow.

    Mass moves from points with ``f < 0`` to points with ``f > 0``.  Arc
    costs are nonnegative, so zero potentials are a valid start and every
    phase is a Dijkstra search on reduced costs.  With ``canonical=True`` the
    returned ``phi`` is the largest potential with ``phi[0] = 0`` that is
    complementary to the computed flow, which makes ties reproducible.
    """
    d = space.d
    n = space.n
    f = np.asarray(f, dtype=float)
    if f.shape != (n,):
        raise NotMeanZero("f must have one value per point")
    supply = -f * space.m  # positive: excess to ship out
    scale = float(np.sum(np.abs(f) * space.m))
    if abs(supply.sum()) > 1e-12 * max(scale, 1e-300):
        raise NotMeanZero(f"sum f m = {-supply.sum():.3g} is not zero")
    if scale == 0:
        return PotentialSolution(np.zeros(n), sparse.csr_matrix((n, n)), 0.0, 0.0)
    excess = supply.copy()
    tiny = 1e-15 * scale
    flow = np.zeros((n, n))
    pot = np.zeros(n)
    rounds = 0
    while True:
        src = np.nonzero(excess > tiny)[0]
        dst = np.nonzero(excess < -tiny)[0]
        if src.size == 0 or dst.size == 0:
            break
        rc = d + pot[:, None] - pot[None, :]
        np.maximum(rc, 0.0, out=rc)
        # residual reverse arcs j -> i where flow(i, j) > 0, reduced cost ~ 0
        back = flow.T > tiny
        cost = np.where(back, np.minimum(rc, np.maximum(-rc.T, 0.0)), rc)
        dist, pred, t, settled = _dense_dijkstra(cost, src, dst)
        if t < 0:
            raise NumericalDualityGap("no augmenting path found")
        dt = dist[t]
        pot += np.where(settled, np.minimum(dist, dt), dt)
        # bottleneck along the path
        path = [t]
        while pred[path[-1]] >= 0:
            path.append(int(pred[path[-1]]))
        path.reverse()
        s = path[0]
        amount = min(excess[s], -excess[t])
        arcs = []
        for u, v in zip(path[:-1], path[1:]):
            if back[u, v] and cost[u, v] <= rc[u, v]:
                amount = min(amount, flow[v, u])
                arcs.append((u, v, True))
            else:
                arcs.append((u, v, False))
        for u, v, rev in arcs:
            if rev:
                flow[v, u] -= amount
                if flow[v, u] <= tiny:
                    flow[v, u] = 0.0
            else:
                flow[u, v] += amount
        excess[s] -= amount
        excess[t] += amount
        rounds += 1
    phi = pot - pot[0]
    if canonical:
        phi = _maximal_potential(d, flow, phi, tiny)
    objective = float(np.sum(flow * d))
    dual = float(np.dot(f * space.m, phi))
    if abs(objective - dual) > gap_rtol * max(abs(objective), 1e-300):
        raise NumericalDualityGap(f"primal {objective!r} vs dual {dual!r}")
    return PotentialSolution(phi, sparse.csr_matrix(flow), objective, dual, rounds)


def _maximal_potential(d, flow, phi, tiny):
    """Largest ``phi`` with ``phi[0] = 0`` that is 1-Lipschitz and tight on every flow arc.

    Shortest paths from point 0 in the difference-constraint graph
    (``i -> j`` weight ``d(i,j)``, ``j -> i`` weight ``-d(i,j)`` on flow
    arcs), run as Dijkstra on costs reduced by the current potential.
    """
    rc = np.maximum(d + phi[:, None] - phi[None, :], 0.0)
    carries = flow > tiny
    rc = np.where(carries.T, 0.0, rc)  # reverse of a flow arc has reduced cost 0
    dist, _, _, _ = _dense_dijkstra(rc, np.array([0]), np.array([], dtype=int))
    out = dist + phi - phi[0]
    return out - out[0]


# -- tight graph and rays ----------------------------------------------------------

def default_eps_tight(space: FiniteAsymSpace) -> float:
    return TIGHT_RTOL * float(space.d.max())


def tight_pairs(space: FiniteAsymSpace, phi, eps_tight=None) -> np.ndarray:
    """Boolean matrix of pairs with ``|phi(j) - phi(i) - d(i,j)| <= eps_tight``."""
    eps = default_eps_tight(space) if eps_tight is None else eps_tight
    phi = np.asarray(phi, dtype=float)
    tight = np.abs(phi[None, :] - phi[:, None] - space.d) <= eps
    np.fill_diagonal(tight, False)
    return tight


def tight_graph(space: FiniteAsymSpace, phi, eps_tight=None, reduce: bool = True) -> nx.DiGraph:
    """Directed graph of tight pairs, reduced to its skeleton by default.

    An edge ``(i, j)`` is dropped when some ``k`` has tight ``(i, k)`` and
    ``(k, j)`` with ``d(i,j) = d(i,k) + d(k,j)`` within ``eps_tight``.
    """
    eps = default_eps_tight(space) if eps_tight is None else eps_tight
    tight = tight_pairs(space, phi, eps)
    keep = tight.copy()
    if reduce:
        d = space.d
        for i in np.nonzero(tight.any(axis=1))[0]:
            mids = np.nonzero(tight[i])[0]
            if mids.size == 0:
                continue
            via = d[i, mids][:, None] + d[mids, :]
            additive = tight[mids, :] & (np.abs(via - d[i][None, :]) <= eps)
            keep[i] &= ~additive.any(axis=0)
    g = nx.DiGraph()
    g.add_nodes_from(range(space.n))
    rows, cols = np.nonzero(keep)
    g.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return g


@dataclass
class Ray:
    points: list
    params: list
    v_weight: float
    mu: dict


@dataclass
class RayDecomposition:
    rays: list
    D_set: set
    T_set: set
    B_plus: set
    B_minus: set
    eps_tight: float
    phi: np.ndarray = field(repr=False, default=None)

    @property
    def B_set(self):
        return self.B_plus | self.B_minus

    def ray_of(self):
        """Map from T-point to the index of its ray."""
        out = {}
        for k, r in enumerate(self.rays):
            for p in r.points:
                if p in self.T_set:
                    out[p] = k
        return out

    def reconstruct(self, n: int) -> np.ndarray:
        """``sum over rays of v_weight * mu`` as a per-point array."""
        out = np.zeros(n)
        for r in self.rays:
            for p, w in r.mu.items():
                out[p] += r.v_weight * w
        return out

    def to_dict(self, ids=None):
        name = (lambda i: ids[i]) if ids is not None else int
        return {
            "rays": [{"points": [name(p) for p in r.points], "phi": [float(x) for x in r.params],
                      "v_weight": r.v_weight} for r in self.rays],
            "D": sorted(name(p) for p in self.D_set),
            "T": sorted(name(p) for p in self.T_set),
            "B_plus": sorted(name(p) for p in self.B_plus),
            "B_minus": sorted(name(p) for p in self.B_minus),
            "eps_tight": self.eps_tight,
        }


def decompose(space: FiniteAsymSpace, phi, eps_tight=None, graph: nx.DiGraph | None = None) -> RayDecomposition:
    """Maximal paths of the tight skeleton and the D / T / B+ / B- partition.

    The number of maximal paths through each point is counted on the
    acyclic skeleton (``phi`` strictly increases along edges).  Points on no
    edge form D, points on exactly one maximal path form T; a point on
    several maximal paths must start all of them (B+) or end all of them
    (B-), otherwise :class:`AmbiguousInterior` is raised.
    """
    eps = default_eps_tight(space) if eps_tight is None else eps_tight
    phi = np.asarray(phi, dtype=float)
    g = tight_graph(space, phi, eps) if graph is None else graph
    if not nx.is_directed_acyclic_graph(g):
        raise AmbiguousInterior(next(iter(nx.find_cycle(g)))[:1])
    order = list(nx.topological_sort(g))
    into = {v: 0 for v in g}
    out_of = {v: 0 for v in g}
    for v in order:
        preds = list(g.predecessors(v))
        into[v] = sum(into[u] for u in preds) if preds else 1
    for v in reversed(order):
        succ = list(g.successors(v))
        out_of[v] = sum(out_of[w] for w in succ) if succ else 1
    D, T, Bp, Bm, bad = set(), set(), set(), set(), []
    for v in g:
        indeg, outdeg = g.in_degree(v), g.out_degree(v)
        if indeg == 0 and outdeg == 0:
            D.add(v)
            continue
        through = into[v] * out_of[v]
        if through == 1:
            T.add(v)
        elif indeg == 0:
            Bp.add(v)
        elif outdeg == 0:
            Bm.add(v)
        else:
            bad.append(v)
    if bad:
        raise AmbiguousInterior(bad)
    rays = []
    m = space.m
    for start in order:
        if g.in_degree(start) != 0 or g.out_degree(start) == 0:
            continue
        for path in _maximal_paths(g, start):
            tpts = [p for p in path if p in T]
            v = float(sum(m[p] for p in tpts))
            mu = {p: float(m[p] / v) for p in tpts} if v > 0 else {}
            base = phi[path[0]]
            rays.append(Ray(list(path), [float(phi[p] - base) for p in path], v, mu))
    return RayDecomposition(rays, D, T, Bp, Bm, eps, phi)


def _maximal_paths(g, start):
    stack = [(start, [start])]
    while stack:
        v, path = stack.pop()
        succ = sorted(g.successors(v))
        if not succ:
            yield path
        for w in reversed(succ):
            stack.append((w, path + [w]))


# -- structural checks ---------------------------------------------------------------

def _cost(space, power):
    return space.d if power == 1 else space.d ** power


def check_cyclical_monotonicity(space: FiniteAsymSpace, edges, power: int = 1, max_subset: int = 4,
                                tol: float | None = None, brute_limit: int = 200_000) -> bool:
    """``sum c(x_i, y_i) <= sum c(x_i, y_{i+1})`` for every cycle of at most ``max_subset`` edges.

    Small edge sets are enumerated directly.  Larger ones use the equivalent
    test for negative closed walks with at most ``max_subset`` edge steps in
    the graph ``x -> y`` (weight ``c(x, y)``), ``y -> x'`` (weight
    ``-c(x', y)`` for ``(x', y)`` in the set), evaluated by min-plus powers.

    The default ``tol`` absorbs pairs admitted as tight up to the default
    tightness threshold.
    """
    edges = [(int(a), int(b)) for a, b in edges]
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if not 1 <= max_subset <= 5:
        raise ValueError("max_subset must lie in 1..5")
    c = _cost(space, power)
    if tol is None:
        tol = 2 * max_subset * power * TIGHT_RTOL * float(space.d.max()) ** power
    if len(edges) < 2:
        return True
    count = sum(math.comb(len(edges), k) * math.factorial(k - 1) for k in range(2, max_subset + 1))
    if count <= brute_limit:
        return _cyclical_brute(c, edges, max_subset, tol)
    return _cyclical_minplus(c, edges, max_subset, tol)


def _cyclical_brute(c, edges, max_subset, tol):
    for k in range(2, max_subset + 1):
        for combo in itertools.combinations(edges, k):
            first, rest = combo[0], combo[1:]
            base = sum(c[x, y] for x, y in combo)
            for perm in itertools.permutations(rest):
                cyc = (first,) + perm
                shifted = sum(c[cyc[i][0], cyc[(i + 1) % k][1]] for i in range(k))
                if base > shifted + tol:
                    return False
    return True


def _minplus(a, b, chunk=64):
    n = a.shape[0]
    out = np.empty((n, b.shape[1]))
    for s in range(0, n, chunk):
        out[s:s + chunk] = np.min(a[s:s + chunk, :, None] + b[None, :, :], axis=1)
    return out


def _cyclical_minplus(c, edges, max_subset, tol):
    n = c.shape[0]
    back = np.full((n, n), np.inf)  # y-role -> x-role
    for x, y in edges:
        back[y, x] = -c[x, y]
    step = _minplus(c, back)  # x -> x' through one y
    walk = step.copy()
    for k in range(1, max_subset + 1):
        if k > 1:
            walk = _minplus(walk, step)
        if np.min(np.diag(walk)) < -tol:
            return False
    return True


def gamma_edges(space: FiniteAsymSpace, phi, eps_tight=None):
    rows, cols = np.nonzero(tight_pairs(space, phi, eps_tight))
    return list(zip(rows.tolist(), cols.tolist()))


def saturate(space: FiniteAsymSpace, phi, A, eps_tight=None) -> set:
    """Closure of ``A`` under tight pairs in both directions."""
    tight = tight_pairs(space, phi, eps_tight)
    sym = tight | tight.T
    seen = set(int(a) for a in A)
    frontier = list(seen)
    while frontier:
        nxt = set(np.nonzero(sym[frontier].any(axis=0))[0].tolist()) - seen
        seen |= nxt
        frontier = list(nxt)
    return seen


def check_saturated_mean_zero(space: FiniteAsymSpace, phi, f, A, eps_tight=None) -> float:
    A = set(int(a) for a in A)
    if saturate(space, phi, A, eps_tight) != A:
        raise NotSaturated("set is not closed under tight pairs")
    idx = np.array(sorted(A), dtype=int)
    return float(abs(np.sum(np.asarray(f)[idx] * space.m[idx])))


@dataclass
class MeanZeroReport:
    max_ray_residual: float
    D_residual: float
    ray_residuals: list
    B_mass: float


def check_per_ray_mean_zero(space: FiniteAsymSpace, phi, f, dec: RayDecomposition, flow=None) -> MeanZeroReport:
    """Per-ray integrals of ``f`` against ``v_weight * mu`` and the size of ``|f| m`` on D.

    Branching points carry positive mass in a finite space.  When the
    transport ``flow`` is supplied, the signed mass ``f m`` of each B point is
    split among rays in proportion to the flow it exchanges with each ray;
    without it B points are simply left out.
    """
    f = np.asarray(f, dtype=float)
    fm = f * space.m
    res = []
    B = dec.B_set
    F = None if flow is None else sparse.csr_matrix(flow)
    for r in dec.rays:
        total = sum(fm[p] for p in r.mu)
        if F is not None:
            members = set(r.points)
            for b in r.points:
                if b not in B:
                    continue
                if b in dec.B_plus:
                    out_arcs = F.getrow(b)
                    sent = sum(v for j, v in zip(out_arcs.indices, out_arcs.data) if j in members and j not in B)
                    total -= sent
                else:
                    in_arcs = F.getcol(b).tocsc()
                    got = sum(v for i, v in zip(in_arcs.indices, in_arcs.data) if i in members and i not in B)
                    total += got
        res.append(abs(total))
    D_res = max((abs(fm[p]) for p in dec.D_set), default=0.0)
    return MeanZeroReport(max(res, default=0.0), float(D_res), res, float(sum(space.m[p] for p in B)))


# -- perturbation of the potential near a set ---------------------------------------

def _slack(space, phi):
    """``slack[y, x] = phi(y) + d(y, x) - phi(x)`` (nonnegative for 1-Lipschitz ``phi``)."""
    phi = np.asarray(phi, dtype=float)
    return phi[:, None] + space.d - phi[None, :]


def phi_delta(space: FiniteAsymSpace, phi, Z, delta: float) -> np.ndarray:
    """``min_y phi(y) + d(y, x) - delta [y in Z]``, kept inside ``[phi - delta, phi]``.

    Rounding can push the raw minimum a few ulps outside the band; such
    values are clamped after checking the excursion is at rounding level.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    phi = np.asarray(phi, dtype=float)
    Z = np.array(sorted(set(int(z) for z in Z)), dtype=int)
    if Z.size == 0:
        raise ValueError("Z must be nonempty")
    vals = phi[:, None] + space.d
    vals[Z] -= delta
    raw = vals.min(axis=0)
    scale = max(1.0, float(np.abs(phi).max()), float(space.d.max()))
    excursion = max(float(np.max(raw - phi)), float(np.max(phi - delta - raw)), 0.0)
    if excursion > 1e-12 * scale:
        raise NumericalDualityGap(f"phi is not 1-Lipschitz (excursion {excursion:.3g})")
    out = np.clip(raw, phi - delta, phi)
    # exact check of the band in rational arithmetic
    dl = Fraction(delta)
    for x in range(out.size):
        p = Fraction(phi[x])
        if Fraction(out[x]) > p:
            out[x] = phi[x]
        while p - Fraction(out[x]) > dl:
            out[x] = np.nextafter(out[x], math.inf)
    return out


def minimal_positive_slack(space: FiniteAsymSpace, phi, Z, eps_tight=None) -> float:
    eps = default_eps_tight(space) if eps_tight is None else eps_tight
    Z = np.array(sorted(set(int(z) for z in Z)), dtype=int)
    s = _slack(space, phi)[Z]
    pos = s[s > eps]
    return float(pos.min()) if pos.size else math.inf


def limit_indicator(space: FiniteAsymSpace, phi, Z, eps_tight=None) -> np.ndarray:
    """``(phi - phi_delta) / delta`` for ``delta`` below every positive slack from ``Z``.

    Slacks within ``eps_tight`` are treated as zero, so the result is exactly
    1 on ``Z`` and on points reached from ``Z`` by a tight pair, and exactly 0
    elsewhere.
    """
    eps = default_eps_tight(space) if eps_tight is None else eps_tight
    Z = np.array(sorted(set(int(z) for z in Z)), dtype=int)
    if Z.size == 0:
        raise ValueError("Z must be nonempty")
    s = _slack(space, phi)[Z]
    s = np.where(s <= eps, 0.0, s)
    delta = 0.5 * minimal_positive_slack(space, phi, Z, eps)
    if not math.isfinite(delta):
        delta = 1.0
    gain = np.maximum(delta - s.min(axis=0), 0.0)
    out = gain / delta
    out[Z] = 1.0
    return np.where(out > 0.5, 1.0, 0.0)
