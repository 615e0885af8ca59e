from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from finsler_needles.errors import AmbiguousInterior, InvalidSpace, NotMeanZero, NotSaturated
from finsler_needles.localization import (
    FiniteAsymSpace,
    check_cyclical_monotonicity,
    check_per_ray_mean_zero,
    check_saturated_mean_zero,
    decompose,
    gamma_edges,
    limit_indicator,
    line_space,
    metric_closure,
    minimal_positive_slack,
    norm_space,
    phi_delta,
    saturate,
    solve_potential,
    tight_graph,
)
from finsler_needles.norms import Randers


def grid_instance():
    x = np.linspace(-1, 1, 201)
    space = line_space(x)
    f = np.sign(np.abs(x) - 0.5)
    return x, space, f - f.mean()


@pytest.fixture(scope="module")
def grid():
    x, space, f = grid_instance()
    sol = solve_potential(space, f)
    return x, space, f, sol, decompose(space, sol.phi)


def random_space(seed, n=50):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.5, 2.0, (n, n))
    np.fill_diagonal(d, 0.0)
    m = rng.uniform(0.5, 1.5, n)
    f = rng.normal(size=n)
    f -= np.dot(f, m) / m.sum()
    return FiniteAsymSpace.repaired(d, m), f


def linprog_value(space, f):
    """Primal transshipment value as an independent oracle."""
    n = space.n
    A = np.zeros((n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] -= 1.0
        A[i, i::n] += 1.0
    res = linprog(space.d.ravel(), A_eq=A, b_eq=np.asarray(f) * space.m, bounds=(0, None), method="highs")
    return res.fun


class TestSpace:
    def test_rejects_triangle_failure(self):
        d = np.array([[0, 1, 5], [1, 0, 1], [1, 1, 0]], dtype=float)
        with pytest.raises(InvalidSpace):
            FiniteAsymSpace(d, np.ones(3))
        fixed = FiniteAsymSpace.repaired(d, np.ones(3))
        assert fixed.d[0, 2] == 2.0

    def test_rejects_zero_distance(self):
        with pytest.raises(InvalidSpace):
            FiniteAsymSpace(np.zeros((2, 2)), np.ones(2))

    def test_closure_is_idempotent(self):
        space, _ = random_space(3)
        assert np.array_equal(metric_closure(space.d), space.d)


class TestSolve:
    def test_two_points(self):
        space = FiniteAsymSpace(np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones(2))
        sol = solve_potential(space, [-1.0, 1.0])
        assert sol.objective == pytest.approx(1.0)
        assert sol.phi == pytest.approx([0.0, 1.0])

    def test_zero_f(self):
        space, _ = random_space(0, 10)
        sol = solve_potential(space, np.zeros(10))
        assert sol.objective == 0.0 and np.all(sol.phi == sol.phi[0])

    def test_rejects_unbalanced(self):
        space, f = random_space(1, 10)
        with pytest.raises(NotMeanZero):
            solve_potential(space, f + 1.0)

    def test_grid_recovers_abs(self, grid):
        x, space, f, sol, _ = grid
        assert sol.phi - sol.phi[0] == pytest.approx(np.abs(x) - 1.0, abs=1e-9)
        assert sol.gap <= 1e-9 * sol.objective

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_linprog(self, seed):
        space, f = random_space(seed, 25)
        sol = solve_potential(space, f)
        assert sol.objective == pytest.approx(linprog_value(space, f), rel=1e-8)
        assert sol.lipschitz_violation(space) <= 1e-9
        assert np.dot(f * space.m, sol.phi) == pytest.approx(sol.objective, rel=1e-9)

    def test_complementary_slackness(self):
        space, f = random_space(11, 30)
        sol = solve_potential(space, f)
        rows, cols = sol.flow.nonzero()
        slack = space.d[rows, cols] - (sol.phi[cols] - sol.phi[rows])
        assert np.max(np.abs(slack)) <= 1e-9


class TestTight:
    def test_grid_chains(self, grid):
        _, space, _, sol, _ = grid
        g = tight_graph(space, sol.phi)
        assert g.out_degree(100) == 2
        assert all(g.in_degree(v) <= 1 and g.out_degree(v) <= 1 for v in g if v != 100)

    def test_constant_phi_empty(self):
        space, _ = random_space(2, 15)
        assert tight_graph(space, np.zeros(15)).number_of_edges() == 0

    def test_distance_potential_reaches_everything(self):
        space, _ = random_space(4, 30)
        phi = space.d[0].copy()
        g = tight_graph(space, phi)
        import networkx as nx

        assert nx.descendants(g, 0) | {0} == set(range(30))


class TestDecompose:
    def test_grid(self, grid):
        _, space, _, _, dec = grid
        assert len(dec.rays) == 2
        assert dec.B_plus == {100} and not dec.B_minus and not dec.D_set
        assert len(dec.T_set) == 200
        for r in dec.rays:
            assert r.v_weight == pytest.approx(100 / 201, abs=1e-15)

    def test_reconstruction(self, grid):
        _, space, _, _, dec = grid
        T = sorted(dec.T_set)
        assert np.max(np.abs(dec.reconstruct(space.n)[T] - space.m[T])) <= 1e-12

    def test_ray_parametrization(self, grid):
        _, space, _, sol, dec = grid
        for r in dec.rays:
            pts = r.points
            cum = np.concatenate([[0.0], np.cumsum([space.d[a, b] for a, b in zip(pts, pts[1:])])])
            assert np.array(r.params) == pytest.approx(cum, abs=dec.eps_tight * len(pts))

    def test_constant_phi_all_D(self):
        space, _ = random_space(5, 12)
        dec = decompose(space, np.zeros(12))
        assert dec.D_set == set(range(12)) and not dec.rays

    def test_circle_reconstruction(self):
        n, D, Lam = 200, 1.0, 2.0
        steps = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
        d = np.minimum(steps * D / n, (n - steps) * Lam * D / n)
        space = FiniteAsymSpace(d, np.full(n, 1.0 / n))
        f = np.where(np.arange(n) < n // 2, -1.0, 1.0)
        sol = solve_potential(space, f)
        dec = decompose(space, sol.phi)
        T = sorted(dec.T_set)
        assert np.array_equal(dec.reconstruct(n)[T], space.m[T]) or \
            np.max(np.abs(dec.reconstruct(n)[T] - space.m[T])) <= 1e-12
        parts = dec.D_set | dec.T_set | dec.B_set
        assert parts == set(range(n))

    def test_ambiguous_interior(self):
        # a point interior to two maximal paths
        space = norm_space(np.array([[0, 0], [0, 2], [1, 1], [2, 0], [2, 2]], float), lambda v: np.abs(v).sum(-1))
        phi = np.array([0.0, 0.0, 2.0, 4.0, 4.0])
        with pytest.raises(AmbiguousInterior):
            decompose(space, phi)


class TestCyclical:
    def test_crossed_pair_fails(self):
        space = line_space(np.array([0.0, 0.5, 1.0, 2.0]))
        assert not check_cyclical_monotonicity(space, [(0, 3), (2, 1)], power=2)

    def test_grid_gamma(self, grid):
        _, space, _, sol, dec = grid
        sub = line_space(np.linspace(-1, 1, 201)[::10])
        phi = np.abs(np.linspace(-1, 1, 201)[::10])
        assert check_cyclical_monotonicity(sub, gamma_edges(sub, phi), power=1, max_subset=4)

    def test_minplus_agrees_with_brute(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            space, _ = random_space(int(rng.integers(1 << 30)), 8)
            edges = [tuple(rng.choice(8, 2, replace=False)) for _ in range(6)]
            a = check_cyclical_monotonicity(space, edges, max_subset=3, tol=1e-12)
            b = check_cyclical_monotonicity(space, edges, max_subset=3, tol=1e-12, brute_limit=0)
            assert a == b

    def test_xi_set_quadratic(self):
        # sources below targets in phi = x, matched in order along one ray
        space = line_space(np.linspace(0, 1, 21))
        assert check_cyclical_monotonicity(space, [(i, i + 10) for i in range(5)], power=2, max_subset=5)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_gamma(self, seed):
        rng = np.random.default_rng(seed)
        norm = Randers(np.eye(2), np.array([0.3, 0.1]))
        space = norm_space(rng.uniform(-1, 1, (40, 2)), norm)
        f = rng.normal(size=40)
        f -= f.mean()
        sol = solve_potential(space, f)
        assert check_cyclical_monotonicity(space, gamma_edges(space, sol.phi))


class TestMeanZero:
    def test_grid_per_ray(self, grid):
        _, space, f, sol, dec = grid
        rep = check_per_ray_mean_zero(space, sol.phi, f, dec, flow=sol.flow)
        assert rep.max_ray_residual <= 1e-8 and rep.D_residual == 0.0

    def test_zero_f(self, grid):
        _, space, _, sol, dec = grid
        rep = check_per_ray_mean_zero(space, sol.phi, np.zeros(space.n), dec)
        assert rep.max_ray_residual == 0.0 and rep.D_residual == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_random_spaces(self, seed):
        space, f = random_space(seed)
        sol = solve_potential(space, f)
        dec = decompose(space, sol.phi)
        rep = check_per_ray_mean_zero(space, sol.phi, f, dec, flow=sol.flow)
        assert rep.max_ray_residual <= 1e-7 and rep.D_residual <= 1e-7

    def test_saturate_from_branch_point(self, grid):
        _, space, f, sol, _ = grid
        A = saturate(space, sol.phi, {100})
        assert A == set(range(201))
        assert check_saturated_mean_zero(space, sol.phi, f, A) <= 1e-8 * np.sum(np.abs(f) * space.m)

    def test_saturate_D_point(self):
        space, _ = random_space(6, 10)
        assert saturate(space, np.zeros(10), {3}) == {3}

    def test_not_saturated(self, grid):
        _, space, f, sol, _ = grid
        with pytest.raises(NotSaturated):
            check_saturated_mean_zero(space, sol.phi, f, {100})


class TestPhiDelta:
    def test_all_points(self, grid):
        _, space, _, sol, _ = grid
        assert phi_delta(space, sol.phi, range(space.n), 0.25) == pytest.approx(sol.phi - 0.25, abs=1e-15)

    def test_on_Z(self, grid):
        _, space, _, sol, _ = grid
        out = phi_delta(space, sol.phi, {5, 50}, 0.3)
        assert out[[5, 50]] == pytest.approx(sol.phi[[5, 50]] - 0.3, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 49), st.floats(1e-6, 2.0))
    def test_sandwich_exact(self, z, delta):
        space, f = random_space(7)
        phi = solve_potential(space, f).phi
        out = phi_delta(space, phi, {z}, delta)
        gaps = [Fraction(p) - Fraction(o) for p, o in zip(phi, out)]
        assert all(0 <= g <= Fraction(delta) for g in gaps)

    def test_small_delta_off_saturation(self):
        space, f = random_space(8)
        phi = solve_potential(space, f).phi
        Z = {0, 1}
        delta = 0.5 * minimal_positive_slack(space, phi, Z)
        S = saturate(space, phi, Z)
        off = [x for x in range(space.n) if x not in S]
        assert np.array_equal(phi_delta(space, phi, Z, delta)[off], phi[off])


class TestLimitIndicator:
    def test_branch_point(self, grid):
        _, space, _, sol, _ = grid
        ind = limit_indicator(space, sol.phi, {100})
        assert ind[100] == 1.0 and set(np.unique(ind)) <= {0.0, 1.0}

    def test_D_point(self):
        space, _ = random_space(10, 10)
        ind = limit_indicator(space, np.zeros(10), {4})
        assert np.array_equal(ind, np.eye(10)[4])

    @pytest.mark.parametrize("seed", range(5))
    def test_supported_in_saturation(self, seed):
        space, f = random_space(seed)
        phi = solve_potential(space, f).phi
        Z = {seed, seed + 10}
        ind = limit_indicator(space, phi, Z)
        S = saturate(space, phi, Z)
        assert all(ind[z] == 1.0 for z in Z)
        assert all(ind[x] == 0.0 for x in range(space.n) if x not in S)
