import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler_needles.errors import NotANorm, ParseError
from finsler_needles.norms import (
    CircleStructure,
    Euclidean,
    Randers,
    SmoothedNorm,
    TableBased,
    asym_distance,
    circle_boundary_rate,
    convexity_probe,
    evaluate,
    norm_from_dict,
    reversibility_constant,
    sandwich_ratios,
    smooth_norm,
    sphere_directions,
)

RANDERS = Randers(np.eye(2), np.array([0.5, 0.0]))
vec = st.lists(st.floats(-10, 10), min_size=2, max_size=2).map(np.array)


def test_evaluate_examples():
    assert evaluate(Euclidean(np.eye(2)), np.array([3.0, 4.0])) == pytest.approx(5.0)
    assert evaluate(RANDERS, np.array([1.0, 0.0])) == pytest.approx(1.5)
    assert evaluate(RANDERS, np.array([-1.0, 0.0])) == pytest.approx(0.5)
    assert evaluate(RANDERS, np.zeros(2)) == 0.0


def test_randers_admissibility():
    with pytest.raises(NotANorm):
        Randers(np.eye(2), np.array([1.0, 0.0]))


def test_table_rejects_nonconvex_gauge():
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    values = 1.0 + 0.6 * np.cos(5 * t)  # star-shaped, not convex
    with pytest.raises(NotANorm):
        TableBased(values)


class TestReversibility:
    def test_euclidean(self):
        assert reversibility_constant(Euclidean(np.eye(2))) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("b, expected", [(0.5, 3.0), (0.8, 9.0)])
    def test_randers(self, b, expected):
        norm = Randers(np.eye(2), np.array([b, 0.0]))
        assert reversibility_constant(norm) == pytest.approx(expected, rel=1e-9)
        # brute-force oracle over many directions
        dirs = sphere_directions(2, 1_000_000)
        brute = float(np.max(norm(-dirs) / norm(dirs)))
        assert brute == pytest.approx(expected, rel=1e-9)

    def test_oblique_randers_3d(self):
        A = np.diag([1.0, 2.0, 0.5])
        norm = Randers(A, np.array([0.2, 0.3, -0.1]))
        assert reversibility_constant(norm) == pytest.approx(norm.exact_reversibility(), rel=1e-8)

    def test_reversible_iff_symmetric_sweep(self):
        for norm in (Euclidean(np.diag([1.0, 3.0])), TableBased.regular_polygon(6), RANDERS):
            dirs = sphere_directions(2, 4096)
            sym = np.max(np.abs(norm(-dirs) - norm(dirs))) <= 1e-9
            assert sym == (reversibility_constant(norm) == pytest.approx(1.0, abs=1e-9))


def test_distance_examples():
    eu = Euclidean(np.eye(2))
    assert asym_distance(eu, np.zeros(2), np.ones(2)) == pytest.approx(math.sqrt(2))
    x, y = np.zeros(2), np.array([1.0, 0.0])
    assert asym_distance(RANDERS, x, y) == pytest.approx(1.5)
    assert asym_distance(RANDERS, y, x) == pytest.approx(0.5)
    assert asym_distance(RANDERS, y, y) == 0.0


@settings(max_examples=200)
@given(vec, vec, vec)
def test_ordered_triangle_inequality(x, y, z):
    for norm in (RANDERS, TableBased.regular_polygon(6)):
        assert norm.distance(x, z) <= norm.distance(x, y) + norm.distance(y, z) + 1e-10


@settings(max_examples=200)
@given(vec, st.floats(0.01, 100))
def test_positive_homogeneity(x, c):
    for norm in (RANDERS, TableBased.regular_polygon(5)):
        assert norm(c * x) == pytest.approx(c * norm(x), rel=1e-12, abs=1e-12)


class TestSmoothing:
    def test_euclidean(self):
        sm = smooth_norm(Euclidean(np.eye(2)), 0.1)
        lo, hi = sm.sandwich
        assert lo >= 1 - 1e-12 and hi <= 1.1

    def test_randers(self):
        sm = smooth_norm(RANDERS, 0.05)
        ratios = sandwich_ratios(sm, RANDERS, 10_000)
        assert ratios.min() >= 1 - 1e-12 and ratios.max() <= 1.05

    def test_hexagon_becomes_strongly_convex(self):
        hexagon = TableBased.regular_polygon(6)
        assert convexity_probe(hexagon) < 1e-6
        sm = smooth_norm(hexagon, 0.05)
        assert convexity_probe(sm) > 0

    def test_mollification_monotone_in_delta(self):
        dirs = sphere_directions(2, 512)
        base = RANDERS(dirs)
        small = SmoothedNorm(RANDERS, 0.05).mollified(dirs)
        large = SmoothedNorm(RANDERS, 0.2).mollified(dirs)
        assert np.all(base <= small + 1e-12)
        assert np.all(small <= large + 1e-12)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            smooth_norm(RANDERS, 0.0)


class TestCircle:
    @pytest.mark.parametrize("D, Lam, rate", [(1, 1, 2), (1, 2, 3), (2, 3, 2)])
    def test_boundary_rate(self, D, Lam, rate):
        assert circle_boundary_rate(CircleStructure(D, Lam)) == pytest.approx(rate)

    def test_speeds_and_distance(self):
        cs = CircleStructure(2.0, 4.0)
        assert (cs.forward_speed, cs.backward_speed) == (2.0, 0.5)
        assert cs.distance(0.0, 0.1) == pytest.approx(0.2)
        assert cs.distance(0.1, 0.0) == pytest.approx(0.05)

    def test_rejects_lambda_below_one(self):
        with pytest.raises(ValueError):
            CircleStructure(1.0, 0.5)


def test_norm_from_dict():
    n = norm_from_dict({"form": "randers", "b": [0.3, 0.0]})
    assert n(np.array([1.0, 0.0])) == pytest.approx(1.3)
    assert norm_from_dict({"form": "polygon", "sides": 4})(np.array([1.0, 0.0])) > 0
    with pytest.raises(ParseError):
        norm_from_dict({"form": "banana"})
