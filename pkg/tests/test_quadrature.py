import math

import numpy as np
import pytest

from finsler_needles.quadrature import adaptive_simpson, bump_rule, cell_integrals, gauss_legendre


def test_simpson_sine_squared():
    assert adaptive_simpson(lambda t: math.sin(t) ** 2, 0, math.pi) == pytest.approx(math.pi / 2, abs=1e-12)


def test_simpson_reversed_limits():
    assert adaptive_simpson(math.exp, 1, 0) == pytest.approx(-(math.e - 1), rel=1e-12)


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(5)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, x ** 9) == pytest.approx(0.1, rel=1e-13)


def test_cell_integrals_sum():
    edges = np.linspace(0, 2, 11)
    assert cell_integrals(lambda t: t ** 2, edges).sum() == pytest.approx(8 / 3, rel=1e-13)


def test_bump_rule_normalized():
    u, w = bump_rule(64)
    assert w.sum() == pytest.approx(1.0)
    assert np.all((u > 0) & (u < 1))
    # the bump is symmetric about the midpoint
    assert np.dot(w, u) == pytest.approx(0.5, abs=1e-12)
