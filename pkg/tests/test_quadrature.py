import math

import numpy as np
import pytest

from tpst.quadrature import MAX_ORDER, tet_rule

from oracles import monomials


def monomial_mean(a, b, c):
    """Mean of x^a y^b z^c over the unit tet: 6 a! b! c! / (a+b+c+3)!."""
    f = math.factorial
    return 6 * f(a) * f(b) * f(c) / f(a + b + c + 3)


@pytest.mark.parametrize("order", [0, 1, 2, 4, 7, 12])
def test_exact_for_polynomials_up_to_order(order):
    bary, w = tet_rule(order)
    pts = bary[:, 1:]  # cartesian coordinates on the unit tet
    for a, b, c in monomials(order):
        got = w @ (pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c)
        assert got == pytest.approx(monomial_mean(a, b, c), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("order", [0, 3, 8])
def test_points_inside_and_weights_positive(order):
    bary, w = tet_rule(order)
    assert np.all(bary >= 0) and np.allclose(bary.sum(1), 1, atol=1e-14)
    assert np.all(w > 0) and w.sum() == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("order", [-1, MAX_ORDER + 1, 2.5])
def test_unsupported_order(order):
    with pytest.raises(ValueError):
        tet_rule(order)
