import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omcontrol import MonomialBasis, builtin_problem, constraint_coefficient
from omcontrol.basis import constraint_columns
from omcontrol.model import StateActionPoint


class TestEnumeration:
    def test_count_is_full_tensor(self):
        assert MonomialBasis(2, 7).count == 64
        assert MonomialBasis(1, 3).count == 4
        assert MonomialBasis(3, 2).count == 27

    def test_constant_comes_first(self):
        for dim, deg in [(1, 4), (2, 3), (3, 2)]:
            b = MonomialBasis(dim, deg)
            assert tuple(b.exponents[0]) == (0,) * dim

    def test_graded_lex_order_m2_deg1(self):
        b = MonomialBasis(2, 1)
        assert [tuple(e) for e in b.exponents] == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_order_is_graded(self):
        b = MonomialBasis(2, 7)
        degrees = b.exponents.sum(axis=1)
        assert np.all(np.diff(degrees) >= 0)

    def test_index_of(self):
        b = MonomialBasis(2, 3)
        assert b.index_of((0, 0)) == 0
        assert tuple(b.exponents[b.index_of((1, 0))]) == (1, 0)
        with pytest.raises(KeyError):
            b.index_of((4, 0))


class TestEvaluate:
    def test_zero_state_kills_nonconstant(self):
        b = MonomialBasis(2, 3)
        vals = b.evaluate(np.zeros(2))
        expected = np.zeros(b.count)
        expected[0] = 1.0
        np.testing.assert_array_equal(vals, expected)

    def test_all_ones_state(self):
        b = MonomialBasis(3, 2)
        np.testing.assert_array_equal(b.evaluate(np.ones(3)), np.ones(b.count))

    def test_reference_values_deg1(self):
        b = MonomialBasis(2, 1)
        vals = b.evaluate(np.array([0.5, 0.25]))
        # exponent order (0,0),(0,1),(1,0),(1,1)
        np.testing.assert_allclose(vals, [1.0, 0.25, 0.5, 0.125])

    def test_batch_matches_single(self):
        b = MonomialBasis(2, 5)
        pts = np.array([[0.3, -0.7], [1.0, 0.0], [-0.2, 0.9]])
        batch = b.evaluate(pts)
        for k in range(3):
            np.testing.assert_array_equal(batch[k], b.evaluate(pts[k]))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_multiplicative_structure(self, y1, y2):
        # phi_(a+c, b+d) = phi_(a,b) * phi_(c,d) whenever the sum stays in the cap
        b = MonomialBasis(2, 4)
        v = b.evaluate(np.array([y1, y2]))
        i = b.index_of((1, 1))
        j = b.index_of((2, 1))
        k = b.index_of((3, 2))
        assert v[k] == pytest.approx(v[i] * v[j], rel=1e-12, abs=1e-12)


class TestConstraintCoefficient:
    def test_constant_row_is_zero(self):
        p = builtin_problem("example1")
        b = MonomialBasis(2, 3)
        for y, u in [((0.5, 0.25), (-1, 1)), ((0.1, -0.9), (0.3, 0.4))]:
            assert constraint_coefficient(b, p, StateActionPoint.of(y, u), 0) == 0.0

    def test_reference_value(self):
        # alpha*(phi(f)-phi(y)) + (1-alpha)*(phi(y0)-phi(y)) with phi = y1:
        # 0.9*(0.75-0.5) + 0.1*(0.5-0.5) = 0.225
        p = builtin_problem("example1")
        b = MonomialBasis(2, 3)
        i = b.index_of((1, 0))
        val = constraint_coefficient(b, p, StateActionPoint.of((0.5, 0.25), (-1.0, 1.0)), i)
        assert val == pytest.approx(0.225, abs=1e-15)

    def test_fixed_point_at_initial_state_vanishes(self):
        # f(y0, -y0) = y0 for the halving dynamics, so every coefficient is 0
        p = builtin_problem("example1")
        b = MonomialBasis(2, 7)
        cols = constraint_columns(b, p, np.array([[0.5, 0.25]]), np.array([[-0.5, -0.25]]))
        np.testing.assert_allclose(cols[:, 0], 0.0, atol=1e-15)

    def test_columns_match_scalar_api(self):
        p = builtin_problem("shift")
        b = MonomialBasis(1, 3)
        cols = constraint_columns(b, p, np.array([[0.4]]), np.array([[0.0]]))
        for i in range(b.count):
            pt = StateActionPoint.of((0.4,), (0.0,))
            assert cols[i, 0] == constraint_coefficient(b, p, pt, i)

    def test_shift_reference_coefficients(self):
        # phi = y at (0.4, 0): 0.5*(0 - 0.4) + 0.5*(0.4 - 0.4) = -0.2
        p = builtin_problem("shift", alpha=0.5, y0=0.4)
        b = MonomialBasis(1, 1)
        i = b.index_of((1,))
        assert constraint_coefficient(b, p, StateActionPoint.of((0.4,), (0.0,)), i) \
            == pytest.approx(-0.2)
        assert constraint_coefficient(b, p, StateActionPoint.of((0.0,), (0.0,)), i) \
            == pytest.approx(0.2)

    def test_determinism_bit_for_bit(self):
        p = builtin_problem("example1")
        b = MonomialBasis(2, 7)
        pts = p.state_region.grid((5, 5))
        us = np.tile(np.array([[0.25, -0.75]]), (len(pts), 1))
        a = constraint_columns(b, p, pts, us)
        c = constraint_columns(b, p, pts, us)
        assert np.array_equal(a, c)
