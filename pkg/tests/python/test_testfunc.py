"""
Copyright 2026 The neqrenorm Developers

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
"""
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from base_test import BaseTest
from neqrenorm import testfunc
from neqrenorm.testfunc import (ExpPoly, TestFunction, TimeShifted,
                                WindowMonomial)


class TestSteps(BaseTest):

    def test_smooth_step(self):
        self.assertItemsAlmostEqual(testfunc.smooth_step([-1.0, 0.0, 0.5,
                                                          1.0, 2.0]),
                                    [0.0, 0.0, 0.5, 1.0, 1.0])

    def test_window(self):
        b = testfunc.window_width(2)
        self.assertAlmostEqual(b, 1.0 / 6.0)
        values = testfunc.window([0.0, 0.4 * b, 0.5 * b, b, 2 * b], b)
        self.assertItemsAlmostEqual(values, [1.0, 1.0, 1.0, 0.0, 0.0])

    def test_bump_unit_integral(self):
        w = testfunc.BUMP_WIDTH
        value, _ = quad(lambda u: float(testfunc.bump(u)), -w, w,
                        epsabs=1e-13)
        self.assertAlmostEqual(value, 1.0, places=9)
        self.assertEqual(float(testfunc.bump(2 * w)), 0.0)

    def test_smear_integrates_to_one(self):
        for x in [0.3, 1.0, 4.0]:
            value, _ = quad(lambda lam: float(testfunc.smear(x, lam)),
                            x / 1.1, x / 0.9, epsabs=1e-13, limit=200)
            self.assertAlmostEqual(value, 1.0, places=8)


class TestPartition(BaseTest):

    def test_counts(self):
        weights = testfunc.partition([[1.0, 2.0, 3.0]])
        self.assertEqual(len(weights), 7)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=4))
    def test_sums_to_one(self, sigma):
        weights = testfunc.partition([sigma])
        total = sum(w[0] for w in weights.values())
        self.assertAlmostEqual(total, 1.0, places=10)

    def test_dominant_variable(self):
        weights = testfunc.partition([[1.0, 1e-6]])
        self.assertAlmostEqual(weights[frozenset([0])][0], 1.0)


class TestProfiles(BaseTest):

    def test_exp_poly_taylor(self):
        p = ExpPoly([1.0], 2.0)
        self.assertItemsAlmostEqual(p.taylor(2), [1.0, -2.0, 2.0])
        self.assertAlmostEqual(p.jet(2), 4.0)
        self.assertAlmostEqual(p(0.5), np.exp(-1.0))

    def test_window_monomial(self):
        p = WindowMonomial(2, 0.2)
        self.assertItemsAlmostEqual(p.taylor(3), [0.0, 0.0, 0.5, 0.0])
        self.assertAlmostEqual(p.jet(2), 1.0)
        self.assertAlmostEqual(p.jet(1), 0.0)
        self.assertAlmostEqual(p(0.05), 0.05 ** 2 / 2)

    def test_time_shifted(self):
        t = 0.7
        p = TimeShifted(ExpPoly([0.0, 1.0], 0.0), t)
        self.assertItemsAlmostEqual(p.taylor(3), [0.0, 1.0, t, t ** 2])
        self.assertAlmostEqual(p(0.5), 0.5 / (1.0 - 0.5 * t))
        self.assertAlmostEqual(p(2.0), 0.0)

    def test_time_shift_zero(self):
        base = ExpPoly([1.0, -0.5], 1.2)
        p = TimeShifted(base, 0.0)
        self.assertItemsAlmostEqual(p.taylor(3), base.taylor(3))
        self.assertAlmostEqual(p(0.3), base(0.3))

    def test_negative_shift(self):
        with self.assertRaises(ValueError):
            TimeShifted(ExpPoly([1.0], 1.0), -0.1)


class TestMultiIndices(BaseTest):

    def test_ball(self):
        self.assertEqual(testfunc.total_degree_ball(2, 1),
                         [(0, 0), (0, 1), (1, 0)])
        self.assertEqual(testfunc.total_degree_ball(2, -1), [])

    def test_groups(self):
        self.assertEqual(testfunc.multi_indices(3, [((0, 2), 1)]),
                         [(0, 0, 0), (0, 0, 1), (1, 0, 0)])
        self.assertEqual(testfunc.multi_indices(2, [((0,), 1), ((1,), -1)]),
                         [])
        self.assertEqual(testfunc.multi_indices(2, []), [(0, 0)])


class TestTestFunction(BaseTest):

    def setUp(self):
        self.psi = TestFunction.product([ExpPoly([1.0, 0.5], 1.0),
                                         ExpPoly([2.0], 0.5)])

    def test_call_and_derivative(self):
        s = np.array([[0.2, 0.4]])
        expected = (1.0 + 0.1) * np.exp(-0.2) * 2.0 * np.exp(-0.2)
        self.assertAlmostEqual(self.psi(s)[0], expected)
        # d/ds1 of (1 + s/2) e^{-s} at 0 is -1/2
        self.assertAlmostEqual(self.psi.derivative((1, 0)), -1.0)

    def test_arity(self):
        with self.assertRaises(ValueError):
            TestFunction(2, [(1.0, (ExpPoly([1.0], 1.0),))])
        with self.assertRaises(ValueError):
            self.psi + TestFunction.product([ExpPoly([1.0], 1.0)])

    def test_linear(self):
        diff = self.psi - self.psi.scaled(0.5)
        s = np.array([[0.3, 0.1]])
        self.assertAlmostEqual(diff(s)[0], 0.5 * self.psi(s)[0])
        self.assertAlmostEqual((-self.psi)(s)[0], -self.psi(s)[0])
        self.assertTrue(TestFunction(2).is_zero)

    def test_projection_keeps_jets(self):
        indices = testfunc.multi_indices(2, [((0, 1), 2)])
        projected = self.psi.project((0, 1), indices, 0.2)
        self.assertItemsAlmostEqual(projected.jet(indices),
                                    self.psi.jet(indices))

    def test_time_shift_identity(self):
        shifted = self.psi.time_shift(0.0, (0, 1))
        s = np.array([[0.3, 0.7]])
        self.assertAlmostEqual(shifted(s)[0], self.psi(s)[0])

    def test_dual_monomial(self):
        e = testfunc.dual_monomial(2, (1, 0), 0.2)
        self.assertAlmostEqual(e.derivative((1, 0)), 1.0)
        self.assertAlmostEqual(e.derivative((0, 0)), 0.0)

    def test_probes_vanish_to_order(self):
        for psi in testfunc.probes(2, 3, seed=4, zero_order=2):
            self.assertAlmostEqual(psi.derivative((0, 0)), 0.0)
            self.assertAlmostEqual(psi.derivative((1, 3)), 0.0)
            self.assertNotAlmostEqual(abs(psi.derivative((2, 2))), 0.0)

    def test_probes_seeded(self):
        a = testfunc.probes(1, 2, seed=7)
        b = testfunc.probes(1, 2, seed=7)
        s = np.array([[0.4]])
        for x, y in zip(a, b):
            self.assertAlmostEqual(x(s)[0], y(s)[0])


if __name__ == '__main__':
    unittest.main()
