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
import json
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from base_test import BaseTest
from neqrenorm import gausscalc
from neqrenorm.errors import NonIntegrableError
from neqrenorm.gausscalc import GaussianIntegrand, GaussianTerm


def single(a, b=0.0, d=1, L=None, prefactor=()):
    term = GaussianTerm(1.0, [[a]], [[[b]]], L=L, prefactor=prefactor)
    return GaussianIntegrand(1, d, [False], np.zeros((0, 1)), [term], 1)


class TestIntegrateMomenta(BaseTest):

    def test_one_variable(self):
        F = gausscalc.integrate_momenta(single(2.0, 0.5))
        for tau in [0.0, 1.0, 3.5]:
            expected = np.sqrt(np.pi / (2.0 + 0.5 * tau))
            self.assertAlmostEqual(F([tau]), expected)

    def test_dimension_power(self):
        F = gausscalc.integrate_momenta(single(1.5, d=2))
        self.assertAlmostEqual(F([0.0]), np.pi / 1.5)
        F = gausscalc.integrate_momenta(single(1.5, d=3))
        self.assertAlmostEqual(F([0.0]), (np.pi / 1.5) ** 1.5)

    def test_batched_delays(self):
        F = gausscalc.integrate_momenta(single(1.0, 1.0))
        tau = np.array([[0.0], [1.0], [2.0]])
        expected = np.sqrt(np.pi / (1.0 + tau[:, 0]))
        self.assertAllClose(F.evaluate(tau), expected)

    def test_linear_term(self):
        k = 0.8
        F = gausscalc.integrate_momenta(single(2.0, L=[[1j * k]]))
        expected = np.sqrt(np.pi / 2.0) * np.exp(-k ** 2 / 8.0)
        self.assertAlmostEqual(F([0.0]), expected)

    def test_prefactor_moment(self):
        a = 1.7
        f = single(a, prefactor=[(0, [1.0]), (0, [1.0])])
        F = gausscalc.integrate_momenta(f)
        self.assertAlmostEqual(F([0.0]), np.sqrt(np.pi / a) / (2 * a))

    def test_odd_prefactor_vanishes(self):
        F = gausscalc.integrate_momenta(single(1.0, prefactor=[(0, [1.0])]))
        self.assertAlmostEqual(F([0.0]), 0.0)

    def test_delta_constraint(self):
        term = GaussianTerm(1.0, np.diag([1.0, 2.0]), np.zeros((1, 2, 2)))
        f = GaussianIntegrand(2, 1, [False, False], [[1.0, -1.0]], [term], 1)
        F = gausscalc.integrate_momenta(f)
        self.assertAlmostEqual(F([0.0]), np.sqrt(np.pi / 3.0))
        self.assertEqual(F.residual_constraints.shape[0], 0)

    def test_not_integrable(self):
        F = gausscalc.integrate_momenta(single(-1.0))
        with self.assertRaises(NonIntegrableError):
            F([0.0])

    def test_negative_delay(self):
        F = gausscalc.integrate_momenta(single(1.0, 1.0))
        with self.assertRaises(ValueError):
            gausscalc.eval_tau(F, [-0.5])

    def test_power_exponent(self):
        F = gausscalc.integrate_momenta(single(0.0, 1.0, d=3))
        self.assertAlmostEqual(F.power_exponent([1.0]), -1.5, places=8)

    def test_json(self):
        F = gausscalc.integrate_momenta(single(1.0, 1.0))
        data = json.loads(F.to_json())
        self.assertEqual(data['integrand']['m'], 1)
        self.assertEqual(data['jacobian'], 1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.2, 5.0), st.floats(0.0, 3.0), st.floats(0.0, 4.0))
    def test_one_variable_property(self, a, b, tau):
        F = gausscalc.integrate_momenta(single(a, b))
        self.assertAlmostEqual(F([tau]), np.sqrt(np.pi / (a + b * tau)))


class TestIntegrandAlgebra(BaseTest):

    def test_scaled_and_sum(self):
        f = single(1.0, 0.5)
        g = f + f.scaled(2.0)
        Fg = gausscalc.integrate_momenta(g)
        Ff = gausscalc.integrate_momenta(f)
        self.assertAlmostEqual(Fg([1.0]), 3.0 * Ff([1.0]))

    def test_sum_mismatch(self):
        with self.assertRaises(ValueError):
            single(1.0) + single(1.0, d=2)

    def test_pointwise(self):
        f = single(2.0, 1.0)
        self.assertAlmostEqual(f.evaluate([[0.5]], [1.0]), np.exp(-0.75))

    def test_with_test_function(self):
        term = GaussianTerm(1.0, [[0.0]], [[[0.0]]])
        f = GaussianIntegrand(1, 1, [True], np.zeros((0, 1)), [term], 1)
        g = gausscalc.with_test_function(f, 2.0)
        self.assertEqual(g.externals.size, 0)
        F = gausscalc.integrate_momenta(g)
        self.assertAlmostEqual(F([0.0]), np.sqrt(np.pi / 2.0))


class TestTranslatePhase(BaseTest):

    def setUp(self):
        term = GaussianTerm(1.0, np.eye(2), np.zeros((1, 2, 2)))
        self.f = GaussianIntegrand(2, 1, [True, True], np.zeros((0, 2)),
                                   [term], 1)

    def test_phase(self):
        a = 1.3
        g = gausscalc.translate_phase(self.f, [0], a)
        p = np.array([[0.5], [0.7]])
        expected = np.exp(-0.74 + 1j * a * 0.5)
        self.assertAlmostEqual(g.evaluate(p, [0.0]), expected)
        F = gausscalc.integrate_momenta(g)
        self.assertAlmostEqual(F([0.0], p), expected)

    def test_improper_subset(self):
        with self.assertRaises(ValueError):
            gausscalc.translate_phase(self.f, [], 1.0)
        with self.assertRaises(ValueError):
            gausscalc.translate_phase(self.f, [0, 1], 1.0)


class TestGridSum(BaseTest):

    def test_matches_closed_form(self):
        f = single(1.0, 0.5)
        value = gausscalc.grid_sum(f, [1.0], spacing=0.1, extent=6.0)
        F = gausscalc.integrate_momenta(f)
        self.assertAlmostEqual(value, F([1.0]), places=8)

    def test_constrained(self):
        term = GaussianTerm(1.0, np.diag([1.0, 2.0]), np.zeros((1, 2, 2)))
        f = GaussianIntegrand(2, 1, [False, False], [[1.0, -1.0]], [term], 1)
        value = gausscalc.grid_sum(f, [0.0], spacing=0.1, extent=5.0)
        self.assertAlmostEqual(value, np.sqrt(np.pi / 3.0), places=8)


class TestPowerExponent(BaseTest):

    def test_exact_power(self):
        scales = np.array([10.0, 20.0, 40.0, 80.0])
        slope, spread = gausscalc.power_exponent(scales ** -1.5, scales)
        self.assertAlmostEqual(slope, -1.5, places=10)
        self.assertAlmostEqual(spread, 0.0, places=8)


if __name__ == '__main__':
    unittest.main()
