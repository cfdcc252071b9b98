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

from base_test import BaseTest
from neqrenorm import modespace
from neqrenorm.config import OccupationSpec
from neqrenorm.modespace import (A_DAG_MINUS, A_DAG_PLUS, A_MINUS, A_PLUS,
                                 InteractionKernel)


class TestModeGrid(BaseTest):

    def test_centered_grid(self):
        grid = modespace.build_grid(1, 2, 1.0, -1.0)
        self.assertEqual(grid.size, 2)
        self.assertItemsAlmostEqual(grid.modes.ravel(), [-0.5, 0.5])
        self.assertAlmostEqual(grid.weight, 1.0)
        self.assertItemsAlmostEqual(grid.energy, [1.125, 1.125])

    def test_weight_scales_with_dimension(self):
        grid = modespace.build_grid(2, 3, 0.5, -1.0)
        self.assertEqual(grid.size, 9)
        self.assertEqual(grid.d, 2)
        self.assertAlmostEqual(grid.weight, 0.25)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 4))
    def test_size_and_positive_energy(self, d, extent):
        grid = modespace.build_grid(d, extent, 0.7, -0.5)
        self.assertEqual(grid.size, extent ** d)
        self.assertTrue(np.all(grid.energy > 0))

    def test_rejects_bad_arguments(self):
        with self.assertRaises(ValueError):
            modespace.build_grid(1, 2, 1.0, 0.0)
        with self.assertRaises(ValueError):
            modespace.build_grid(1, 0, 1.0, -1.0)
        with self.assertRaises(ValueError):
            modespace.build_grid(1, 2, -1.0, -1.0)
        with self.assertRaises(ValueError):
            modespace.ModeGrid([[0.0], [0.0]], 1.0, -1.0)

    def test_conservation_is_exact_on_the_lattice(self):
        grid = modespace.build_grid(1, 3, 0.1, -1.0)
        delta = grid.conservation((1, -1))
        self.assertTrue(np.array_equal(delta, np.eye(3, dtype=bool)))
        # -0.1 + 0.1 == 0 + 0
        quartic = grid.conservation((1, 1, -1, -1))
        self.assertTrue(quartic[0, 2, 1, 1])
        self.assertFalse(quartic[0, 0, 1, 1])


class TestOccupation(BaseTest):

    def setUp(self):
        self.grid = modespace.build_grid(1, 3, 1.0, -1.0)

    def test_vacuum(self):
        occ = modespace.occupation(self.grid, 'vacuum')
        self.assertTrue(occ.is_vacuum)
        self.assertEqual(occ.gaussian_terms(), [])

    def test_planck(self):
        occ = modespace.occupation(self.grid, {'kind': 'planck', 'beta': 2.0})
        x = np.exp(-2.0 * self.grid.energy)
        self.assertItemsAlmostEqual(occ.values, x / (1 - x), places=12)

    def test_gaussian_from_spec(self):
        spec = OccupationSpec(kind='gaussian', n0=0.4, b=0.5)
        occ = modespace.occupation(self.grid, spec)
        self.assertItemsAlmostEqual(occ.values,
                                    0.4 * np.exp(-0.5 * np.array([1, 0, 1])))
        self.assertEqual(occ.gaussian_terms(), [(0.4, 0.5)])

    def test_errors(self):
        with self.assertRaises(NotImplementedError):
            modespace.occupation(self.grid, 'fermi')
        with self.assertRaises(ValueError):
            modespace.occupation(self.grid, {'kind': 'planck', 'beta': -1.0})
        planck = modespace.occupation(self.grid, 'planck')
        with self.assertRaises(NotImplementedError):
            planck.gaussian_terms()


class TestPairing(BaseTest):

    def test_two_point_values(self):
        n = 0.3
        self.assertAlmostEqual(modespace.pairing(A_MINUS, A_DAG_MINUS, n), 1.3)
        self.assertAlmostEqual(modespace.pairing(A_DAG_MINUS, A_MINUS, n), 0.3)
        self.assertAlmostEqual(modespace.pairing(A_PLUS, A_DAG_PLUS, n), 1.3)
        self.assertAlmostEqual(modespace.pairing(A_DAG_PLUS, A_PLUS, n), 0.3)
        self.assertAlmostEqual(modespace.pairing(A_MINUS, A_MINUS, n), 0.0)

    def test_vacuum_pairings_are_zero_or_one(self):
        for x in range(4):
            for y in range(4):
                self.assertIn(float(modespace.pairing(x, y, 0.0)), (0.0, 1.0))

    def test_propagator_entries(self):
        grid = modespace.build_grid(1, 2, 1.0, -1.0)
        occ = modespace.occupation(grid, {'kind': 'gaussian', 'n0': 0.2,
                                          'b': 1.0})
        table = modespace.PropagatorTable(occ)
        self.assertEqual(len(table.entries), 8)
        n = occ.values
        for value in table.entries.values():
            value = np.asarray(value)
            ok = (np.allclose(value, 0) or np.allclose(value, n) or
                  np.allclose(value, 1 + n))
            self.assertTrue(ok)

    def test_propagator_rejects_bad_signs(self):
        with self.assertRaises(ValueError):
            modespace.propagator(0, 1, 1, 0.0)


class TestKernel(BaseTest):

    def test_width_must_be_positive(self):
        with self.assertRaises(ValueError):
            InteractionKernel(0.5, 0.0)

    def test_conj(self):
        kernel = InteractionKernel(0.5 + 0.25j, 0.3)
        self.assertFalse(kernel.is_real)
        self.assertAlmostEqual(kernel.conj().c, 0.5 - 0.25j)

    def test_grid_kernel(self):
        grid = modespace.build_grid(1, 3, 1.0, -1.0)
        kernel = InteractionKernel(0.5, 0.3)
        T = kernel.grid_kernel(grid)
        self.assertEqual(T.shape, (3, 3, 3, 3))
        self.assertAllClose(T, np.transpose(T, (1, 0, 2, 3)))
        self.assertAllClose(T, np.transpose(T, (0, 1, 3, 2)))
        delta = grid.conservation((1, 1, -1, -1))
        self.assertTrue(np.all(T[~delta] == 0))
        self.assertAlmostEqual(T[1, 1, 1, 1], 0.5)


if __name__ == '__main__':
    unittest.main()
