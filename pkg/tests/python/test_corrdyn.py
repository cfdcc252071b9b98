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

from base_test import BaseTest
from neqrenorm import corrdyn, fockoracle, modespace, treealg, wick
from neqrenorm.config import RunConfig
from neqrenorm.corrdyn import CorrelationVector, Dynamics
from neqrenorm.modespace import (A_DAG_MINUS, A_DAG_PLUS, A_MINUS,
                                 InteractionKernel)
from neqrenorm.wick import NormalPolynomial


def vacuum_dynamics(extent=2):
    grid = modespace.build_grid(1, extent, 1.0, -1.0)
    occ = modespace.occupation(grid, 'vacuum')
    return Dynamics(grid, occ, InteractionKernel(0.5, 0.3))


class TestCorrelationVector(BaseTest):

    def setUp(self):
        self.dyn = vacuum_dynamics()
        self.grid = self.dyn.grid

    def test_cyclic(self):
        v = CorrelationVector.cyclic(self.grid)
        self.assertEqual(v.arity, 0)
        self.assertTrue(v.flatten().allclose(NormalPolynomial.constant(
            self.grid)))

    def test_sym_keeps_the_flattening(self):
        a = NormalPolynomial.monomial(self.grid, (A_DAG_MINUS,), [1.0, 2.0])
        b = NormalPolynomial.monomial(self.grid, (A_DAG_PLUS,), [0.5, -1.0])
        v = CorrelationVector(self.grid, [(2.0, (a, b))])
        self.assertEqual(len(v.sym().terms), 2)
        self.assertTrue(v.sym().flatten().allclose(v.flatten()))

    def test_scalar_multiple(self):
        v = CorrelationVector.cyclic(self.grid)
        self.assertTrue((3.0 * v).flatten().allclose(
            NormalPolynomial.constant(self.grid, 3.0)))


class TestWickSplit(BaseTest):

    def setUp(self):
        self.dyn = vacuum_dynamics()
        self.cyclic = CorrelationVector.cyclic(self.dyn.grid)

    def test_l0_on_the_cyclic_vector(self):
        out = corrdyn.wick_split(self.dyn, 0, self.cyclic)
        self.assertEqual(out.arity, 1)
        self.assertTrue(out.flatten().allclose(self.dyn.lint))

    def test_too_few_factors(self):
        out = corrdyn.wick_split(self.dyn, 1, self.cyclic)
        self.assertEqual(out.terms, [])

    def test_negative_l(self):
        with self.assertRaises(ValueError):
            corrdyn.wick_split(self.dyn, -1, self.cyclic)


class TestEvolution(BaseTest):

    def setUp(self):
        self.dyn = vacuum_dynamics()

    def test_integrated_interaction_is_additive(self):
        whole = self.dyn.integrated_lint(2.0, 0.0)
        parts = self.dyn.integrated_lint(1.0, 0.0) + \
            self.dyn.integrated_lint(2.0, 1.0)
        self.assertTrue(whole.allclose(parts))
        self.assertTrue(self.dyn.integrated_lint(1.0, 1.0).is_zero())

    def test_first_order_on_the_cyclic_vector(self):
        v = CorrelationVector.cyclic(self.dyn.grid)
        out = corrdyn.evolve_first_order(self.dyn, v, 1.0, 0.0)
        self.assertTrue(out.flatten().allclose(
            self.dyn.integrated_lint(1.0, 0.0)))

    def test_one_vertex_tree_at_full_delay(self):
        tree = treealg.DirectedTree((0,))
        ctree = treealg.CorrelationTree(tree, {1: 0.8})
        out = corrdyn.tree_operator(self.dyn, ctree, 0.8)
        self.assertTrue(out.flatten().allclose(self.dyn.lint))

    def test_tree_operator_needs_inputs_per_shoot(self):
        tree = treealg.DirectedTree((0,), shoots=(1,))
        ctree = treealg.CorrelationTree(tree, {1: 0.1})
        with self.assertRaises(ValueError):
            corrdyn.tree_operator(self.dyn, ctree, 0.5)

    def test_tree_expansion_first_order(self):
        out = corrdyn.tree_expansion(self.dyn, 1, 1.0, 0.0, workers=1)
        self.assertTrue(out.allclose(self.dyn.integrated_lint(1.0, 0.0),
                                     rtol=1e-8, atol=1e-10))

    def test_tree_expansion_arguments(self):
        self.assertTrue(corrdyn.tree_expansion(self.dyn, 0, 1.0, 0.0).allclose(
            NormalPolynomial.constant(self.dyn.grid)))
        with self.assertRaises(ValueError):
            corrdyn.tree_expansion(self.dyn, 1, 1.0, -np.inf)
        with self.assertRaises(ValueError):
            corrdyn.tree_expansion(self.dyn, 1, 0.0, 1.0)
        with self.assertRaises(ValueError):
            corrdyn.tree_expansion(self.dyn, 4, 1.0, 0.0)

    def test_from_config(self):
        dyn = Dynamics.from_config(RunConfig())
        self.assertEqual(dyn.grid.size, 2)
        self.assertTrue(dyn.occ.is_vacuum)


class TestIntertwining(BaseTest):

    def test_first_order_against_the_oracle(self):
        dyn = vacuum_dynamics(extent=1)
        grid = dyn.grid
        rep = fockoracle.represent(grid, 5)
        state = fockoracle.vacuum_state(rep)
        pair = fockoracle.liouvillian(rep, dyn.kernel)
        term = fockoracle.dyson_term(pair, 1, 1.0, 0.0, method='expm')
        a = NormalPolynomial.monomial(grid, (A_DAG_MINUS,), [1.0])
        b = NormalPolynomial.monomial(grid, (A_DAG_MINUS, A_DAG_PLUS),
                                      [[0.5 + 0.5j]])
        c = NormalPolynomial.monomial(grid, (A_MINUS,), [2.0])
        v = CorrelationVector(grid, [(1.0, (a, b)), (0.5j, (c,))])
        moved = corrdyn.evolve_first_order(dyn, v, 1.0, 0.0)
        left = fockoracle.realize(rep, moved.flatten(), state)
        right = term.apply(fockoracle.realize(rep, v.flatten(), state))
        self.assertTrue(np.linalg.norm(right) > 1e-3)
        self.assertAllClose(left, right, rtol=1e-7, atol=1e-9)

    def test_thermal_tree_expansion_against_the_oracle(self):
        grid = modespace.build_grid(1, 3, 1.0, -1.0)
        occ = modespace.occupation(grid, {'kind': 'gaussian', 'n0': 0.05,
                                          'b': 1.0})
        dyn = Dynamics(grid, occ, InteractionKernel(0.5, 0.3))
        rep = fockoracle.represent(grid, 7)
        state = fockoracle.thermal_state(rep, occ)
        pair = fockoracle.liouvillian(rep, dyn.kernel)
        for order in (1, 2):
            poly = corrdyn.tree_expansion(dyn, order, 1.0, 0.0,
                                          tolerance=1e-8, workers=1)
            mine = fockoracle.realize(rep, poly, state)
            oracle = fockoracle.dyson_term(pair, order, 1.0,
                                           0.0).apply(state.array)
            scale = np.linalg.norm(oracle)
            self.assertTrue(scale > 1e-6)
            self.assertTrue(np.linalg.norm(mine - oracle) < 1e-5 * scale)


if __name__ == '__main__':
    unittest.main()
