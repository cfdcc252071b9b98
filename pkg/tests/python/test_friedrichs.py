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

from base_test import BaseTest
from neqrenorm import friedrichs, modespace, wick
from neqrenorm.config import RunConfig
from neqrenorm.corrdyn import Dynamics, tree_operator
from neqrenorm.friedrichs import ContinuumModel
from neqrenorm.modespace import InteractionKernel
from neqrenorm.treealg import CorrelationTree, DirectedTree


def vacuum_pairs():
    grid = modespace.build_grid(1, 1, 1.0, -1.0)
    return wick.PairingTable(modespace.occupation(grid, 'vacuum'))


def vacuum_model(d=1):
    return ContinuumModel(InteractionKernel(0.5, 0.3), [], -1.0, d)


class TestEnumerateDiagrams(BaseTest):

    def setUp(self):
        self.pairs = vacuum_pairs()

    def test_single_vertex(self):
        diagrams = friedrichs.enumerate_diagrams(DirectedTree((0,)),
                                                 self.pairs)
        self.assertEqual(len(diagrams), 2)
        self.assertEqual(sorted(d.branches for d in diagrams),
                         [(-1,), (1,)])
        for d in diagrams:
            self.assertEqual(d.lines, ())
            self.assertEqual(len(d.externals), 4)
            self.assertEqual(d.multiplicity, 1)
            self.assertTrue(d.renormalizable)

    def test_rejects_shoots(self):
        with self.assertRaises(ValueError):
            friedrichs.enumerate_diagrams(DirectedTree((0,), shoots=(1,)),
                                          self.pairs)

    def test_two_vertices_touch_the_internal_line(self):
        diagrams = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                                 self.pairs)
        self.assertTrue(diagrams)
        for d in diagrams:
            self.assertTrue(d.lines)
            for u, _, v, _ in d.lines:
                self.assertEqual((u, v), (1, 2))
            self.assertEqual(len(d.lines) * 2 + len(d.externals), 8)
        keys = [d.key for d in diagrams]
        self.assertEqual(len(keys), len(set(keys)))

    def test_star_closed(self):
        diagrams = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                                 self.pairs)
        by_key = dict((d.key, d.multiplicity) for d in diagrams)
        for d in diagrams:
            starred = d.star()
            self.assertIn(starred.key, by_key)
            self.assertEqual(by_key[starred.key], d.multiplicity)
            self.assertEqual(sorted(starred.external_species),
                             sorted(friedrichs.star_species(
                                 d.external_species)))

    def test_renormalizable_only(self):
        tree = DirectedTree((0, 1))
        everything = friedrichs.enumerate_diagrams(tree, self.pairs)
        kept = friedrichs.enumerate_diagrams(tree, self.pairs,
                                             renormalizable_only=True)
        self.assertLessEqual(len(kept), len(everything))
        for d in kept:
            for r in tree.tau_lines:
                self.assertGreaterEqual(d.crossings(r), 3)

    def test_json(self):
        d = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                          self.pairs)[0]
        data = json.loads(d.to_json())
        self.assertEqual(data['id'], d.diagram_id)
        self.assertEqual(len(data['lines']),
                         len(d.lines) + len(d.externals))

    def test_json_offsets_are_zero(self):
        d = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                          self.pairs)[0]
        data = json.loads(d.to_json())
        slots = [line[2:] for line in d.lines] + list(d.externals)
        self.assertEqual(sorted(data['h']),
                         sorted("%d,%d" % slot for slot in slots))
        self.assertTrue(all(h == 0.0 for h in data['h'].values()))


class TestIntegrand(BaseTest):

    def setUp(self):
        diagrams = friedrichs.enumerate_diagrams(DirectedTree((0,)),
                                                 vacuum_pairs())
        self.minus = [d for d in diagrams if d.branches == (-1,)][0]
        self.model = vacuum_model()

    def test_single_vertex(self):
        f = friedrichs.integrand(self.minus, self.model)
        self.assertEqual(f.m, 4)
        self.assertEqual(f.externals.size, 4)
        self.assertEqual(f.n_tau, 1)
        self.assertItemsAlmostEqual(f.constraints, [[1, 1, -1, -1]])
        self.assertEqual(len(f.terms), 1)
        self.assertAlmostEqual(f.terms[0].coef, -0.5j)

    def test_star_integrand(self):
        f = friedrichs.integrand(self.minus, self.model)
        g = friedrichs.star_integrand(self.minus, self.model)
        self.assertAlmostEqual(g.terms[0].coef, np.conj(f.terms[0].coef))
        self.assertItemsAlmostEqual(g.constraints, -f.constraints)

    def test_fix_delays(self):
        f = friedrichs.integrand(self.minus, self.model)
        fixed = friedrichs.fix_delays(f, {1: 0.7}, {})
        self.assertEqual(fixed.n_tau, 0)
        z = np.array([[0.1], [0.2], [-0.3], [0.4]])
        self.assertAlmostEqual(fixed.evaluate(z, []), f.evaluate(z, [0.7]))

    def test_empty_quotient(self):
        self.assertIs(friedrichs.quotient_diagram(self.minus, [], {}),
                      self.minus)

    def test_external_labels(self):
        labels = friedrichs.external_labels(self.minus)
        self.assertEqual(len(labels), 4)
        self.assertTrue(all(l['branch'] == -1 for l in labels))
        self.assertEqual(sorted(l['creation'] for l in labels),
                         [-1, -1, 1, 1])


class TestContinuumModel(BaseTest):

    def test_positive_mu(self):
        with self.assertRaises(ValueError):
            ContinuumModel(InteractionKernel(0.5, 0.3), [], 0.0, 1)

    def test_from_config(self):
        config = RunConfig.from_dict({'occupation': {'kind': 'gaussian',
                                                     'n0': 0.2, 'b': 1.5}})
        model = ContinuumModel.from_config(config, d=3)
        self.assertEqual(model.occupation_terms, [(0.2, 1.5)])
        self.assertEqual(model.d, 3)
        self.assertEqual(model.mu, -1.0)

    def test_planck_has_no_gaussian_form(self):
        config = RunConfig.from_dict({'occupation': {'kind': 'planck'}})
        with self.assertRaises(NotImplementedError):
            ContinuumModel.from_config(config)


class TestQuotient(BaseTest):

    def setUp(self):
        self.model = vacuum_model()
        self.rng = np.random.RandomState(3)

    def _momenta(self, f):
        return self.rng.normal(size=(f.m, 1))

    def test_contracted_line_offsets(self):
        d = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                          vacuum_pairs())[0]
        q = friedrichs.quotient_diagram(d, [2], {2: 0.7})
        self.assertEqual(q.tree, DirectedTree((0,)))
        offsets = q.offsets()
        for line in d.lines:
            self.assertAlmostEqual(offsets[line[2:]], 0.7)
        for v, j in d.externals:
            self.assertAlmostEqual(offsets[(v, j)], 0.7 if v == 2 else 0.0)
        data = json.loads(q.to_json())
        self.assertEqual(data['contracted'], [2])
        self.assertEqual(data['base'], d.diagram_id)
        self.assertAlmostEqual(data['h']['%d,%d' % d.lines[0][2:]], 0.7)

    def test_contracted_integrand(self):
        d = friedrichs.enumerate_diagrams(DirectedTree((0, 1)),
                                          vacuum_pairs())[0]
        q = friedrichs.quotient_diagram(d, [2], {2: 0.7})
        f = friedrichs.integrand(d, self.model)
        g = q.integrand(self.model)
        self.assertEqual(g.n_tau, 1)
        for tau in (0.2, 1.3):
            z = self._momenta(f)
            self.assertAlmostEqual(g.evaluate(z, [tau]),
                                   f.evaluate(z, [tau, 0.7]))

    def test_contractions_compose(self):
        chain = DirectedTree((0, 1, 2))
        d = friedrichs.enumerate_diagrams(chain, vacuum_pairs())[0]
        once = friedrichs.quotient_diagram(d, [2], {2: 0.4})
        later = once.vertex_map[3]
        twice = friedrichs.quotient_diagram(once, [later], {later: 0.9})
        direct = friedrichs.quotient_diagram(d, [2, 3], {2: 0.4, 3: 0.9})
        self.assertEqual(twice.tree, direct.tree)
        self.assertIs(twice.base, d)
        self.assertEqual(twice.frozen_base_delays(), {2: 0.4, 3: 0.9})
        a, b = twice.offsets(), direct.offsets()
        self.assertEqual(sorted(a), sorted(b))
        for slot in a:
            self.assertAlmostEqual(a[slot], b[slot])
        f = twice.integrand(self.model)
        g = direct.integrand(self.model)
        for tau in (0.3, 2.0):
            z = self._momenta(f)
            self.assertAlmostEqual(f.evaluate(z, [tau]), g.evaluate(z, [tau]))


class TestResum(BaseTest):

    def test_diagrams_sum_to_the_tree_operator(self):
        grid = modespace.build_grid(1, 2, 1.0, -1.0)
        occ = modespace.occupation(grid, 'vacuum')
        dyn = Dynamics(grid, occ, InteractionKernel(0.5, 0.3), ordered=True)
        tree = DirectedTree((0, 1))
        taus = {1: 0.3, 2: 0.5}
        diagrams = friedrichs.enumerate_diagrams(tree, dyn.pairs)
        total = friedrichs.resum(diagrams, dyn, taus)
        direct = tree_operator(dyn, CorrelationTree(tree, taus),
                               0.0).flatten()
        self.assertTrue(direct.norm() > 1e-6)
        self.assertTrue((total - direct).norm() < 1e-10 * direct.norm())

    def test_empty(self):
        grid = modespace.build_grid(1, 1, 1.0, -1.0)
        dyn = Dynamics(grid, modespace.occupation(grid, 'vacuum'),
                       InteractionKernel(0.5, 0.3), ordered=True)
        self.assertTrue(friedrichs.resum([], dyn, {}).is_zero())


if __name__ == '__main__':
    unittest.main()
