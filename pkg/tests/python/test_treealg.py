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
import itertools
import unittest

from hypothesis import given, settings, strategies as st

from base_test import BaseTest
from neqrenorm import treealg
from neqrenorm.treealg import DirectedTree


class TestDirectedTree(BaseTest):

    def test_lines(self):
        tree = DirectedTree((0, 1, 1), shoots=(2,))
        self.assertEqual(tree.root_lines, (1,))
        self.assertEqual(tree.internal_lines, (2, 3))
        self.assertEqual(tree.shoot_lines, (4,))
        self.assertEqual(tree.children(1), (2, 3))
        self.assertEqual(tree.in_lines(2), (4,))
        self.assertEqual(tree.path_lines(3), [3, 1])
        self.assertEqual(tree.line_kind(4), treealg.SHOOT)
        self.assertEqual(tree.bfs_order(), [1, 2, 3])
        self.assertTrue(tree.is_connected())

    def test_rejects_bad_parents(self):
        with self.assertRaises(ValueError):
            DirectedTree((2, 1))
        with self.assertRaises(ValueError):
            DirectedTree((1,))
        with self.assertRaises(ValueError):
            DirectedTree((0,), shoots=(2,))

    def test_components(self):
        tree = DirectedTree((0, 0, 2))
        self.assertEqual(tree.components(), [(1,), (2, 3)])
        self.assertFalse(tree.is_connected())

    def test_json_round_trip(self):
        tree = DirectedTree((0, 1, 2, 0), shoots=(3, 4))
        self.assertEqual(treealg.from_json(tree.to_json()), tree)
        self.assertEqual(len(tree.tree_id), 12)

    def test_graph(self):
        graph = DirectedTree((0, 1, 1)).to_graph()
        self.assertEqual(sorted(graph.edges()), [(2, 1), (3, 1)])


class TestEnumeration(BaseTest):

    def test_forest_counts(self):
        # (n + 1)^(n - 1) rooted forests, n^(n - 1) rooted trees
        for n, forests, trees in ((1, 1, 1), (2, 3, 2), (3, 16, 9),
                                  (4, 125, 64)):
            self.assertEqual(len(treealg.enumerate_trees(n)), forests)
            self.assertEqual(len(treealg.enumerate_trees(n, connected=True)),
                             trees)

    def test_matches_bruteforce(self):
        for n in range(1, 5):
            self.assertEqual(set(treealg.enumerate_trees(n)),
                             set(treealg.enumerate_trees_bruteforce(n)))
        self.assertEqual(
            set(treealg.enumerate_trees(3, shoots=1, max_in=1)),
            set(treealg.enumerate_trees_bruteforce(3, shoots=1, max_in=1)))

    def test_fan_in_bound(self):
        for tree in treealg.enumerate_trees(3, shoots=2, max_in=2):
            self.assertTrue(all(tree.in_degree(v) <= 2
                                for v in tree.vertices))

    def test_rejects_empty(self):
        with self.assertRaises(ValueError):
            treealg.enumerate_trees(0)


class TestSubtrees(BaseTest):

    def test_chain_has_one_subtree_per_vertex(self):
        chain = DirectedTree((0, 1, 2))
        subtrees = treealg.right_subtrees(chain)
        self.assertEqual([s.antichain for s in subtrees], [(1,), (2,), (3,)])
        self.assertEqual(subtrees[1].lines, (2, 3))
        self.assertEqual(subtrees[1].internal_lines, (3,))
        self.assertEqual(subtrees[1].as_tree(), DirectedTree((0, 1)))

    def test_forest_antichains(self):
        forest = DirectedTree((0, 0))
        chains = treealg.antichains(forest)
        self.assertEqual(chains, [(1,), (2,), (1, 2)])

    def test_partial_order(self):
        order = treealg.partial_order(DirectedTree((0, 1, 1)))
        self.assertEqual(order, frozenset([(2, 1), (3, 1)]))
        self.assertFalse(treealg.comparable(order, 2, 3))

    def test_subtrees_are_right(self):
        for tree in treealg.enumerate_trees(3):
            for sub in treealg.right_subtrees(tree):
                as_tree = sub.as_tree()
                self.assertTrue(as_tree.is_right())
                self.assertEqual(len(as_tree.root_lines), len(sub.antichain))


class TestQuotient(BaseTest):

    def test_contracts_a_line(self):
        tree, mapping = treealg.quotient_map(DirectedTree((0, 1, 1)), [2])
        self.assertEqual(tree, DirectedTree((0, 1)))
        self.assertEqual(mapping, {1: 1, 2: 1, 3: 2})

    def test_rejects_root_lines(self):
        with self.assertRaises(ValueError):
            treealg.quotient_tree(DirectedTree((0, 1)), [1])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 15), st.data())
    def test_composition(self, index, data):
        tree = treealg.enumerate_trees(3)[index]
        internal = list(tree.internal_lines)
        first = data.draw(st.sets(st.sampled_from(internal))
                          if internal else st.just(set()))
        rest = [r for r in internal if r not in first]
        second = data.draw(st.sets(st.sampled_from(rest))
                           if rest else st.just(set()))
        once, mapping = treealg.quotient_map(tree, first)
        twice = treealg.quotient_tree(once, [mapping[r] for r in second])
        self.assertEqual(twice, treealg.quotient_tree(tree, first | second))

    def test_full_contraction_is_a_single_vertex(self):
        for tree in treealg.enumerate_trees(3, connected=True):
            self.assertEqual(
                treealg.quotient_tree(tree, tree.internal_lines),
                DirectedTree((0,)))


class TestCorrelationTree(BaseTest):

    def test_path_time(self):
        ctree = treealg.CorrelationTree(DirectedTree((0, 1)),
                                        {1: 0.5, 2: 0.25})
        self.assertAlmostEqual(ctree.path_time(2), 0.75)
        self.assertTrue(ctree.is_von_neumann())

    def test_delays_on_every_line(self):
        with self.assertRaises(ValueError):
            treealg.CorrelationTree(DirectedTree((0, 1)), {1: 0.5})
        with self.assertRaises(ValueError):
            treealg.CorrelationTree(DirectedTree((0,)), {1: -1.0})


if __name__ == '__main__':
    unittest.main()
