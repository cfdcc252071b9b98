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
import hashlib
import itertools
import json
import logging
from collections import deque

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

ROOT = 'root'
INTERNAL = 'internal'
SHOOT = 'shoot'

DEFAULT_MAX_IN = 4


class DirectedTree(object):
    '''
    A directed forest with labelled vertices 1..n, root lines and shoots.

    Vertex v owns line v, which runs from v up to parent[v - 1]; a parent
    of 0 makes line v a root line (v, +). Shoot j (1-based) is line n + j
    entering vertex shoots[j - 1]. Lines point from the smaller vertex to
    the larger one in the partial order, so the root of each component is
    its maximal vertex.

    Parameters
    ----------
        parent: sequence of length n with entries in 0..n
        shoots: sequence of vertices receiving the shoot lines
    '''

    def __init__(self, parent, shoots=()):
        self.parent = tuple(int(p) for p in parent)
        self.shoots = tuple(int(s) for s in shoots)
        self.n = len(self.parent)
        for v, p in enumerate(self.parent, 1):
            if p < 0 or p > self.n or p == v:
                raise ValueError("bad parent %d of vertex %d" % (p, v))
        for s in self.shoots:
            if s < 1 or s > self.n:
                raise ValueError("shoot attached to unknown vertex %d" % s)
        if not self.is_acyclic():
            raise ValueError("parent map %s has a cycle" % (self.parent,))

    @property
    def vertices(self):
        return range(1, self.n + 1)

    @property
    def shoot_lines(self):
        return tuple(range(self.n + 1, self.n + 1 + len(self.shoots)))

    @property
    def root_lines(self):
        return tuple(v for v in self.vertices if self.parent[v - 1] == 0)

    @property
    def internal_lines(self):
        return tuple(v for v in self.vertices if self.parent[v - 1] != 0)

    @property
    def tau_lines(self):
        """Lines carrying a delay: every non-shoot line."""
        return tuple(self.vertices)

    def is_acyclic(self):
        for v in self.vertices:
            seen = set()
            u = v
            while u != 0:
                if u in seen:
                    return False
                seen.add(u)
                u = self.parent[u - 1]
        return True

    def is_right(self):
        # every component reaches exactly one root line
        return self.is_acyclic() and bool(self.root_lines)

    def is_connected(self):
        return len(self.root_lines) == 1

    def children(self, v):
        return tuple(u for u in self.vertices if self.parent[u - 1] == v)

    def shoots_at(self, v):
        return tuple(self.n + 1 + j for j, s in enumerate(self.shoots)
                     if s == v)

    def in_lines(self, v):
        """Lines coming into v: child lines then shoot lines."""
        return self.children(v) + self.shoots_at(v)

    def in_degree(self, v):
        return len(self.in_lines(v))

    def ancestors(self, v):
        out = []
        u = self.parent[v - 1]
        while u != 0:
            out.append(u)
            u = self.parent[u - 1]
        return out

    def component_root(self, v):
        chain = [v] + self.ancestors(v)
        return chain[-1]

    def components(self):
        '''
        Returns
        ----------
            list of sorted vertex tuples, ordered by their root vertex
        '''
        groups = {}
        for v in self.vertices:
            groups.setdefault(self.component_root(v), []).append(v)
        return [tuple(groups[r]) for r in sorted(groups)]

    def path_lines(self, v):
        """Line ids from v's own line up to and including its root line."""
        return [v] + self.ancestors(v)

    def bfs_order(self):
        '''
        Vertices in breadth-first order from the component roots, each
        vertex after its parent.
        '''
        order = []
        queue = deque(self.root_lines)
        while queue:
            v = queue.popleft()
            order.append(v)
            queue.extend(self.children(v))
        return order

    def line_kind(self, line):
        if line > self.n:
            return SHOOT
        if self.parent[line - 1] == 0:
            return ROOT
        return INTERNAL

    def line_ends(self, line):
        kind = self.line_kind(line)
        if kind == SHOOT:
            return [self.shoots[line - self.n - 1], '-']
        if kind == ROOT:
            return [line, '+']
        return [self.parent[line - 1], line]

    def to_dict(self):
        lines = [{'id': line, 'kind': self.line_kind(line),
                  'ends': self.line_ends(line)}
                 for line in list(self.vertices) + list(self.shoot_lines)]
        return {'n': self.n, 'lines': lines,
                'shoot_order': list(self.shoot_lines)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def tree_id(self):
        return hashlib.sha1(self.to_json().encode('utf-8')).hexdigest()[:12]

    def to_graph(self):
        '''
        networkx DiGraph with an edge child -> parent per internal line.
        '''
        graph = nx.DiGraph()
        graph.add_nodes_from(self.vertices)
        graph.add_edges_from((v, self.parent[v - 1])
                             for v in self.internal_lines)
        return graph

    def __eq__(self, other):
        return (isinstance(other, DirectedTree) and
                self.parent == other.parent and self.shoots == other.shoots)

    def __hash__(self):
        return hash((self.parent, self.shoots))

    def __repr__(self):
        return "DirectedTree(parent=%s, shoots=%s)" % (self.parent,
                                                       self.shoots)


def from_dict(data):
    n = int(data['n'])
    parent = [0] * n
    shoot_at = {}
    for line in data['lines']:
        ends = line['ends']
        if line['kind'] == INTERNAL:
            parent[ends[1] - 1] = int(ends[0])
        elif line['kind'] == SHOOT:
            shoot_at[int(line['id'])] = int(ends[0])
        elif line['kind'] != ROOT:
            raise NotImplementedError("unknown line kind '%s'" % line['kind'])
    shoots = [shoot_at[i] for i in data.get('shoot_order', sorted(shoot_at))]
    return DirectedTree(parent, shoots)


def from_json(text):
    return from_dict(json.loads(text))


def _fan_in_ok(parent, shoots, max_in):
    counts = [0] * (len(parent) + 1)
    for p in parent:
        counts[p] += 1
    for s in shoots:
        counts[s] += 1
    return max(counts[1:] or [0]) <= max_in


def _attach_shoots(parents, n, shoots, max_in, connected):
    out = []
    for parent in parents:
        if connected and list(parent).count(0) != 1:
            continue
        for placement in itertools.product(range(1, n + 1), repeat=shoots):
            if _fan_in_ok(parent, placement, max_in):
                out.append(DirectedTree(parent, placement))
    return sorted(out, key=lambda t: (t.parent, t.shoots))


def _forest_parents(n):
    # labelled trees on {0..n} <-> rooted forests on {1..n}
    for seq in itertools.product(range(n + 1), repeat=n - 1):
        graph = nx.from_prufer_sequence(list(seq))
        parent = [0] * n
        for u, v in nx.bfs_edges(graph, 0):
            parent[v - 1] = u
        yield tuple(parent)


def enumerate_trees(n, max_in=DEFAULT_MAX_IN, shoots=0, connected=False):
    '''
    All labelled right trees (forests) with n vertices and the given
    number of labelled shoots.

    Parameters
    ----------
        n: vertex count
        max_in: bound on the number of lines entering a vertex
        shoots: number of shoot lines
        connected: keep only trees with a single root line

    Returns
    ----------
        sorted list of DirectedTree, free of duplicates
    '''
    if n < 1:
        raise ValueError("trees need at least one vertex")
    trees = _attach_shoots(_forest_parents(n), n, shoots, max_in, connected)
    logger.debug("enumerated %d trees with n=%d, shoots=%d", len(trees), n,
                 shoots)
    return trees


class _UnionFind(object):

    def __init__(self, items):
        self.up = dict((i, i) for i in items)

    def find(self, i):
        while self.up[i] != i:
            self.up[i] = self.up[self.up[i]]
            i = self.up[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        self.up[max(ri, rj)] = min(ri, rj)
        return True


def _orient(n, edges, roots):
    adjacency = dict((v, []) for v in range(1, n + 1))
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    parent = [0] * n
    seen = set(roots)
    queue = deque(roots)
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                parent[v - 1] = u
                queue.append(v)
    return tuple(parent)


def enumerate_trees_bruteforce(n, max_in=DEFAULT_MAX_IN, shoots=0,
                               connected=False):
    '''
    Generate-and-filter route to the same list as enumerate_trees: every
    acyclic edge subset of the complete graph, every choice of a root
    per component.
    '''
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    parents = set()
    for size in range(0, n):
        for edges in itertools.combinations(pairs, size):
            uf = _UnionFind(range(1, n + 1))
            if not all(uf.union(u, v) for u, v in edges):
                continue
            groups = {}
            for v in range(1, n + 1):
                groups.setdefault(uf.find(v), []).append(v)
            for roots in itertools.product(*groups.values()):
                parents.add(_orient(n, edges, roots))
    return _attach_shoots(sorted(parents), n, shoots, max_in, connected)


def partial_order(tree):
    '''
    The strict order of a right tree: v < u whenever u lies on the path
    from v to its root line.

    Returns
    ----------
        frozenset of pairs (lower, upper)
    '''
    if not tree.is_right():
        raise ValueError("partial order needs a right tree")
    return frozenset((v, u) for v in tree.vertices
                     for u in tree.ancestors(v))


def comparable(order, u, v):
    return (u, v) in order or (v, u) in order


class RightSubtree(object):
    '''
    The subtree below an antichain of vertices. The lines leaving the
    antichain become root lines.
    '''

    def __init__(self, tree, antichain):
        self.parent_tree = tree
        self.antichain = tuple(sorted(antichain))
        members = set(self.antichain)
        for v in self.antichain:
            stack = list(tree.children(v))
            while stack:
                u = stack.pop()
                members.add(u)
                stack.extend(tree.children(u))
        self.vertices = tuple(sorted(members))
        # original line id -> line id in as_tree()
        self.vertex_map = dict((v, i) for i, v in enumerate(self.vertices, 1))

    @property
    def lines(self):
        """Original ids of the non-shoot lines kept in the subtree."""
        return self.vertices

    @property
    def internal_lines(self):
        return tuple(v for v in self.vertices if v not in self.antichain)

    @property
    def shoot_lines(self):
        return tuple(line for line in self.parent_tree.shoot_lines
                     if self.parent_tree.shoots[
                         line - self.parent_tree.n - 1] in self.vertex_map)

    def as_tree(self):
        parent = []
        for v in self.vertices:
            if v in self.antichain:
                parent.append(0)
            else:
                parent.append(self.vertex_map[self.parent_tree.parent[v - 1]])
        shoots = [self.vertex_map[self.parent_tree.shoots[
            line - self.parent_tree.n - 1]] for line in self.shoot_lines]
        return DirectedTree(parent, shoots)

    def __repr__(self):
        return "RightSubtree(%s)" % (self.antichain,)


def antichains(tree):
    order = partial_order(tree)
    out = []
    for size in range(1, tree.n + 1):
        for subset in itertools.combinations(tree.vertices, size):
            if not any(comparable(order, u, v)
                       for u, v in itertools.combinations(subset, 2)):
                out.append(subset)
    return out


def right_subtrees(tree):
    '''
    One right subtree per nonempty antichain of the tree's vertices.
    '''
    if not tree.is_right():
        raise ValueError("right subtrees need a right tree")
    return [RightSubtree(tree, chain) for chain in antichains(tree)]


def quotient_map(tree, lines):
    '''
    Contracts a set of internal lines.

    Parameters
    ----------
        tree: DirectedTree
        lines: iterable of internal line ids

    Returns
    ----------
        (contracted tree, dict old vertex -> new vertex). Blocks are
        numbered in the order of their smallest vertex; a surviving
        line v becomes line map[v].
    '''
    lines = set(int(r) for r in lines)
    for line in lines:
        if line < 1 or line > tree.n + len(tree.shoots):
            raise ValueError("unknown line %d" % line)
        if tree.line_kind(line) != INTERNAL:
            raise ValueError("cannot contract %s line %d"
                             % (tree.line_kind(line), line))
    uf = _UnionFind(tree.vertices)
    for line in lines:
        uf.union(line, tree.parent[line - 1])
    blocks = {}
    for v in tree.vertices:
        blocks.setdefault(uf.find(v), []).append(v)
    ordered = sorted(blocks.values(), key=min)
    mapping = {}
    for label, block in enumerate(ordered, 1):
        for v in block:
            mapping[v] = label
    parent = [0] * len(ordered)
    for v in tree.vertices:
        if v in lines:
            continue
        p = tree.parent[v - 1]
        parent[mapping[v] - 1] = mapping[p] if p else 0
    shoots = [mapping[s] for s in tree.shoots]
    return DirectedTree(parent, shoots), mapping


def quotient_tree(tree, lines):
    return quotient_map(tree, lines)[0]


class CorrelationTree(object):
    '''
    A directed tree with a delay on every non-shoot line and an operator
    label on every vertex.

    Parameters
    ----------
        tree: DirectedTree
        tau: mapping line id -> delay >= 0, defined on tree.tau_lines
        labels: mapping vertex -> label; None or the string 'lint' means
                the von Neumann label, any other value is an explicit
                operator tag (a NormalPolynomial)
    '''

    def __init__(self, tree, tau, labels=None):
        keys = set(tau)
        if keys != set(tree.tau_lines):
            raise ValueError("delays must be given exactly on lines %s"
                             % (tree.tau_lines,))
        for line, value in tau.items():
            if not np.all(np.asarray(value) >= 0):
                raise ValueError("delay on line %d must be >= 0" % line)
        self.tree = tree
        self.tau = dict(tau)
        self.labels = dict(labels or {})

    def label(self, v):
        return self.labels.get(v, 'lint')

    def is_von_neumann(self):
        return all(self.label(v) == 'lint' for v in self.tree.vertices)

    def arity(self, v):
        """l_v of the von Neumann label: the number of incoming lines."""
        return self.tree.in_degree(v)

    def path_time(self, v):
        """Sum of delays on the path from v's line up to its root line."""
        return sum(self.tau[line] for line in self.tree.path_lines(v))
