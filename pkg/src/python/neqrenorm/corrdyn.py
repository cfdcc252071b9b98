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
import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numpy.polynomial.legendre import leggauss

from neqrenorm import modespace, treealg, wick
from neqrenorm.config import worker_count
from neqrenorm.errors import QuadratureError
from neqrenorm.wick import NormalPolynomial

logger = logging.getLogger(__name__)

DEFAULT_QUAD = 16
# degree and factor caps of the correlation space
MAX_DEGREE = 8
MAX_FACTORS = 4


class Dynamics(object):
    '''
    The interaction in normal form together with the pairing table of the
    reference state; everything the correlation dynamics needs.

    Parameters
    ----------
        grid: ModeGrid
        occ: OccupationField
        kernel: InteractionKernel
        ordered: keep only the quartic part of the interaction
    '''

    def __init__(self, grid, occ, kernel, ordered=False):
        self.grid = grid
        self.occ = occ
        self.kernel = kernel
        self.ordered = ordered
        self.pairs = wick.PairingTable(occ)
        self.lint = wick.lint_normal_form(grid, occ, kernel, ordered=ordered,
                                          pairs=self.pairs)

    @classmethod
    def from_config(cls, config, ordered=False):
        grid = modespace.build_grid(config.grid.d, config.grid.extent,
                                    config.grid.spacing, config.grid.mu)
        occ = modespace.occupation(grid, config.occupation)
        kernel = modespace.InteractionKernel(config.kernel.c, config.kernel.a)
        return cls(grid, occ, kernel, ordered=ordered)

    def integrated_lint(self, t2, t1):
        '''
        int_{t1}^{t2} e^{-L0 s} Lint ds in closed form.
        '''
        out = NormalPolynomial(self.grid)
        for species, kernel in self.lint.items():
            energy = wick.energy_tensor(self.grid, species)
            small = np.abs(energy) < 1e-12
            safe = np.where(small, 1.0, energy)
            factor = np.where(
                small, t2 - t1,
                (np.exp(-1j * t2 * safe) - np.exp(-1j * t1 * safe)) /
                (-1j * safe))
            out.terms[species] = kernel * factor
        return out


class CorrelationVector(object):
    '''
    A finite sum of tensor products of normal-ordered factors. Terms are
    stored as representatives of their symmetrization: the factor order
    inside a term carries no meaning; sym() spells the symmetrization out.
    '''

    def __init__(self, grid, terms=()):
        self.grid = grid
        self.terms = [(complex(c), tuple(f)) for c, f in terms]

    @classmethod
    def cyclic(cls, grid):
        """The cyclic vector: one term with no factors."""
        return cls(grid, [(1.0, ())])

    @classmethod
    def single(cls, poly):
        return cls(poly.grid, [(1.0, (poly,))])

    def __add__(self, other):
        return CorrelationVector(self.grid, self.terms + other.terms)

    def __mul__(self, scalar):
        return CorrelationVector(self.grid,
                                 [(c * scalar, f) for c, f in self.terms])

    __rmul__ = __mul__

    @property
    def arity(self):
        return max([len(f) for _, f in self.terms] or [0])

    def sym(self):
        terms = []
        for coef, factors in self.terms:
            perms = list(itertools.permutations(factors))
            for perm in perms:
                terms.append((coef / len(perms), perm))
        return CorrelationVector(self.grid, terms)

    def flatten(self):
        '''
        The map F: each tensor product becomes the normal-ordered product
        of its factors, without cross-factor contractions.
        '''
        total = NormalPolynomial(self.grid)
        for coef, factors in self.terms:
            total = total + wick.concat(list(factors), self.grid) * coef
        return total

    def tensor_form(self):
        '''
        Dense tensors keyed by the species signatures of the factors, in
        factor order.
        '''
        out = {}
        for coef, factors in self.terms:
            for combo in itertools.product(*[list(f.items()) for f in factors]):
                key = tuple(s for s, _ in combo)
                value = np.asarray(coef, dtype=complex)
                for _, kernel in combo:
                    value = np.multiply.outer(value, kernel)
                out[key] = out.get(key, 0) + value
        return out

    def allclose(self, other, rtol=1e-8, atol=1e-12):
        mine, theirs = self.tensor_form(), other.tensor_form()
        for key in set(mine) | set(theirs):
            a = mine.get(key)
            b = theirs.get(key)
            if a is None:
                a = np.zeros_like(b)
            if b is None:
                b = np.zeros_like(a)
            if not np.allclose(a, b, rtol=rtol, atol=atol):
                return False
        return True


def wick_split(dyn, l, vector, lint=None):
    '''
    The splitting of the interaction by the number of factors it couples
    with.

    Parameters
    ----------
        dyn: Dynamics
        l: number of distinct factors contracted with the interaction
        vector: CorrelationVector
        lint: interaction polynomial, dyn.lint by default

    Returns
    ----------
        CorrelationVector; terms with fewer than l factors vanish
    '''
    if l < 0:
        raise ValueError("l must be non-negative")
    if lint is None:
        lint = dyn.lint
    terms = []
    for coef, factors in vector.terms:
        if l > len(factors):
            continue
        if l == 0:
            terms.append((coef, factors + (lint,)))
            continue
        for chosen in itertools.combinations(range(len(factors)), l):
            merged = wick.contract_with_factors(
                lint, [factors[i] for i in chosen], dyn.pairs)
            if merged.degree > MAX_DEGREE:
                raise ValueError("monomial degree %d over the cap %d"
                                 % (merged.degree, MAX_DEGREE))
            rest = tuple(f for i, f in enumerate(factors) if i not in chosen)
            terms.append((coef, rest + (merged,)))
    return CorrelationVector(vector.grid, terms)


def flatten_F(vector):
    return vector.flatten()


def star_involution(poly):
    return wick.star(poly)


def evolve_first_order(dyn, vector, t2, t1):
    '''
    The order-one term of the correlation evolution on [t1, t2], summed
    over every splitting of the interaction.
    '''
    lint = dyn.integrated_lint(t2, t1)
    out = CorrelationVector(vector.grid)
    for l in range(0, vector.arity + 1):
        out = out + wick_split(dyn, l, vector, lint=lint)
    return out


def tree_operator(dyn, ctree, t, inputs=()):
    '''
    Evaluates a correlation tree at observation time t.

    Vertices are processed from the leaves up. A vertex contracts its
    label with the outputs of its children, each dressed by e^{L0 tau} of
    the child's line, and with its shoot inputs dressed by e^{L0 (t - t_v)};
    t_v sums the delays from the vertex's line up to its root line. Each
    root vertex v contributes e^{-L0 (t - t_v)} G_v as one output factor.

    Parameters
    ----------
        dyn: Dynamics
        ctree: CorrelationTree; delays may be arrays of a common length
        t: observation time
        inputs: one NormalPolynomial per shoot line, in shoot order

    Returns
    ----------
        CorrelationVector with one factor per root line
    '''
    tree = ctree.tree
    if not tree.is_right():
        raise ValueError("tree operators need a right tree")
    if len(inputs) != len(tree.shoots):
        raise ValueError("tree has %d shoots but %d inputs were given"
                         % (len(tree.shoots), len(inputs)))
    start = dict((v, t - ctree.path_time(v)) for v in tree.vertices)
    outputs = {}
    for v in reversed(tree.bfs_order()):
        factors = [wick.free_evolve(outputs[c], ctree.tau[c])
                   for c in tree.children(v)]
        factors.extend(wick.free_evolve(inputs[line - tree.n - 1], start[v])
                       for line in tree.shoots_at(v))
        label = ctree.label(v)
        op = dyn.lint if isinstance(label, str) else label
        if factors:
            outputs[v] = wick.contract_with_factors(op, factors, dyn.pairs)
        else:
            outputs[v] = op
    roots = tuple(wick.free_evolve(outputs[r], -start[r])
                  for r in tree.root_lines)
    return CorrelationVector(dyn.grid, [(1.0, roots)])


def _gauss_nodes(tree, t, t_lower, quad):
    # nested product rule: root delay in [0, t - t''], a child's delay in
    # [0, s_parent - t''] where s_parent is the parent's absolute time
    x, w = leggauss(quad)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    taus = {}
    start = {}
    weights = np.ones(1)
    size = 1
    for v in tree.bfs_order():
        p = tree.parent[v - 1]
        if p == 0:
            upper = np.full(size, t - t_lower)
        else:
            upper = start[p] - t_lower
        for key in taus:
            taus[key] = np.repeat(taus[key], quad)
            start[key] = np.repeat(start[key], quad)
        upper = np.repeat(upper, quad)
        weights = np.repeat(weights, quad) * upper * np.tile(w, size)
        taus[v] = upper * np.tile(x, size)
        anchor = t if p == 0 else start[p]
        start[v] = anchor - taus[v]
        size *= quad
    return taus, weights


def _integrate(dyn, tree, t, t_lower, quad):
    taus, weights = _gauss_nodes(tree, t, t_lower, quad)
    ctree = treealg.CorrelationTree(tree, taus)
    values = tree_operator(dyn, ctree, t).flatten()
    if values.batch is None:
        return values * float(np.sum(weights))
    return values.weighted_sum(weights)


def integrate_tree(dyn, tree, t, t_lower, quad=DEFAULT_QUAD,
                   tolerance=1e-10):
    '''
    int V_T(tau) d tau over the admissible delays of one shootless tree,
    flattened. The error estimate compares against quad + 4 nodes.
    '''
    value = _integrate(dyn, tree, t, t_lower, quad)
    check = _integrate(dyn, tree, t, t_lower, quad + 4)
    estimate = (value - check).norm()
    scale = max(1.0, check.norm())
    logger.debug("tree %s: quadrature estimate %.2e", tree.tree_id, estimate)
    if estimate > tolerance * scale:
        raise QuadratureError(estimate, tolerance, tag=tree.tree_id)
    return check


def _integrate_job(args):
    return integrate_tree(*args)


def tree_expansion(dyn, order, t, t_lower, quad=DEFAULT_QUAD,
                   tolerance=1e-10, max_in=treealg.DEFAULT_MAX_IN,
                   connected=False, workers=None):
    '''
    The order-n coefficient of the evolution on [t'', t] applied to the
    cyclic vector, as a sum over labelled shootless trees with weight
    1/n!, flattened.

    Parameters
    ----------
        dyn: Dynamics
        order: n in 0..3
        t: observation time
        t_lower: finite lower limit t''
        connected: restrict to connected trees
        workers: worker processes, taken from the environment by default

    Returns
    ----------
        NormalPolynomial
    '''
    if not np.isfinite(t_lower):
        raise ValueError("tree expansion needs a finite lower limit")
    if t < t_lower:
        raise ValueError("need t >= t''")
    if order < 0 or order > 3:
        raise ValueError("tree expansion order must lie in 0..3")
    if order == 0:
        return NormalPolynomial.constant(dyn.grid)
    trees = treealg.enumerate_trees(order, max_in=max_in,
                                    connected=connected)
    jobs = [(dyn, tree, t, t_lower, quad, tolerance) for tree in trees]
    workers = workers or worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_integrate_job, jobs))
    else:
        parts = [_integrate_job(job) for job in jobs]
    # fixed summation order keeps the result bit-reproducible
    total = NormalPolynomial(dyn.grid)
    for part in parts:
        total = total + part
    logger.info("tree expansion order %d: %d trees", order, len(trees))
    return total * (1.0 / math.factorial(order))
