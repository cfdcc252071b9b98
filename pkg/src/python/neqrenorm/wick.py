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
import functools
import itertools
import json
import logging

import numpy as np

from neqrenorm import modespace
from neqrenorm.modespace import (A_DAG_MINUS, A_DAG_PLUS, A_MINUS, A_PLUS,
                                 STAR, THETA)

logger = logging.getLogger(__name__)


def _canonical(species, kernel, offset):
    # sort slots into species order and symmetrize equal-species blocks
    species = tuple(int(s) for s in species)
    order = sorted(range(len(species)), key=lambda j: species[j])
    axes = tuple(range(offset)) + tuple(offset + j for j in order)
    kernel = np.transpose(np.asarray(kernel, dtype=complex), axes)
    species = tuple(species[j] for j in order)
    return species, _symmetrize(kernel, species, offset)


def _symmetrize(kernel, species, offset):
    start = 0
    for _, group in itertools.groupby(species):
        size = len(list(group))
        if size > 1:
            block = list(range(start, start + size))
            total = np.zeros_like(kernel)
            perms = list(itertools.permutations(block))
            for perm in perms:
                axes = list(range(kernel.ndim))
                for src, dst in zip(block, perm):
                    axes[offset + src] = offset + dst
                total += np.transpose(kernel, axes)
            kernel = total / len(perms)
        start += size
    return kernel


class NormalPolynomial(object):
    '''
    Finite sum of normal-ordered monomials in the doubled generators.

    A monomial is a tuple of species codes in normal-ordering order with
    a complex kernel over the mode grid, one axis per slot. Kernels are
    symmetric within blocks of equal species. An optional leading batch
    axis carries a family of polynomials evaluated at once (used for
    quadrature nodes).
    '''

    def __init__(self, grid, batch=None):
        self.grid = grid
        self.batch = batch
        self.terms = {}

    @classmethod
    def constant(cls, grid, value=1.0):
        poly = cls(grid)
        poly.terms[()] = np.asarray(value, dtype=complex)
        return poly

    @classmethod
    def monomial(cls, grid, species, kernel, batch=None):
        poly = cls(grid, batch)
        poly.add(species, kernel)
        return poly

    @property
    def _offset(self):
        return 0 if self.batch is None else 1

    def add(self, species, kernel, canonical=False):
        '''
        Adds a monomial in place.

        Parameters
        ----------
            species: sequence of species codes, any order
            kernel: array with one axis per slot (after the batch axis)
            canonical: skip sorting when the input is already canonical
        '''
        kernel = np.asarray(kernel, dtype=complex)
        if not canonical:
            species, kernel = _canonical(species, kernel, self._offset)
        species = tuple(species)
        if species in self.terms:
            self.terms[species] = self.terms[species] + kernel
        else:
            self.terms[species] = kernel
        return self

    def copy(self):
        poly = NormalPolynomial(self.grid, self.batch)
        poly.terms = dict((s, k.copy()) for s, k in self.terms.items())
        return poly

    def items(self):
        return self.terms.items()

    @property
    def degree(self):
        if not self.terms:
            return 0
        return max(len(s) for s in self.terms)

    def _aligned(self, other):
        if self.batch == other.batch:
            return self, other
        batch = self.batch if other.batch is None else other.batch
        if self.batch is not None and other.batch is not None:
            raise ValueError("batch sizes differ: %d and %d"
                             % (self.batch, other.batch))
        return self.broadcast(batch), other.broadcast(batch)

    def broadcast(self, batch):
        if self.batch == batch:
            return self
        poly = NormalPolynomial(self.grid, batch)
        for species, kernel in self.terms.items():
            poly.terms[species] = np.broadcast_to(
                kernel, (batch,) + kernel.shape).copy()
        return poly

    def __add__(self, other):
        left, right = self._aligned(other)
        out = left.copy()
        for species, kernel in right.terms.items():
            out.add(species, kernel, canonical=True)
        return out

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        scalar = np.asarray(scalar, dtype=complex)
        if scalar.ndim == 0:
            out = NormalPolynomial(self.grid, self.batch)
            for species, kernel in self.terms.items():
                out.terms[species] = kernel * scalar
            return out
        batch = scalar.shape[0]
        if self.batch is not None and self.batch != batch:
            raise ValueError("batch sizes differ")
        out = NormalPolynomial(self.grid, batch)
        for species, kernel in self.terms.items():
            if self.batch is None:
                kernel = kernel[np.newaxis]
            shape = (batch,) + (1,) * len(species)
            out.terms[species] = kernel * scalar.reshape(shape)
        return out

    __rmul__ = __mul__

    def weighted_sum(self, weights):
        """Contracts the batch axis against quadrature weights."""
        weights = np.asarray(weights, dtype=complex)
        out = NormalPolynomial(self.grid)
        for species, kernel in self.terms.items():
            out.terms[species] = np.tensordot(weights, kernel, axes=(0, 0))
        return out

    def batch_item(self, index):
        out = NormalPolynomial(self.grid)
        for species, kernel in self.terms.items():
            out.terms[species] = kernel[index].copy()
        return out

    def norm(self):
        if not self.terms:
            return 0.0
        return max(float(np.max(np.abs(k))) if k.size else 0.0
                   for k in self.terms.values())

    def pruned(self, atol=0.0):
        out = NormalPolynomial(self.grid, self.batch)
        for species, kernel in self.terms.items():
            if np.any(np.abs(kernel) > atol):
                out.terms[species] = kernel
        return out

    def is_zero(self, atol=1e-12):
        return self.norm() <= atol

    def tensor_form(self):
        return dict((s, k.copy()) for s, k in self.pruned().terms.items())

    def allclose(self, other, rtol=1e-8, atol=1e-12):
        keys = set(self.terms) | set(other.terms)
        for key in keys:
            mine = self.terms.get(key)
            theirs = other.terms.get(key)
            if mine is None:
                mine = np.zeros_like(theirs)
            if theirs is None:
                theirs = np.zeros_like(mine)
            if not np.allclose(mine, theirs, rtol=rtol, atol=atol):
                return False
        return True

    def to_dict(self):
        terms = []
        for species in sorted(self.terms):
            kernel = self.terms[species]
            terms.append({'species': list(species),
                          'real': np.real(kernel).tolist(),
                          'imag': np.imag(kernel).tolist()})
        return {'batch': self.batch, 'terms': terms}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        sigs = ', '.join(signature(s) for s in sorted(self.terms))
        return "NormalPolynomial(%s)" % sigs


def signature(species):
    return ' '.join(modespace.SPECIES_NAMES[s] for s in species) or '1'


class PairingTable(object):
    '''
    Contraction vectors c(x, y)(k) / weight of the doubled reference
    state, indexed by the species of the left and right symbols.
    '''

    def __init__(self, occ):
        self.occ = occ
        self.grid = occ.grid
        self._vectors = {}
        self._nonzero = {}
        for x, y in itertools.product(range(4), repeat=2):
            vec = modespace.pairing(x, y, occ.values) / self.grid.weight
            vec = np.broadcast_to(vec, (self.grid.size,)).astype(complex)
            self._vectors[(x, y)] = vec
            self._nonzero[(x, y)] = bool(np.any(vec != 0))

    def __call__(self, x, y):
        return self._vectors[(x, y)]

    def nonzero(self, x, y):
        return self._nonzero[(x, y)]


@functools.lru_cache(maxsize=None)
def partial_pairings(n):
    # every set of disjoint pairs (i, j), i < j, drawn from range(n)
    if n < 2:
        return ((),)
    out = []
    for rest in partial_pairings(n - 1):
        out.append(rest)
        used = set(itertools.chain.from_iterable(rest))
        for i in range(n - 1):
            if i not in used:
                out.append(tuple(sorted(rest + ((i, n - 1),))))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _cross_matchings(na, nb):
    # partial matchings between range(na) and range(nb)
    if na == 0 or nb == 0:
        return ((),)
    out = []
    for rest in _cross_matchings(na - 1, nb):
        out.append(rest)
        used = set(j for _, j in rest)
        for j in range(nb):
            if j not in used:
                out.append(rest + ((na - 1, j),))
    return tuple(out)


def _merge(operands, matching, pairs):
    '''
    Contracts a list of monomials along the given slot pairs.

    Parameters
    ----------
        operands: list of (species, kernel, batched)
        matching: pairs (i, j) of global slot numbers, i left of j
        pairs: PairingTable

    Returns
    ----------
        (species, kernel, batched) of the merged monomial, or None when
        one of the pairings vanishes identically
    '''
    species = []
    for ops, _, _ in operands:
        species.extend(ops)
    labels = [None] * len(species)
    args = []
    next_label = 1
    for i, j in matching:
        if not pairs.nonzero(species[i], species[j]):
            return None
        labels[i] = labels[j] = next_label
        args.extend([pairs(species[i], species[j]), [next_label]])
        next_label += 1
    batched = any(b for _, _, b in operands)
    out = [0] if batched else []
    out_species = []
    for slot, code in enumerate(species):
        if labels[slot] is None:
            labels[slot] = next_label
            out.append(next_label)
            out_species.append(code)
            next_label += 1
    start = 0
    for ops, kernel, is_batched in operands:
        sub = [0] if is_batched else []
        sub.extend(labels[start:start + len(ops)])
        start += len(ops)
        args.extend([kernel, sub])
    args.append(out)
    kernel = np.einsum(*args, optimize='greedy')
    return tuple(out_species), kernel, batched


def _result(grid, batch):
    return NormalPolynomial(grid, batch)


def _batch_of(*polys):
    batches = set(p.batch for p in polys if p.batch is not None)
    if len(batches) > 1:
        raise ValueError("inconsistent batch sizes %s" % sorted(batches))
    return batches.pop() if batches else None


def normal_order(grid, species, kernel, pairs, batch=None):
    '''
    Normal form of a plain (operator-ordered) product of generators.

    Parameters
    ----------
        grid: ModeGrid
        species: species codes in operator order, leftmost first
        kernel: kernel with one axis per slot
        pairs: PairingTable of the reference state
        batch: batch size when the kernel has a leading batch axis

    Returns
    ----------
        NormalPolynomial equal to the plain product
    '''
    out = _result(grid, batch)
    operand = [(tuple(species), np.asarray(kernel, dtype=complex),
                batch is not None)]
    for matching in partial_pairings(len(species)):
        merged = _merge(operand, matching, pairs)
        if merged is not None:
            out.add(merged[0], merged[1])
    return out


def product(left, right, pairs):
    """Wick product of two normal-ordered polynomials, left factor first."""
    batch = _batch_of(left, right)
    out = _result(left.grid, batch)
    for sa, ka in left.items():
        for sb, kb in right.items():
            operands = [(sa, ka, left.batch is not None),
                        (sb, kb, right.batch is not None)]
            offset = len(sa)
            for matching in _cross_matchings(len(sa), len(sb)):
                shifted = tuple((i, offset + j) for i, j in matching)
                merged = _merge(operands, shifted, pairs)
                if merged is not None:
                    out.add(merged[0], merged[1])
    return out


def concat(polys, grid=None):
    '''
    Normal-ordered product without contractions, the flattening of a
    tensor product of factors.
    '''
    if not polys:
        return NormalPolynomial.constant(grid)
    batch = _batch_of(*polys)
    out = _result(polys[0].grid, batch)
    choices = [list(p.items()) for p in polys]
    for combo in itertools.product(*choices):
        args = []
        labels = []
        next_label = 1
        for poly, (species, kernel) in zip(polys, combo):
            sub = [0] if poly.batch is not None else []
            for _ in species:
                sub.append(next_label)
                labels.append(next_label)
                next_label += 1
            args.extend([kernel, sub])
        out_sub = ([0] if batch is not None else []) + labels
        args.append(out_sub)
        kernel = np.einsum(*args, optimize='greedy')
        species = tuple(itertools.chain.from_iterable(s for s, _ in combo))
        out.add(species, kernel)
    return out


def contract_with_factors(lint, factors, pairs):
    '''
    Contracts an interaction polynomial with a set of factors, each
    factor touched at least once and no factor-factor contractions.

    Parameters
    ----------
        lint: NormalPolynomial standing on the left
        factors: list of NormalPolynomial
        pairs: PairingTable

    Returns
    ----------
        NormalPolynomial, the merged factor
    '''
    batch = _batch_of(lint, *factors)
    out = _result(lint.grid, batch)
    choices = [list(f.items()) for f in factors]
    for ls, lk in lint.items():
        for combo in itertools.product(*choices):
            owners = []
            for index, (species, _) in enumerate(combo):
                owners.extend([index] * len(species))
            operands = [(ls, lk, lint.batch is not None)]
            operands.extend((s, k, f.batch is not None)
                            for f, (s, k) in zip(factors, combo))
            offset = len(ls)
            for matching in _cross_matchings(len(ls), len(owners)):
                touched = set(owners[j] for _, j in matching)
                if len(touched) != len(factors):
                    continue
                shifted = tuple((i, offset + j) for i, j in matching)
                merged = _merge(operands, shifted, pairs)
                if merged is not None:
                    out.add(merged[0], merged[1])
    return out


def energy_tensor(grid, species):
    """sum_j THETA_j (omega - mu)(k_j) as an array over the slot modes."""
    eps = grid.energy
    total = np.zeros((grid.size,) * len(species))
    for axis, code in enumerate(species):
        shape = [1] * len(species)
        shape[axis] = grid.size
        total = total + THETA[code] * eps.reshape(shape)
    return total


def free_evolve(poly, tau):
    '''
    Applies e^{L0 tau}: each kernel is multiplied by its free phase.

    Parameters
    ----------
        poly: NormalPolynomial
        tau: scalar, or a 1-d array producing a batched polynomial

    Returns
    ----------
        NormalPolynomial
    '''
    tau = np.asarray(tau, dtype=float)
    if tau.ndim == 0:
        out = NormalPolynomial(poly.grid, poly.batch)
        for species, kernel in poly.items():
            phase = np.exp(1j * float(tau) * energy_tensor(poly.grid, species))
            out.terms[species] = kernel * phase
        return out
    batch = tau.shape[0]
    if poly.batch is not None and poly.batch != batch:
        raise ValueError("batch sizes differ")
    out = NormalPolynomial(poly.grid, batch)
    for species, kernel in poly.items():
        energy = energy_tensor(poly.grid, species)
        phase = np.exp(1j * np.multiply.outer(tau, energy))
        out.terms[species] = kernel * phase
    return out


def star(poly):
    """The involution: branches swapped, kernels conjugated."""
    out = NormalPolynomial(poly.grid, poly.batch)
    for species, kernel in poly.items():
        out.add(tuple(STAR[s] for s in species), np.conj(kernel))
    return out


def lint_normal_form(grid, occ, kernel, ordered=False, pairs=None):
    '''
    Normal form of the interaction part of the von Neumann operator,
    -i V(minus branch) + i V(plus branch), on a grid.

    Parameters
    ----------
        grid: ModeGrid
        occ: OccupationField of the reference state
        kernel: InteractionKernel
        ordered: keep only the quartic part

    Returns
    ----------
        NormalPolynomial
    '''
    if pairs is None:
        pairs = PairingTable(occ)
    tensor = grid.weight ** 3 * kernel.grid_kernel(grid)
    minus = normal_order(grid, (A_DAG_MINUS, A_DAG_MINUS, A_MINUS, A_MINUS),
                         -1j * tensor, pairs)
    # X V read through the plus-branch generators reverses the slots
    plus = normal_order(grid, (A_DAG_PLUS, A_DAG_PLUS, A_PLUS, A_PLUS),
                        1j * np.transpose(tensor, (3, 2, 1, 0)), pairs)
    lint = minus + plus
    if ordered:
        quartic = NormalPolynomial(grid)
        for species, kern in lint.items():
            if len(species) == 4:
                quartic.terms[species] = kern
        return quartic
    return lint.pruned()
