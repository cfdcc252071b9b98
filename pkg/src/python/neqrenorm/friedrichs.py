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
from collections import Counter

import numpy as np

from neqrenorm import modespace, treealg, wick
from neqrenorm.gausscalc import GaussianIntegrand, GaussianTerm
from neqrenorm.modespace import (A_DAG_MINUS, A_DAG_PLUS, A_MINUS, A_PLUS,
                                 BRANCH, CREATION_SIGN, STAR, THETA)

logger = logging.getLogger(__name__)

# slot species of the quartic vertex, in the canonical order of the
# normal-ordered interaction
MINUS_SLOTS = (A_MINUS, A_MINUS, A_DAG_MINUS, A_DAG_MINUS)
PLUS_SLOTS = (A_DAG_PLUS, A_DAG_PLUS, A_PLUS, A_PLUS)


def vertex_species(branch):
    return MINUS_SLOTS if branch < 0 else PLUS_SLOTS


class FriedrichsDiagram(object):
    '''
    A contraction pattern of the ordered quartic interaction over a
    shootless tree.

    Parameters
    ----------
        tree: DirectedTree without shoots
        branches: +1/-1 per vertex, the branch of its interaction term
        lines: tuples (u, i, v, j) joining slot i of vertex u to slot j of
               its descendant v; slot i stands on the left of the pairing
        externals: tuples (v, j) of the uncontracted slots
        multiplicity: number of slot-level patterns the diagram stands for
    '''

    def __init__(self, tree, branches, lines, externals, multiplicity=1):
        if tree.shoots:
            raise ValueError("Friedrichs diagrams live on shootless trees")
        self.tree = tree
        self.branches = tuple(int(b) for b in branches)
        self.lines = tuple(sorted(tuple(line) for line in lines))
        self.externals = tuple(sorted(tuple(e) for e in externals))
        self.multiplicity = multiplicity

    def species(self, v, j):
        return vertex_species(self.branches[v - 1])[j]

    def orientation(self, line):
        """Or of a line: the phase sign of its lower end."""
        u, i, v, j = line
        return THETA[self.species(v, j)]

    def signs(self, line):
        u, i, v, j = line
        return self.branches[u - 1], self.branches[v - 1]

    def line_path(self, line):
        '''
        Tree lines whose delays dress the lower end of a line: from the
        lower vertex up to, not including, the upper vertex's own line.
        '''
        u, _, v, _ = line
        path = []
        w = v
        while w != u:
            path.append(w)
            w = self.tree.parent[w - 1]
        return path

    def external_path(self, external):
        return self.tree.path_lines(external[0])

    def crossings(self, r):
        """Number of diagram lines and externals dressed by tree line r."""
        count = sum(1 for line in self.lines if r in self.line_path(line))
        count += sum(1 for e in self.externals if r in self.external_path(e))
        return count

    @property
    def renormalizable(self):
        return all(self.crossings(r) >= 3 for r in self.tree.tau_lines)

    @property
    def key(self):
        lines = sorted((u, self.species(u, i), v, self.species(v, j))
                       for u, i, v, j in self.lines)
        externals = sorted((v, self.species(v, j)) for v, j in self.externals)
        return (self.tree.parent, self.branches, tuple(lines),
                tuple(externals))

    @property
    def diagram_id(self):
        text = json.dumps(self.key)
        return hashlib.sha1(text.encode('utf-8')).hexdigest()[:12]

    @property
    def external_species(self):
        return tuple(self.species(v, j) for v, j in self.externals)

    def star(self):
        '''
        The diagram of the * involution: every branch flipped, each slot
        moved to the slot of the starred species.
        '''
        def move(j):
            return (j + 2) % 4
        lines = [(u, move(i), v, move(j)) for u, i, v, j in self.lines]
        externals = [(v, move(j)) for v, j in self.externals]
        return FriedrichsDiagram(self.tree, [-b for b in self.branches],
                                 lines, externals, self.multiplicity)

    def to_dict(self):
        lines = []
        for line in self.lines:
            u, i, v, j = line
            lines.append({'ends': [[u, i], [v, j]],
                          'orientation': self.orientation(line),
                          'signs': list(self.signs(line))})
        externals = [{'ends': [[v, j], '+'],
                      'orientation': THETA[self.species(v, j)],
                      'signs': [self.branches[v - 1]]}
                     for v, j in self.externals]
        return {'tree_ref': self.tree.tree_id, 'tree': self.tree.to_dict(),
                'lines': lines + externals,
                'vertex_kernels': ['minus' if b < 0 else 'plus'
                                   for b in self.branches],
                'h': h_labels(self.offsets()),
                'multiplicity': self.multiplicity,
                'id': self.diagram_id}

    def offsets(self):
        """h of every dressed slot: zero until a line is contracted."""
        out = dict((line[2:], 0.0) for line in self.lines)
        out.update((external, 0.0) for external in self.externals)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return "FriedrichsDiagram(%s, x%d)" % (self.diagram_id,
                                               self.multiplicity)


def h_labels(offsets):
    """Offsets keyed by "v,j" slot labels, for serialization."""
    return dict(("%d,%d" % slot, float(h))
                for slot, h in sorted(offsets.items()))


def external_labels(diagram):
    '''
    Lower index (branch) and upper index (creation sign) of every
    external line.
    '''
    out = []
    for v, j in diagram.externals:
        code = diagram.species(v, j)
        out.append({'vertex': v, 'branch': BRANCH[code],
                    'creation': CREATION_SIGN[code]})
    return out


def _subtree(tree, c):
    members = {c}
    stack = list(tree.children(c))
    while stack:
        u = stack.pop()
        members.add(u)
        stack.extend(tree.children(u))
    return members


def _matchings(slots, candidates):
    # every set of disjoint candidate edges
    partners = dict((s, []) for s in slots)
    for edge in candidates:
        partners[edge[0]].append(edge)
    out = []

    def walk(index, used, chosen):
        if index == len(slots):
            out.append(tuple(chosen))
            return
        slot = slots[index]
        walk(index + 1, used, chosen)
        if slot in used:
            return
        for edge in partners[slot]:
            if edge[1] not in used:
                walk(index + 1, used | {slot, edge[1]}, chosen + [edge])

    walk(0, frozenset(), [])
    return out


def enumerate_diagrams(tree, pairs, renormalizable_only=False):
    '''
    All contraction patterns of the ordered interaction over a tree.

    Parameters
    ----------
        tree: shootless right DirectedTree
        pairs: PairingTable of the reference state; vanishing pairings
               produce no lines
        renormalizable_only: keep diagrams with at least three lines
                             crossing every tree line

    Returns
    ----------
        list of FriedrichsDiagram sorted by id, with multiplicities
    '''
    if tree.shoots:
        raise ValueError("diagrams are enumerated over shootless trees")
    if not tree.is_right():
        raise ValueError("diagrams need a right tree")
    below = dict((c, _subtree(tree, c)) for c in tree.internal_lines)
    counts = Counter()
    samples = {}
    for branches in itertools.product((-1, 1), repeat=tree.n):
        slots = [(v, j) for v in tree.vertices for j in range(4)]

        def code(slot):
            return vertex_species(branches[slot[0] - 1])[slot[1]]

        candidates = []
        for upper in slots:
            for lower in slots:
                if upper[0] in tree.ancestors(lower[0]) and \
                        pairs.nonzero(code(upper), code(lower)):
                    candidates.append((upper, lower))
        for matching in _matchings(slots, candidates):
            touched = set()
            for upper, lower in matching:
                for c, members in below.items():
                    if upper[0] == tree.parent[c - 1] and lower[0] in members:
                        touched.add(c)
            if len(touched) != len(below):
                continue
            used = set(itertools.chain.from_iterable(matching))
            lines = [(u[0], u[1], w[0], w[1]) for u, w in matching]
            externals = [s for s in slots if s not in used]
            diagram = FriedrichsDiagram(tree, branches, lines, externals)
            counts[diagram.key] += 1
            samples.setdefault(diagram.key, diagram)
    out = []
    for key, diagram in samples.items():
        diagram.multiplicity = counts[key]
        if renormalizable_only and not diagram.renormalizable:
            continue
        out.append(diagram)
    out.sort(key=lambda d: d.diagram_id)
    logger.debug("tree %s: %d diagrams", tree.tree_id, len(out))
    return out


def _phase(grid, code, delay):
    delay = np.asarray(delay, dtype=float)
    if delay.ndim == 0:
        return np.exp(1j * float(delay) * THETA[code] * grid.energy)
    return np.exp(1j * np.multiply.outer(delay, THETA[code] * grid.energy))


def amplitude_grid(diagram, dyn, taus):
    '''
    Value of a diagram on the mode grid at observation time 0.

    Parameters
    ----------
        diagram: FriedrichsDiagram
        dyn: Dynamics built with the ordered interaction
        taus: mapping tree line -> delay (scalars or arrays of a common
              length)

    Returns
    ----------
        NormalPolynomial over the external slots, times the multiplicity
    '''
    grid = dyn.grid
    batch = None
    for value in taus.values():
        value = np.asarray(value)
        if value.ndim:
            batch = value.shape[0]
    labels = {}
    next_label = 1
    args = []
    for line in diagram.lines:
        u, i, v, j = line
        labels[(u, i)] = labels[(v, j)] = next_label
        args.extend([dyn.pairs(diagram.species(u, i), diagram.species(v, j)),
                     [next_label]])
        delay = sum(taus[r] for r in diagram.line_path(line))
        phase = _phase(grid, diagram.species(v, j), delay)
        args.extend([phase, ([0] if phase.ndim == 2 else []) + [next_label]])
        next_label += 1
    out = [0] if batch is not None else []
    for external in diagram.externals:
        labels[external] = next_label
        out.append(next_label)
        delay = sum(taus[r] for r in diagram.external_path(external))
        phase = _phase(grid, diagram.species(*external), delay)
        args.extend([phase, ([0] if phase.ndim == 2 else []) + [next_label]])
        next_label += 1
    for v in diagram.tree.vertices:
        kernel = dyn.lint.terms[vertex_species(diagram.branches[v - 1])]
        args.extend([kernel, [labels[(v, j)] for j in range(4)]])
    args.append(out)
    kernel = np.einsum(*args, optimize='greedy')
    poly = wick.NormalPolynomial(grid, batch)
    poly.add(diagram.external_species, kernel * diagram.multiplicity)
    return poly


class ContinuumModel(object):
    '''
    Continuum data of the diagram integrands: Gaussian kernel, Gaussian
    occupation terms, chemical potential and spatial dimension.
    '''

    def __init__(self, kernel, occupation_terms, mu, d):
        if not mu < 0:
            raise ValueError("chemical potential must be negative")
        self.kernel = kernel
        self.occupation_terms = list(occupation_terms)
        self.mu = float(mu)
        self.d = int(d)

    @classmethod
    def from_config(cls, config, d=None):
        kernel = modespace.InteractionKernel(config.kernel.c, config.kernel.a)
        spec = config.occupation
        if spec.kind == 'vacuum':
            terms = []
        elif spec.kind == 'gaussian':
            terms = [(spec.n0, spec.b)]
        else:
            raise NotImplementedError(
                "occupation '%s' has no Gaussian form" % spec.kind)
        return cls(kernel, terms, config.grid.mu,
                   config.renorm_d if d is None else d)


def _propagator_terms(model, x, y):
    # (coefficient, extra Gaussian width) pieces of the pairing c(x, y)
    const, slope = modespace.pairing_terms(x, y)
    out = []
    if const:
        out.append((const, 0.0))
    if slope:
        out.extend((slope * n0, b) for n0, b in model.occupation_terms)
    return out


def _variables(diagram):
    index = {}
    for k, (u, i, v, j) in enumerate(diagram.lines):
        index[(u, i)] = index[(v, j)] = k
    for k, external in enumerate(diagram.externals, len(diagram.lines)):
        index[external] = k
    return index


def integrand(diagram, model, taus=None):
    '''
    The continuum integrand of a diagram as a GaussianIntegrand.

    Variables are one momentum per line followed by one per external
    slot. Each vertex contributes its coefficient (-i c on the minus
    branch, +i c on the plus branch), the width a on each slot and a
    conservation row sum_j theta_j p_j = 0; each line its propagator; the
    lower end of each line and every external slot the phase
    exp(i theta (p^2/2 - mu) t) with t the summed delays of its path.

    Parameters
    ----------
        diagram: FriedrichsDiagram
        model: ContinuumModel
        taus: optional mapping tree line -> delay; fixes every delay

    Returns
    ----------
        GaussianIntegrand with one delay variable per tree line
    '''
    tree = diagram.tree
    index = _variables(diagram)
    m = len(diagram.lines) + len(diagram.externals)
    n_tau = tree.n
    external = np.zeros(m, dtype=bool)
    external[len(diagram.lines):] = True
    rows = np.zeros((tree.n, m))
    A0 = np.zeros((m, m), dtype=complex)
    for v in tree.vertices:
        for j in range(4):
            var = index[(v, j)]
            rows[v - 1, var] += THETA[diagram.species(v, j)]
            A0[var, var] += model.kernel.a
    A_tau = np.zeros((n_tau, m, m), dtype=complex)
    kappa = np.zeros(n_tau, dtype=complex)

    def dress(var, code, path):
        for r in path:
            A_tau[r - 1, var, var] += -0.5j * THETA[code]
            kappa[r - 1] += -1j * THETA[code] * model.mu

    for line in diagram.lines:
        _, _, v, j = line
        dress(index[(v, j)], diagram.species(v, j), diagram.line_path(line))
    for external_slot in diagram.externals:
        dress(index[external_slot], diagram.species(*external_slot),
              diagram.external_path(external_slot))
    coef = complex(diagram.multiplicity)
    for b in diagram.branches:
        coef *= (-1j if b < 0 else 1j) * model.kernel.c
    pieces = [_propagator_terms(model, diagram.species(u, i),
                                diagram.species(v, j))
              for u, i, v, j in diagram.lines]
    terms = []
    for combo in itertools.product(*pieces):
        term_A0 = A0.copy()
        term_coef = coef
        for k, (c, width) in enumerate(combo):
            term_coef *= c
            term_A0[k, k] += width
        terms.append(GaussianTerm(term_coef, term_A0, A_tau.copy(),
                                  kappa.copy()))
    f = GaussianIntegrand(m, model.d, external, rows, terms, n_tau)
    if taus is not None:
        f = fix_delays(f, dict(taus), {})
    return f


def fix_delays(f, fixed, mapping):
    '''
    Freezes delay variables of an integrand.

    Parameters
    ----------
        f: GaussianIntegrand
        fixed: mapping line id (1-based) -> delay
        mapping: line id -> new line id for the delays that stay free

    Returns
    ----------
        GaussianIntegrand over the remaining delays
    '''
    free = [r for r in range(1, f.n_tau + 1) if r not in fixed]
    n_new = len(free)
    terms = []
    for term in f.terms:
        A0 = term.A0.copy()
        coef = term.coef
        for r, value in fixed.items():
            A0 = A0 + value * term.A_tau[r - 1]
            coef *= np.exp(term.kappa[r - 1] * value)
        A_tau = np.zeros((n_new,) + A0.shape, dtype=complex)
        kappa = np.zeros(n_new, dtype=complex)
        for r in free:
            target = mapping.get(r, r) - 1
            A_tau[target] += term.A_tau[r - 1]
            kappa[target] += term.kappa[r - 1]
        terms.append(GaussianTerm(coef, A0, A_tau, kappa, term.L,
                                  term.prefactor))
    return GaussianIntegrand(f.m, f.d, f.external, f.constraints, terms,
                             n_new)


class QuotientDiagram(object):
    '''
    A diagram whose tree lines in `contracted` are pulled into points,
    their delays frozen at the given values. The lines of the base
    diagram that end up inside one merged vertex become inner lines of
    its kernel; the frozen delays act as offsets h on the lines that
    cross them.
    '''

    def __init__(self, parent, contracted, fixed):
        self.parent = parent
        self.contracted = frozenset(contracted)
        if set(fixed) != set(self.contracted):
            raise ValueError("need one frozen delay per contracted line")
        self.fixed = dict(fixed)
        self.tree, self.vertex_map = treealg.quotient_map(parent.tree,
                                                          self.contracted)

    @property
    def base(self):
        node = self.parent
        while isinstance(node, QuotientDiagram):
            node = node.parent
        return node

    @property
    def diagram_id(self):
        fixed = sorted(self.fixed.items())
        text = json.dumps([self.parent.diagram_id, fixed])
        return hashlib.sha1(text.encode('utf-8')).hexdigest()[:12]

    def integrand(self, model):
        if isinstance(self.parent, QuotientDiagram):
            f = self.parent.integrand(model)
        else:
            f = integrand(self.parent, model)
        mapping = dict((r, self.vertex_map[r])
                       for r in self.parent.tree.vertices
                       if r not in self.contracted)
        return fix_delays(f, self.fixed, mapping)

    def offsets(self):
        '''
        h of every dressed slot of the base diagram: the frozen delays on
        its path, in base line ids.
        '''
        frozen = self.frozen_base_delays()
        base = self.base
        out = {}
        for line in base.lines:
            out[line[2:]] = sum(frozen.get(r, 0.0)
                                for r in base.line_path(line))
        for external in base.externals:
            out[external] = sum(frozen.get(r, 0.0)
                                for r in base.external_path(external))
        return out

    def frozen_base_delays(self):
        # frozen delays keyed by base line ids
        if not isinstance(self.parent, QuotientDiagram):
            return dict(self.fixed)
        inner = self.parent.frozen_base_delays()
        back = {}
        node = self.parent
        for r in node.base.tree.vertices:
            label = node.base_line_label(r)
            if label in self.fixed and r not in inner:
                back[r] = self.fixed[label]
        inner.update(back)
        return inner

    def base_line_label(self, r):
        '''
        Line id in this quotient of the base line r, None when r has been
        contracted.
        '''
        if isinstance(self.parent, QuotientDiagram):
            label = self.parent.base_line_label(r)
        else:
            label = r
        if label is None or label in self.contracted:
            return None
        return self.vertex_map[label]

    def to_dict(self):
        return {'parent': self.parent.diagram_id,
                'base': self.base.diagram_id,
                'tree': self.tree.to_dict(),
                'contracted': sorted(self.contracted),
                'fixed': dict((str(r), float(tau))
                              for r, tau in sorted(self.fixed.items())),
                'h': h_labels(self.offsets()),
                'id': self.diagram_id}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def quotient_diagram(diagram, lines, taus):
    '''
    Contracts tree lines of a diagram at frozen delays.

    Parameters
    ----------
        diagram: FriedrichsDiagram or QuotientDiagram
        lines: internal tree lines to contract
        taus: mapping of those lines to their delays
    '''
    lines = frozenset(lines)
    if not lines:
        return diagram
    fixed = dict((r, taus[r]) for r in lines)
    return QuotientDiagram(diagram, lines, fixed)


class StarProduct(object):
    '''
    A diagram cut along a right subtree: the inner part with the
    subtree's vertices, the outer part with the rest, glued by
    identification rows on the lines that leave the subtree.

    Attributes
    ----------
        integrand: the glued GaussianIntegrand over all tree delays
        sub_lines: tree lines of the subtree (delays of the inner part)
        counterterm: functional applied in the inner delay slots, or None
    '''

    def __init__(self, diagram, subtree, integrand, counterterm):
        self.diagram = diagram
        self.subtree = subtree
        self.integrand = integrand
        self.sub_lines = tuple(subtree.lines)
        self.counterterm = counterterm

    @property
    def rest_lines(self):
        return tuple(r for r in self.diagram.tree.tau_lines
                     if r not in self.sub_lines)


def star_insert(counterterm, diagram, subtree, model):
    '''
    Builds the glued integrand of a diagram cut along a right subtree.

    Lines leaving the subtree get two momenta, one on each side, and an
    identification row; the inner copy carries the delays of the subtree
    lines, the outer copy the remaining delays and the propagator.

    Parameters
    ----------
        counterterm: functional of the inner delays (MomentFunctional or
                     None)
        diagram: FriedrichsDiagram
        subtree: RightSubtree of diagram.tree
        model: ContinuumModel

    Returns
    ----------
        StarProduct
    '''
    if subtree.parent_tree != diagram.tree:
        raise ValueError("subtree does not belong to the diagram's tree")
    inner = set(subtree.vertices)
    tree = diagram.tree
    variables = []
    slot_var = {}
    crossing = []
    for line in diagram.lines:
        u, i, v, j = line
        k = len(variables)
        if u in inner or v not in inner:
            variables.append(('line', line))
            slot_var[(u, i)] = slot_var[(v, j)] = k
        else:
            variables.append(('outer', line))
            variables.append(('inner', line))
            slot_var[(u, i)] = k
            slot_var[(v, j)] = k + 1
            crossing.append((k, k + 1))
    for external in diagram.externals:
        slot_var[external] = len(variables)
        variables.append(('external', external))
    m = len(variables)
    external = np.array([kind == 'external' for kind, _ in variables])
    rows = []
    A0 = np.zeros((m, m), dtype=complex)
    for v in tree.vertices:
        row = np.zeros(m)
        for j in range(4):
            var = slot_var[(v, j)]
            row[var] += THETA[diagram.species(v, j)]
            A0[var, var] += model.kernel.a
        rows.append(row)
    for outer, inner_var in crossing:
        row = np.zeros(m)
        row[outer] = 1.0
        row[inner_var] = -1.0
        rows.append(row)
    n_tau = tree.n
    A_tau = np.zeros((n_tau, m, m), dtype=complex)
    kappa = np.zeros(n_tau, dtype=complex)

    def dress(var, code, path):
        for r in path:
            A_tau[r - 1, var, var] += -0.5j * THETA[code]
            kappa[r - 1] += -1j * THETA[code] * model.mu

    for line in diagram.lines:
        u, i, v, j = line
        code = diagram.species(v, j)
        path = diagram.line_path(line)
        if u in inner or v not in inner:
            dress(slot_var[(v, j)], code, path)
        else:
            # inner copy: subtree lines; outer copy: the rest
            dress(slot_var[(v, j)], code, [r for r in path if r in inner])
            dress(slot_var[(u, i)], code, [r for r in path if r not in inner])
    for slot in diagram.externals:
        dress(slot_var[slot], diagram.species(*slot),
              diagram.external_path(slot))
    coef = complex(diagram.multiplicity)
    for b in diagram.branches:
        coef *= (-1j if b < 0 else 1j) * model.kernel.c
    pieces = []
    for line in diagram.lines:
        u, i, v, j = line
        pieces.append((slot_var[(u, i)],
                       _propagator_terms(model, diagram.species(u, i),
                                         diagram.species(v, j))))
    terms = []
    for combo in itertools.product(*[p[1] for p in pieces]):
        term_A0 = A0.copy()
        term_coef = coef
        for (var, _), (c, width) in zip(pieces, combo):
            term_coef *= c
            term_A0[var, var] += width
        terms.append(GaussianTerm(term_coef, term_A0, A_tau.copy(),
                                  kappa.copy()))
    glued = GaussianIntegrand(m, model.d, external, np.array(rows), terms,
                              n_tau)
    return StarProduct(diagram, subtree, glued, counterterm)


def star_integrand(diagram, model):
    '''
    Integrand of the starred diagram: every term conjugated.
    '''
    f = integrand(diagram, model)
    terms = []
    for term in f.terms:
        terms.append(GaussianTerm(np.conj(term.coef), np.conj(term.A0),
                                  np.conj(term.A_tau), np.conj(term.kappa)))
    return GaussianIntegrand(f.m, f.d, f.external, -f.constraints, terms,
                             f.n_tau)


def resum(diagrams, dyn, taus):
    '''
    Sum of the grid amplitudes of a list of diagrams, in list order.
    '''
    total = None
    for diagram in diagrams:
        part = amplitude_grid(diagram, dyn, taus)
        total = part if total is None else total + part
    if total is None:
        return wick.NormalPolynomial(dyn.grid)
    return total


def star_species(species):
    return tuple(STAR[s] for s in species)
