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
import csv
import functools
import io
import itertools
import json
import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from neqrenorm import friedrichs, gausscalc, modespace, testfunc, treealg, wick
from neqrenorm.corrdyn import tree_operator
from neqrenorm.errors import CapacityError, InvariantError, MissingEntryError
from neqrenorm.testfunc import TestFunction

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 50.0
PANEL_NODES = 12
FIRST_PANEL = 2.0 ** -6
TRANSITION_PANELS = 24
TAIL_NODES = 32
# subtraction orders above this are not attempted
MAX_ORDER = 4
SCALES = (10.0, 31.6227766, 100.0, 316.227766, 1000.0)
ZERO_ENERGY = 1e-12
# subtraction order of the root sets at resolved momenta
INVARIANT_ORDER = 6
# components times rule points of one grid tree
GRID_BUDGET = 2 ** 23
# delay points per amplitude evaluation
CHUNK = 16384


def _legendre(q, a, b):
    x, w = leggauss(q)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


class TauRule(object):
    '''
    Composite Gauss-Legendre rule in one delay variable: geometric panels
    from [0, 2^-6] up to the window T, finer panels over the transition
    of the windows xi, extra breakpoints on request. Without a window the
    range beyond the last panel is mapped by tau = c / u^2.

    Parameters
    ----------
        window: T, or None for [0, inf)
        n: number of delay variables of the diagram
        breakpoints: extra panel edges
        q: nodes per panel
        width: window width b, window_width(n) by default
    '''

    def __init__(self, window, n, breakpoints=(), q=PANEL_NODES, width=None):
        b = testfunc.window_width(n) if width is None else width
        lo, hi = 1.0 / b, 2.0 / b
        top = window if window is not None else \
            2.0 ** math.ceil(math.log(max([64.0, 2.0 * hi] +
                                          [2.0 * x for x in breakpoints]), 2))
        edges = {0.0}
        e = FIRST_PANEL
        while e < top:
            edges.add(e)
            e *= 2.0
        edges.add(float(top))
        edges.update(np.linspace(lo, hi, TRANSITION_PANELS + 1))
        edges.update(float(x) for x in breakpoints if x > 0)
        edges = sorted(x for x in edges if x <= top)
        nodes, weights = [], []
        for a, c in zip(edges[:-1], edges[1:]):
            if c - a < 1e-14:
                continue
            x, w = _legendre(q, a, c)
            nodes.append(x)
            weights.append(w)
        if window is None:
            for a, c in ((0.0, 0.25), (0.25, 0.5), (0.5, 1.0)):
                u, w = _legendre(TAIL_NODES // 2, a, c)
                nodes.append(top / u ** 2)
                weights.append(w * 2.0 * top / u ** 3)
        self.window = window
        self.n = n
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)

    def __len__(self):
        return self.nodes.size


class Amplitude(object):
    '''
    A(tau)[f] of one diagram as a function of its tree-line delays, one
    column per component (a single column for a continuum diagram paired
    with its test function, one per kernel entry on the mode grid).

    Parameters
    ----------
        func: (B, n) delays -> (B, K) values
        n: number of delay variables
        roots: positions of the root lines
        energies: (K,) eigenvalues of the translation generator, known on
                  the grid
        components: list of (positions) per tree component
    '''

    def __init__(self, func, n, roots, energies=None, components=None,
                 label=''):
        self.func = func
        self.n = int(n)
        self.roots = tuple(roots)
        self.energies = None if energies is None else np.asarray(energies)
        self.components = components or [tuple(range(self.n))]
        self.label = label

    def __call__(self, taus):
        taus = np.atleast_2d(np.asarray(taus, dtype=float))
        out = np.asarray(self.func(taus))
        return out.reshape(taus.shape[0], -1)


def _components(tree):
    return [tuple(v - 1 for v in comp) for comp in tree.components()]


def continuum_amplitude(diagram, model, widths, translate=None, f=None):
    '''
    Amplitude of a diagram paired with the Gaussian test function
    prod_r exp(-widths |p_r|^2) of its external momenta.

    Parameters
    ----------
        diagram: FriedrichsDiagram (or QuotientDiagram)
        model: ContinuumModel
        widths: test-function widths, scalar or one per external
        translate: optional (subset, a) plane-wave translation
        f: integrand to use instead of the diagram's own
    '''
    if f is None:
        f = diagram.integrand(model) if hasattr(diagram, 'parent') \
            else friedrichs.integrand(diagram, model)
    if translate is not None:
        f = gausscalc.translate_phase(f, *translate)
    tree = diagram.tree
    roots = tuple(r - 1 for r in tree.root_lines)
    return _paired_amplitude(f, widths, roots, _components(tree),
                             diagram.diagram_id)


def _paired_amplitude(f, widths, roots, components, label):
    F = gausscalc.integrate_momenta(gausscalc.with_test_function(f, widths))

    def func(taus):
        return F.evaluate(taus)[:, np.newaxis]

    return Amplitude(func, f.n_tau, roots, components=components,
                     label=label)


def external_energy(f, roots, p_ext):
    '''
    Rate E(p) of the phase exp(i E t) picked up by the integrand when
    every root delay moves by t: the root delays dress only the external
    momenta, so E = sum_r (kappa_r - sum_e A_tau[r, e, e] |p_e|^2) / i.
    '''
    term = f.terms[0]
    externals = f.externals
    p2 = np.sum(np.asarray(p_ext, dtype=float) ** 2, axis=-1)
    rate = 0j
    for r in roots:
        diagonal = term.A_tau[r][externals, externals]
        rate += term.kappa[r] - np.dot(diagonal, p2)
    return float((rate / 1j).real)


def sample_momenta(diagram, model, count, seed=0, scale=0.7,
                   min_energy=0.5, max_energy=4.0, attempts=1000):
    '''
    External momenta of a diagram obeying the momentum conservation left
    over after the internal integration, with |E(p)| kept in
    [min_energy, max_energy] so that no sample is secular.

    Returns
    ----------
        list of (m_ext, d) arrays
    '''
    f = friedrichs.integrand(diagram, model)
    F = gausscalc.integrate_momenta(f)
    roots = [r - 1 for r in diagram.tree.root_lines]
    m_ext = f.externals.size
    residual = F.residual_constraints[:, f.externals]
    basis = linalg.null_space(residual) if residual.size else np.eye(m_ext)
    rng = np.random.RandomState(seed)
    out = []
    for _ in range(attempts):
        if len(out) == count:
            break
        p = basis.dot(rng.normal(scale=scale,
                                 size=(basis.shape[1], model.d)))
        if min_energy <= abs(external_energy(f, roots, p)) <= max_energy:
            out.append(p)
    if len(out) < count:
        raise ValueError("found %d of %d non-secular momentum samples"
                         % (len(out), count))
    return out


def resolved_amplitude(diagram, model, momenta):
    '''
    Amplitude of a diagram at fixed external momenta, one component per
    sample. Each component is an eigenvector of the root translation
    with eigenvalue i E(p).

    Parameters
    ----------
        diagram: FriedrichsDiagram
        model: ContinuumModel
        momenta: list of (m_ext, d) external momenta
    '''
    f = friedrichs.integrand(diagram, model)
    F = gausscalc.integrate_momenta(f)
    tree = diagram.tree
    roots = tuple(r - 1 for r in tree.root_lines)
    momenta = [np.asarray(p, dtype=float) for p in momenta]
    energies = [external_energy(f, roots, p) for p in momenta]

    def func(taus):
        return np.stack([F.evaluate(taus, p) for p in momenta], axis=1)

    return Amplitude(func, tree.n, roots, energies=energies,
                     components=_components(tree),
                     label=diagram.diagram_id)


def grid_amplitude(dyn, tree, t_obs=0.0):
    '''
    Flattened tree operator at observation time t_obs on the mode grid, one
    component per kernel entry. The translation generator acts on each
    entry by its external energy.
    '''
    if tree.shoots:
        raise ValueError("grid amplitudes need a shootless tree")
    sample = tree_operator(dyn, treealg.CorrelationTree(
        tree, dict((r, 0.0) for r in tree.tau_lines)), t_obs).flatten()
    keys = sorted(sample.terms)
    energies = np.concatenate([wick.energy_tensor(dyn.grid, k).ravel()
                               for k in keys])

    def func(taus):
        ctree = treealg.CorrelationTree(
            tree, dict((r, taus[:, r - 1]) for r in tree.tau_lines))
        poly = tree_operator(dyn, ctree, t_obs).flatten()
        return np.concatenate([poly.terms[k].reshape(taus.shape[0], -1)
                               for k in keys], axis=1)

    roots = tuple(r - 1 for r in tree.root_lines)
    amp = Amplitude(func, tree.n, roots, energies=energies,
                    components=_components(tree), label=tree.tree_id)
    amp.keys = keys
    return amp


class SPairing(object):
    '''
    <U, Psi> = int A(tau) Psi(1/tau) d tau over the delay window, on the
    tensor product of one TauRule per delay variable. Amplitude values
    are cached per root translation.

    Parameters
    ----------
        amplitude: Amplitude
        window: T; None integrates to infinity
        breakpoints: extra panel edges of the rule
        width: window width b of the dual basis
    '''

    def __init__(self, amplitude, window=DEFAULT_WINDOW, breakpoints=(),
                 q=PANEL_NODES, width=None):
        self.amplitude = amplitude
        self.n = amplitude.n
        self.window = window
        self.b = testfunc.window_width(self.n) if width is None else width
        self.rule = TauRule(window, self.n, breakpoints, q, self.b)
        self._cache = {}

    def values(self, shift=0.0):
        '''
        Amplitude on the node grid with the root delays moved by shift;
        shape (q,) * n + (K,).
        '''
        key = round(float(shift), 14)
        if key not in self._cache:
            x = self.rule.nodes
            mesh = np.meshgrid(*([x] * self.n), indexing='ij')
            taus = np.stack([m.ravel() for m in mesh], axis=1)
            taus[:, list(self.amplitude.roots)] += shift
            values = np.concatenate(
                [self.amplitude(taus[i:i + CHUNK])
                 for i in range(0, taus.shape[0], CHUNK)], axis=0)
            self._cache[key] = values.reshape((x.size,) * self.n + (-1,))
        return self._cache[key]

    def _profile_weights(self, profile):
        return profile(1.0 / self.rule.nodes) * self.rule.weights

    def pair(self, psi, shift=0.0):
        '''
        Returns
        ----------
            (K,) complex pairings
        '''
        A = self.values(shift)
        n = self.n
        total = np.zeros(A.shape[-1], dtype=complex)
        for coef, profiles in psi.terms:
            args = [A, list(range(n + 1))]
            for i, p in enumerate(profiles):
                args.extend([self._profile_weights(p), [i]])
            args.append([n])
            total += coef * np.einsum(*args)
        return total

    def partial(self, psi, positions, shift=0.0):
        '''
        Contracts only the delay variables at `positions`; the profiles
        of psi elsewhere are ignored. Returns an array over the node grid
        of the remaining variables with a trailing component axis.
        '''
        A = self.values(shift)
        n = self.n
        rest = [i for i in range(n) if i not in positions]
        total = 0
        for coef, profiles in psi.terms:
            args = [A, list(range(n + 1))]
            for i in positions:
                args.extend([self._profile_weights(profiles[i]), [i]])
            args.append(rest + [n])
            total = total + coef * np.einsum(*args)
        return total

    def moment(self, m):
        """<U, e_m> for a multi-index m."""
        return self.pair(testfunc.dual_monomial(self.n, m, self.b))


def divergence_degree(amplitude, positions, scales=SCALES):
    '''
    Power counting of the delays at `positions`: the decay exponent p of
    |A| with those delays at lam and the others at 1, and the degree
    omega = |positions| - p, p rounded to half-integers.

    Returns
    ----------
        (omega, p, spread)
    '''
    direction = np.ones(amplitude.n)
    taus = np.repeat(direction[np.newaxis], len(scales), axis=0)
    taus[:, list(positions)] = np.asarray(scales)[:, np.newaxis]
    values = np.max(np.abs(amplitude(taus)), axis=1)
    if np.any(values == 0):
        return -np.inf, np.inf, 0.0
    slope, spread = gausscalc.power_exponent(values, scales)
    p = -slope
    # a noisy fit rounds towards the larger degree
    if spread < 0.05:
        p_round = round(2.0 * p) / 2.0
    else:
        p_round = math.floor(2.0 * p) / 2.0
    return len(positions) - p_round, p, spread


def subtraction_order(omega, cap=MAX_ORDER):
    """Taylor order N of a subtraction; -1 means none."""
    if omega < 0:
        return -1
    return min(int(math.floor(omega)) + 1, cap)


def _subsets(positions):
    positions = tuple(sorted(positions))
    for size in range(1, len(positions) + 1):
        for subset in itertools.combinations(positions, size):
            yield frozenset(subset)


class Forest(object):
    '''
    Subtraction data of one diagram: the Taylor order of every nonempty
    set of delay variables inside one tree component, and the forest
    recursion Z(D) = -(1 + sum_{D' < D} Z(D')) P_D.

    The multi-indices of P_D form the product of total-degree balls over
    the components D meets, so P_D factorizes over components.

    Parameters
    ----------
        n: number of delay variables
        components: position tuples, one per tree component
        orders: dict frozenset(positions) -> N for subsets of a component
        b: window width
    '''

    def __init__(self, n, components, orders, b):
        self.n = n
        self.components = [tuple(c) for c in components]
        self.orders = dict(orders)
        self.b = b

    @classmethod
    def from_amplitude(cls, amplitude, top_order=None, cap=MAX_ORDER,
                       root_order=None):
        '''
        Power counts every subset of every component. top_order
        overrides N of the full variable set of each component,
        root_order N of every other subset holding a root delay.
        '''
        orders = {}
        roots = set(amplitude.roots)
        for comp in amplitude.components:
            for subset in _subsets(comp):
                if root_order is not None and subset & roots:
                    orders[subset] = root_order
                    continue
                omega, p, spread = divergence_degree(amplitude, subset)
                orders[subset] = subtraction_order(omega, cap)
                logger.debug("%s %s: p=%.3f omega=%.2f N=%d",
                             amplitude.label, sorted(subset), p, omega,
                             orders[subset])
            if top_order is not None:
                orders[frozenset(comp)] = top_order
        return cls(amplitude.n, amplitude.components, orders,
                   testfunc.window_width(amplitude.n))

    def groups(self, D):
        out = []
        for comp in self.components:
            part = frozenset(D) & frozenset(comp)
            if part:
                out.append((tuple(sorted(part)), self.orders.get(part, -1)))
        return out

    def indices(self, D):
        return testfunc.multi_indices(self.n, self.groups(D))

    def project(self, D, psi):
        indices = self.indices(D)
        if not indices:
            return TestFunction(self.n)
        return psi.project(sorted(D), indices, self.b)

    def Z(self, D, psi):
        D = frozenset(D)
        projected = self.project(D, psi)
        if projected.is_zero:
            return projected
        total = projected
        for sub in _subsets(D):
            if sub != D:
                total = total + self.Z(sub, projected)
        return -total

    def r_prime(self, psi, top=None):
        '''
        (1 + sum over proper nonempty subsets D of top of Z(D)) psi.
        '''
        top = frozenset(range(self.n)) if top is None else frozenset(top)
        total = psi
        for D in _subsets(top):
            if D != top:
                total = total + self.Z(D, psi)
        return total


class MomentFunctional(object):
    '''
    sum_m c_m d^m Psi(0): a counterterm supported at s = 0.

    Parameters
    ----------
        indices: list of multi-indices
        coefficients: (len(indices), K) complex, or with extra trailing
                      axes over a node grid of other variables
    '''

    def __init__(self, indices, coefficients):
        self.indices = [tuple(m) for m in indices]
        self.coefficients = np.asarray(coefficients, dtype=complex)

    def __call__(self, psi):
        if not self.indices:
            return 0j
        jet = psi.jet(self.indices)
        return np.tensordot(jet, self.coefficients, axes=(0, 0))

    @property
    def is_zero(self):
        return not np.any(self.coefficients)

    def conj(self):
        return MomentFunctional(self.indices, np.conj(self.coefficients))

    def to_dict(self):
        return {'indices': [list(m) for m in self.indices],
                'real': np.real(self.coefficients).tolist(),
                'imag': np.imag(self.coefficients).tolist()}


def constant_test(n):
    """Psi = 1 in every variable."""
    return TestFunction.product([testfunc.ExpPoly([1.0], 0.0)] * n)


class QuotientEntry(object):
    '''
    Counterterm of the delays in `free` with the other delays of the
    diagram frozen at the nodes of a tensor rule: the table entry of a
    set of delays below the top order.

    Parameters
    ----------
        key: id of the diagram (or tree) the entry belongs to
        n: number of delay variables of that diagram
        free: positions of the free delays
        indices: multi-indices over all n positions, zero off `free`
        naive: -Phi_free(e_m), shape (|M|,) + (q,) * |frozen| + (K,)
        nodes, weights: rule of every frozen delay

    Attributes
    ----------
        extension: invariant part K (same shape as naive) or None
        kind: 'quotient' when the free lines reach the roots of the tree,
              'star' when they sit below a proper right subtree
        antichain: topmost free lines
        contracted: frozen lines inside the right subtree of the antichain
    '''

    def __init__(self, key, n, free, indices, naive, nodes, weights):
        self.key = key
        self.n = n
        self.free = frozenset(free)
        self.frozen = tuple(i for i in range(n) if i not in self.free)
        self.indices = [tuple(m) for m in indices]
        self.naive = np.asarray(naive, dtype=complex)
        self.nodes = nodes
        self.weights = weights
        self.extension = None
        self.kind = None
        self.antichain = ()
        self.contracted = ()

    @property
    def coefficients(self):
        if self.extension is None:
            return self.naive
        return self.naive + self.extension

    def apply(self, psi, keep=()):
        '''
        sum_m c_m d^m psi(0_free, s_frozen), integrated against the rule
        over the frozen delays not in `keep`.

        Returns
        ----------
            array over the nodes of the kept delays with a trailing
            component axis
        '''
        if not self.indices:
            return 0
        C = self.coefficients
        last = len(self.frozen) + 1
        s = 1.0 / self.nodes
        total = 0
        for coef, profiles in psi.terms:
            jets = np.array([coef * np.prod([profiles[i].jet(m[i])
                                             for i in self.free])
                             for m in self.indices])
            args = [C, list(range(last + 1)), jets, [0]]
            out = []
            for axis, i in enumerate(self.frozen, 1):
                if i in keep:
                    out.append(axis)
                else:
                    args.extend([profiles[i](s) * self.weights, [axis]])
            args.append(out + [last])
            total = total + np.einsum(*args)
        return total

    def to_dict(self):
        return {'parent': self.key, 'free': sorted(self.free),
                'kind': self.kind, 'antichain': list(self.antichain),
                'contracted': list(self.contracted),
                'indices': [list(m) for m in self.indices],
                'nodes': len(self.nodes),
                'invariant': self.extension is not None,
                'max_abs': float(np.max(np.abs(self.coefficients)))
                if self.naive.size else 0.0}


def describe_family(tree, family):
    '''
    Tags an entry with the right subtree below its free lines: the
    topmost free lines, the frozen lines inside that subtree, and the
    kind of cut.
    '''
    lines = set(i + 1 for i in family.free)
    family.antichain = tuple(sorted(
        v for v in lines if not set(tree.path_lines(v)[1:]) & lines))
    subtree = treealg.RightSubtree(tree, family.antichain)
    family.contracted = tuple(sorted(set(subtree.lines) - lines))
    family.kind = 'quotient' if len(subtree.lines) == tree.n else 'star'
    return family


class Renormalization(object):
    '''
    Subtracted pairing of one diagram and its counterterm, built by the
    recursion over the sets of delay variables.

    For a set D, with the other delays frozen at the rule's nodes,

        Phi_D(psi) = <U, psi>_D + sum over proper subsets D' of D
                     of <E_D', psi>

    where E_D' is the entry of D': its coefficients contracted with the
    jets of psi at s_D' = 0 and integrated over the frozen delays of D'
    that lie in D. The entry of D has c_m = -Phi_D(e_m) + K_m. The top
    set gives the counterterm, and the renormalized value is
    Phi(Psi - P Psi) + sum_m K_m d^m Psi(0). Without K this is the
    forest formula: c_m = -<U, R' e_m>.

    Entries of proper subsets come from `lookup` when one is given (a
    counterterm table filled order by order) and are computed on the
    spot otherwise.

    K is the time-translation-invariant extension ('eigen' mode). The
    amplitude components are eigenvectors of the translation generator
    with eigenvalues i E; K solves (iE - B) K = H once, and at the
    amplitude translated by t it is K e^{iEt}. Only sets holding every
    root delay carry a K. Components with E = 0 are secular and keep
    K = 0; in strict mode an InvariantError is raised for them.

    Parameters
    ----------
        pairing: SPairing
        forest: Forest; power counted from the amplitude by default
        top_order: N of the full variable set, overriding power counting
        invariance: None or 'eigen'
        strict: raise on secular components
        lookup: callable free positions -> QuotientEntry
    '''

    def __init__(self, pairing, forest=None, top_order=None, invariance=None,
                 strict=True, lookup=None):
        if invariance not in (None, 'eigen'):
            raise NotImplementedError("unknown invariance mode %r"
                                      % (invariance,))
        self.pairing = pairing
        self.n = pairing.n
        if forest is None:
            forest = Forest.from_amplitude(pairing.amplitude, top_order)
        elif top_order is not None:
            for comp in forest.components:
                forest.orders[frozenset(comp)] = top_order
        self.forest = forest
        self.top = frozenset(range(self.n))
        self.indices = forest.indices(self.top)
        self.invariance = invariance
        self.strict = strict
        self.roots = pairing.amplitude.roots
        self.label = pairing.amplitude.label
        self.lookup = lookup
        self._sets = None
        self._families = {}
        self._extension = None
        self.secular = None

    @property
    def order(self):
        return max([sum(m) for m in self.indices] or [-1])

    @property
    def width(self):
        return self.pairing.values().shape[-1]

    def family_sets(self, size=None):
        '''
        Proper subsets of the delay variables that carry a subtraction,
        only those of the given size when one is asked for.
        '''
        if self._sets is None:
            self._sets = [D for D in _subsets(self.top)
                          if D != self.top and self.forest.indices(D)]
        if size is None:
            return list(self._sets)
        return [D for D in self._sets if len(D) == size]

    def dual(self, m, D):
        """e_m in the delays of D, constant in the others."""
        b = self.forest.b
        return TestFunction.product(
            [testfunc.WindowMonomial(m[i], b) if i in D
             else testfunc.ExpPoly([1.0], 0.0) for i in range(self.n)])

    def functional(self, D, psi, shift=0.0):
        '''
        Phi_D(psi) over the node grid of the delays outside D, the
        amplitude translated by shift.
        '''
        D = frozenset(D)
        rest = [i for i in range(self.n) if i not in D]
        total = self.pairing.partial(psi, sorted(D), shift)
        for sub in self.family_sets():
            if sub < D:
                total = total + self.family(sub, shift).apply(psi, rest)
        return total

    def family(self, D, shift=0.0):
        D = frozenset(D)
        key = (D, round(float(shift), 14))
        if key not in self._families:
            if self.lookup is not None and key[1] == 0:
                self._families[key] = self.lookup(D)
            else:
                self._families[key] = self.build_family(D, shift)
        return self._families[key]

    def build_family(self, D, shift=0.0):
        '''
        Entry of the delays in D from the amplitude and the entries of
        the subsets of D.
        '''
        D = frozenset(D)
        indices = self.forest.indices(D)
        naive = [-self.functional(D, self.dual(m, D), shift)
                 for m in indices]
        rule = self.pairing.rule
        entry = QuotientEntry(self.label, self.n, D, indices, np.array(naive),
                              rule.nodes, rule.weights)
        if self.invariance == 'eigen' and set(self.roots) <= D:
            if round(float(shift), 14) == 0:
                entry.extension, _ = self._solve(
                    indices, self.generator_terms(D))
            else:
                base = self.family(D).extension
                if base is not None:
                    entry.extension = base * self._phase(shift)
        return entry

    def _phase(self, t):
        return np.exp(1j * self.pairing.amplitude.energies * t)

    def coupling(self, indices=None):
        '''
        B of the generator relation: B[m, m + e_r] = (m_r + 1) m_r over
        the root positions r.
        '''
        indices = self.indices if indices is None else indices
        position = dict((m, i) for i, m in enumerate(indices))
        B = np.zeros((len(indices),) * 2)
        for i, m in enumerate(indices):
            for r in self.roots:
                up = list(m)
                up[r] += 1
                j = position.get(tuple(up))
                if j is not None:
                    B[i, j] = (m[r] + 1) * m[r]
        return B

    def generator_terms(self, D=None, shift=0.0):
        '''
        H_m = Phi_D((1 - P_D) h_m), h_m the generator image of e_m.
        '''
        D = self.top if D is None else frozenset(D)
        b = self.forest.b
        rows = []
        for m in self.forest.indices(D):
            h = testfunc.generator_image(self.n, m, b, self.roots)
            rows.append(self.functional(D, h - self.forest.project(D, h),
                                        shift))
        return np.array(rows)

    def _solve(self, indices, H):
        energies = self.pairing.amplitude.energies
        if energies is None:
            raise InvariantError("eigen mode needs the generator's spectrum")
        B = self.coupling(indices)
        H = np.asarray(H, dtype=complex)
        flat = H.reshape(H.shape[0], -1, H.shape[-1])
        K = np.zeros(flat.shape, dtype=complex)
        secular = np.abs(energies) < ZERO_ENERGY
        eye = np.eye(B.shape[0])
        skipped = 0
        for k, E in enumerate(energies):
            if secular[k]:
                if np.any(np.abs(flat[:, :, k]) > 1e-12):
                    if self.strict:
                        raise InvariantError(
                            "component %d has zero energy but a nonzero "
                            "generator term" % k)
                    skipped += 1
                continue
            K[:, :, k] = np.linalg.solve(1j * E * eye - B, flat[:, :, k])
        if skipped:
            logger.warning("%s: %d secular components left at K = 0",
                           self.label, skipped)
        return K.reshape(H.shape), secular

    def extension(self, t=0.0):
        '''
        K at the amplitude translated by t, shape (|M|, K).
        '''
        if not self.indices or self.invariance is None:
            return np.zeros((len(self.indices), self.width), dtype=complex)
        if self._extension is None:
            self._extension, self.secular = self._solve(
                self.indices, self.generator_terms())
        return self._extension * self._phase(t)

    def naive_coefficients(self):
        if not self.indices:
            return np.zeros((0, 1), dtype=complex)
        return np.array([-self.functional(self.top, self.dual(m, self.top))
                         for m in self.indices])

    def counterterm(self):
        coefficients = self.naive_coefficients()
        if self.indices:
            coefficients = coefficients + self.extension(0.0)
        return MomentFunctional(self.indices, coefficients)

    def value(self, psi, shift=0.0):
        '''
        Renormalized pairing with psi, the amplitude translated by shift.
        '''
        rest = psi - self.forest.project(self.top, psi)
        total = self.functional(self.top, rest, shift)
        if self.indices:
            total = total + np.tensordot(psi.jet(self.indices),
                                         self.extension(shift), axes=(0, 0))
        return total

    def invariance_defect(self, psi, t):
        '''
        |value(psi) at the translated amplitude - value(T*_t psi)|.
        '''
        moved = psi.time_shift(t, self.roots)
        return np.abs(self.value(psi, t) - self.value(moved))


def invariant_extension(renormalization, t=0.0):
    """The coefficients K of the invariant extension at translation t."""
    return renormalization.extension(t)


def subtract(pairing, forest=None, top_order=None):
    '''
    The counterterm of a diagram without invariance correction.
    '''
    return Renormalization(pairing, forest, top_order).counterterm()


def _simplex_rule(n, q):
    # collapsed coordinates on {u >= 0, sum u = 1}; panel edges at the
    # transitions of the sector weights
    edges = sorted({0.0, 0.5 / n, 1.0 / n, 1.0 - 1.0 / n, 1.0 - 0.5 / n,
                    1.0})
    xs, ws = [], []
    for a, c in zip(edges[:-1], edges[1:]):
        if c - a > 1e-14:
            x, w = _legendre(q, a, c)
            xs.append(x)
            ws.append(w)
    x1 = np.concatenate(xs)
    w1 = np.concatenate(ws)
    points = np.ones((1, 1))
    weights = np.ones(1)
    for _ in range(n - 1):
        remaining = points[:, -1:]
        head = points[:, :-1]
        new = []
        for x, w in zip(x1, w1):
            new.append((np.hstack([head, remaining * x, remaining * (1 - x)]),
                        weights * w * remaining[:, 0]))
        points = np.vstack([p for p, _ in new])
        weights = np.concatenate([w for _, w in new])
    return points, weights


def sector_pairing(pairing, psi, entry=None, lam_range=(-24, 12), q=16,
                   shell=48):
    '''
    <U, R' Psi> through the sector decomposition

        int ds F = sum_A int d lam lam^{n-1} int d sigma |sigma|
                   psi(|sigma| - 1) eta_A(sigma) F(lam sigma)

    with |.| the l1 norm, F = U R' Psi and U(s) = A(1/s) prod 1/s_i^2.
    R' carries the inner subtractions of the orders stored in a table
    entry; without one R' = 1. No delay window applies.

    Returns
    ----------
        (total, dict frozenset(A) -> sector value), values of shape (K,)
    '''
    n = pairing.n
    amplitude = pairing.amplitude
    if entry is not None:
        psi = entry.forest().r_prime(psi)
    lam, w_lam = [], []
    for k in range(*lam_range):
        x, w = _legendre(q, 2.0 ** k, 2.0 ** (k + 1))
        lam.append(x)
        w_lam.append(w)
    lam = np.concatenate(lam)
    w_lam = np.concatenate(w_lam)
    r, w_r = _legendre(shell, 1.0 - testfunc.BUMP_WIDTH,
                       1.0 + testfunc.BUMP_WIDTH)
    u, w_u = _simplex_rule(n, q)
    sigma = (r[:, np.newaxis, np.newaxis] * u[np.newaxis]).reshape(-1, n)
    w_sigma = (w_r[:, np.newaxis] * r[:, np.newaxis] ** (n - 1) *
               w_u[np.newaxis]).ravel()
    norm = np.sum(sigma, axis=1)
    shell_weight = w_sigma * norm * testfunc.bump(norm - 1.0)
    eta = testfunc.partition(sigma)
    sectors = dict((A, 0) for A in eta)
    for lam_k, w_k in zip(lam, w_lam):
        s = lam_k * sigma
        values = amplitude(1.0 / s) * np.prod(1.0 / s ** 2, axis=1)[:,
                                                                    np.newaxis]
        values = values * psi(s)[:, np.newaxis]
        base = w_k * lam_k ** (n - 1) * shell_weight
        for A, weight in eta.items():
            sectors[A] = sectors[A] + np.tensordot(base * weight, values,
                                                   axes=(0, 0))
    total = sum(sectors.values())
    return total, sectors


def s_space_pairing(pairing, psi, support, q=64):
    '''
    <U, Psi> integrated directly in s for Psi supported in the box
    prod [support[0], support[1]] away from s = 0.
    '''
    n = pairing.n
    x, w = _legendre(q, *support)
    mesh = np.meshgrid(*([x] * n), indexing='ij')
    s = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack(np.meshgrid(*([w] * n), indexing='ij'),
                               axis=0).reshape(n, -1), axis=0)
    values = pairing.amplitude(1.0 / s) * np.prod(1.0 / s ** 2,
                                                  axis=1)[:, np.newaxis]
    return np.tensordot(weights * psi(s), values, axes=(0, 0))


def _local_forest(orders, free, position, components, b):
    # orders of the subsets of `free`, renumbered by position
    local = {}
    for subset, N in orders.items():
        if subset <= free:
            local[frozenset(position[i] for i in subset)] = N
    return Forest(len(free), components, local, b)


def star_consistency(table, key, free, samples=3, seed=0):
    '''
    Recomputes a table entry at a few node points of its frozen delays
    without reading the table. For a quotient entry the frozen lines are
    contracted into a quotient diagram; for a star entry they are frozen
    in the integrand glued along the right subtree below the free lines.
    Either integrand is then renormalized on its own, on the same rule.

    Parameters
    ----------
        table: CountertermTable of continuum diagrams
        key: diagram id
        free: positions of the entry's free delays

    Returns
    ----------
        (table values, recomputed values), each of shape (samples, |M|)
    '''
    entry = table[key]
    family = table.family(key, free)
    diagram = entry.diagram
    tree = diagram.tree
    free = family.free
    b = testfunc.window_width(tree.n)
    components = _components(tree)
    if family.kind == 'quotient':
        shape = friedrichs.quotient_diagram(
            diagram, family.contracted,
            dict((r, 1.0) for r in family.contracted))
        position = dict((i, shape.vertex_map[i + 1] - 1) for i in free)
        local_components = _components(shape.tree)
        roots = tuple(r - 1 for r in shape.tree.root_lines)
    else:
        subtree = treealg.RightSubtree(tree, family.antichain)
        glued = friedrichs.star_insert(None, diagram, subtree,
                                       table.model).integrand
        position = dict((i, k) for k, i in enumerate(sorted(free)))
        local_components = [tuple(sorted(position[i] for i in comp
                                         if i in free))
                            for comp in components if set(comp) & free]
        roots = tuple(position[v - 1] for v in family.antichain)
    forest = _local_forest(entry.orders, free, position, local_components, b)
    rng = np.random.RandomState(seed)
    q = len(family.nodes)
    ours, theirs = [], []
    for _ in range(samples):
        pick = tuple(rng.randint(q, size=len(family.frozen)))
        taus = dict((i + 1, family.nodes[k])
                    for i, k in zip(family.frozen, pick))
        if family.kind == 'quotient':
            f = friedrichs.quotient_diagram(diagram, family.contracted,
                                            taus).integrand(table.model)
        else:
            f = friedrichs.fix_delays(glued, taus, dict(
                (i + 1, position[i] + 1) for i in free))
        amp = _paired_amplitude(f, table.widths, roots, local_components,
                                '%s/%s' % (key, sorted(free)))
        local = Renormalization(SPairing(amp, table.window, width=b), forest)
        coefficients = dict(zip(local.indices,
                                local.naive_coefficients()[:, 0]))
        row = []
        for m in family.indices:
            local_m = [0] * len(free)
            for i in free:
                local_m[position[i]] = m[i]
            row.append(coefficients[tuple(local_m)])
        theirs.append(row)
        ours.append(family.naive[(slice(None),) + pick + (0,)])
    return np.array(ours), np.array(theirs)


class CountertermEntry(object):
    '''
    Top-order counterterm of one diagram (on the mode grid, of one tree)
    and the power counting behind it.
    '''

    def __init__(self, diagram, counterterm, orders, renormalizable,
                 top_order, tree=None, keys=None):
        self.diagram = diagram
        self.tree = diagram.tree if diagram is not None else tree
        self.counterterm = counterterm
        self.orders = dict(orders)
        self.renormalizable = renormalizable
        self.top_order = top_order
        self.keys = keys

    @property
    def key(self):
        if self.diagram is not None:
            return self.diagram.diagram_id
        return self.tree.tree_id

    diagram_id = key

    @property
    def order(self):
        return self.tree.n

    @property
    def roots(self):
        return tuple(r - 1 for r in self.tree.root_lines)

    def forest(self):
        return Forest(self.order, _components(self.tree), self.orders,
                      testfunc.window_width(self.order))

    def to_dict(self):
        return {'id': self.key,
                'order': self.order,
                'tree': self.tree.tree_id,
                'renormalizable': self.renormalizable,
                'N': self.top_order,
                'orders': dict((','.join(str(i) for i in sorted(k)), v)
                               for k, v in self.orders.items()),
                'counterterm': self.counterterm.to_dict()}


class CountertermTable(object):
    '''
    Top-order counterterms keyed by diagram (or tree) id, in insertion
    order, and the entries of the lower-order sets of delays keyed by
    (id, free positions). While a table is being filled, `stage` holds
    the order under construction and lookups only reach lower orders.
    '''

    def __init__(self, model=None, window=DEFAULT_WINDOW, widths=None,
                 grid=None):
        self.model = model
        self.window = window
        self.widths = widths
        self.grid = grid
        self.entries = {}
        self.families = {}
        self.stage = None

    def add(self, entry):
        self.entries[entry.key] = entry

    def add_family(self, family):
        self.families[(family.key, family.free)] = family

    def family(self, key, free):
        free = frozenset(free)
        if self.stage is not None and len(free) >= self.stage:
            raise MissingEntryError(key, free)
        try:
            return self.families[(key, free)]
        except KeyError:
            raise MissingEntryError(key, free)

    def lookup(self, key):
        return functools.partial(self.family, key)

    def families_of(self, key):
        return [f for (k, _), f in self.families.items() if k == key]

    def __getitem__(self, key):
        return self.entries[key]

    def __contains__(self, key):
        return key in self.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.values())

    def by_order(self, order):
        return [e for e in self if e.order == order]

    def star_defect(self):
        '''
        Largest |C_{*G} - conj(C_G)| over the diagrams of the table;
        infinite when a starred diagram is missing.
        '''
        worst = 0.0
        for entry in self:
            if entry.diagram is None:
                continue
            twin = entry.diagram.star().diagram_id
            if twin not in self:
                return np.inf
            mine = entry.counterterm.coefficients
            theirs = self[twin].counterterm.coefficients
            if mine.shape != theirs.shape:
                return np.inf
            if mine.size:
                worst = max(worst, float(np.max(np.abs(theirs -
                                                       np.conj(mine)))))
        return worst

    def to_dict(self):
        return {'window': self.window,
                'entries': [e.to_dict() for e in self],
                'families': [f.to_dict() for f in self.families.values()]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(['diagram', 'order', 'renormalizable', 'N',
                         'multi_index', 'real', 'imag'])
        for e in self:
            C = e.counterterm
            for m, c in zip(C.indices, C.coefficients):
                c = complex(np.ravel(c)[0])
                writer.writerow([e.key, e.order, int(e.renormalizable),
                                 e.top_order, ' '.join(str(k) for k in m),
                                 repr(c.real), repr(c.imag)])
        return out.getvalue()


def fill_table(table, items):
    '''
    Fills a table stage by stage. Stage k adds the entries of k free
    delays of every item of higher order, then the top entries of the
    items of order k; every lookup reads entries of earlier stages.

    Parameters
    ----------
        table: CountertermTable
        items: (Renormalization looking up the table, DirectedTree,
               callable Renormalization -> CountertermEntry) triples
    '''
    top = max([ren.n for ren, _, _ in items] or [0])
    try:
        for stage in range(1, top + 1):
            table.stage = stage
            for ren, tree, make_entry in items:
                if ren.n > stage:
                    for D in ren.family_sets(stage):
                        table.add_family(describe_family(
                            tree, ren.build_family(D)))
                elif ren.n == stage:
                    entry = make_entry(ren)
                    table.add(entry)
                    logger.info("%s (order %d): N=%d", entry.key, stage,
                                entry.top_order)
    finally:
        table.stage = None
    return table


def _pairs_for(model):
    grid = modespace.build_grid(1, 1, 1.0, model.mu)
    if model.occupation_terms:
        n0, b = model.occupation_terms[0]
        occ = modespace.occupation(grid, {'kind': 'gaussian', 'n0': n0,
                                          'b': b})
    else:
        occ = modespace.occupation(grid, {'kind': 'vacuum'})
    return wick.PairingTable(occ)


def diagrams_of_order(model, order, connected=True, renormalizable_only=False):
    pairs = _pairs_for(model)
    out = []
    for tree in treealg.enumerate_trees(order, connected=connected):
        out.extend(friedrichs.enumerate_diagrams(tree, pairs,
                                                 renormalizable_only))
    return out


def renormalize_diagram(diagram, model, widths, window=DEFAULT_WINDOW,
                        top_order=None, invariance=None):
    pairing = SPairing(continuum_amplitude(diagram, model, widths), window)
    return Renormalization(pairing, top_order=top_order,
                           invariance=invariance)


def resolved_renormalization(diagram, model, momenta, window=DEFAULT_WINDOW,
                             order=INVARIANT_ORDER):
    '''
    Eigen-mode renormalization of a diagram at fixed external momenta,
    the sets holding a root delay subtracted to the given order.
    '''
    amp = resolved_amplitude(diagram, model, momenta)
    forest = Forest.from_amplitude(amp, top_order=order, root_order=order)
    return Renormalization(SPairing(amp, window), forest, invariance='eigen')


def translation_defect(ren, psis, times=(0.5, 1.0)):
    '''
    Largest invariance defect over test functions and translations,
    relative to max(1, |value|). K is solved once and carried along.
    '''
    worst = 0.0
    for psi in psis:
        scale = max(1.0, float(np.max(np.abs(ren.value(psi)))))
        for t in times:
            worst = max(worst, float(np.max(ren.invariance_defect(psi, t)))
                        / scale)
    return worst


def time_translation_defect(diagram, model, psis, times=(0.5, 1.0),
                            window=DEFAULT_WINDOW, samples=3, seed=0):
    '''
    translation_defect of a diagram at sampled non-secular external
    momenta.
    '''
    momenta = sample_momenta(diagram, model, samples, seed=seed)
    ren = resolved_renormalization(diagram, model, momenta, window)
    return translation_defect(ren, psis, times)


def _diagram_entry(diagram, ren):
    return CountertermEntry(diagram, ren.counterterm(), ren.forest.orders,
                            diagram.renormalizable, ren.order)


def counterterm_recursion(model, max_order, widths, window=DEFAULT_WINDOW,
                          connected=True, renormalizable_only=False,
                          diagrams=None):
    '''
    Counterterms of every diagram up to max_order, order by order: the
    entries of the lower-order sets of delays of each diagram go into
    the table first and the higher orders read them back.

    Parameters
    ----------
        model: ContinuumModel
        widths: widths of the Gaussian test function on external momenta
        window: delay window T
        diagrams: explicit diagram list instead of the enumeration

    Returns
    ----------
        CountertermTable
    '''
    table = CountertermTable(model, window, widths)
    if diagrams is None:
        diagrams = []
        for order in range(1, max_order + 1):
            diagrams.extend(diagrams_of_order(model, order, connected,
                                              renormalizable_only))
    items = []
    for diagram in sorted(diagrams, key=lambda d: (d.tree.n, d.diagram_id)):
        pairing = SPairing(continuum_amplitude(diagram, model, widths),
                           window)
        ren = Renormalization(pairing,
                              lookup=table.lookup(diagram.diagram_id))
        items.append((ren, diagram.tree,
                      functools.partial(_diagram_entry, diagram)))
    return fill_table(table, items)


def grid_window(n):
    # the subtracted constants vanish beyond the window transition
    return 2.0 / testfunc.window_width(n) + 2.0


def grid_forest(tree):
    '''
    Order-zero subtraction of every set of delays inside a component.
    '''
    components = _components(tree)
    orders = dict((subset, 0) for comp in components
                  for subset in _subsets(comp))
    return Forest(tree.n, components, orders, testfunc.window_width(tree.n))


def _tree_entry(tree, keys, ren):
    return CountertermEntry(None, ren.counterterm(), ren.forest.orders, True,
                            ren.order, tree=tree, keys=keys)


def grid_recursion(dyn, max_order=1, t_obs=0.0, q=PANEL_NODES,
                   budget=GRID_BUDGET, connected=False):
    '''
    Counterterm table of the labelled shootless trees on the mode grid,
    one component per kernel entry, in eigen mode with the secular
    entries left at K = 0.

    Parameters
    ----------
        dyn: Dynamics
        max_order: largest number of vertices
        t_obs: observation time of the tree operators
        q: nodes per panel of the delay rule
        budget: bound on components times rule points
    '''
    table = CountertermTable(None, None, grid=dyn.grid)
    items = []
    for order in range(1, max_order + 1):
        for tree in treealg.enumerate_trees(order, connected=connected):
            amp = grid_amplitude(dyn, tree, t_obs)
            pairing = SPairing(amp, grid_window(order), q=q)
            size = len(pairing.rule) ** order * amp.energies.size
            if size > budget:
                raise CapacityError(size, budget)
            ren = Renormalization(pairing, grid_forest(tree),
                                  invariance='eigen', strict=False,
                                  lookup=table.lookup(tree.tree_id))
            items.append((ren, tree,
                          functools.partial(_tree_entry, tree, amp.keys)))
    return fill_table(table, items)


def tree_lambda(table, entry):
    '''
    Lambda_T paired with Psi = 1: the top counterterm plus the entries
    whose free delays hold every root delay, frozen delays integrated
    out. Entries with a root among the frozen delays are left out.

    Returns
    ----------
        (K,) component values
    '''
    one = constant_test(entry.order)
    total = entry.counterterm(one)
    roots = set(entry.roots)
    for family in table.families_of(entry.key):
        if roots <= family.free:
            total = total + family.apply(one)
    return total


def assemble_lambda(order, table):
    '''
    sum over the trees of at most `order` vertices of Lambda_T / n_T!,
    the counterterm part of I> next to the cyclic vector.

    Parameters
    ----------
        order: largest tree order
        table: CountertermTable from grid_recursion

    Returns
    ----------
        NormalPolynomial
    '''
    if table.grid is None:
        raise ValueError("Lambda is assembled from a mode-grid table")
    total = wick.NormalPolynomial(table.grid)
    for entry in table:
        if entry.order > order:
            continue
        part = _unpack(entry.keys, tree_lambda(table, entry), table.grid)
        total = total + part * (1.0 / math.factorial(entry.order))
    return total


def designated_diagram(model, widths, order=2):
    '''
    The connected diagram of the given order with the largest degree of
    divergence, ties broken by id.
    '''
    best = None
    for diagram in diagrams_of_order(model, order):
        amp = continuum_amplitude(diagram, model, widths)
        omega = divergence_degree(amp, range(amp.n))[0]
        if best is None or omega > best[0]:
            best = (omega, diagram)
    return best[1]


def window_drift(ren, psi, windows=(DEFAULT_WINDOW, 2 * DEFAULT_WINDOW),
                 subtract=True):
    '''
    Renormalized (or plain) pairings at the given windows and the
    relative change between the first two.
    '''
    values = []
    for T in windows:
        pairing = SPairing(ren.pairing.amplitude, T)
        if subtract:
            other = Renormalization(pairing, ren.forest,
                                    invariance=ren.invariance)
            values.append(other.value(psi))
        else:
            values.append(pairing.pair(psi))
    drift = np.abs(values[1] - values[0]) / np.maximum(np.abs(values[1]),
                                                        1e-300)
    return values, float(np.max(drift))


def component_split(diagram):
    '''
    The one-vertex diagrams of a diagram on a forest of isolated
    vertices, multiplicity one each.
    '''
    if diagram.lines or any(diagram.tree.parent):
        raise ValueError("only diagrams without lines split into vertices")
    out = []
    for v in diagram.tree.vertices:
        externals = [(1, j) for w, j in diagram.externals if w == v]
        out.append(friedrichs.FriedrichsDiagram(
            treealg.DirectedTree((0,)), [diagram.branches[v - 1]], [],
            externals))
    return out


def factorization_defect(diagram, model, widths, window=DEFAULT_WINDOW):
    '''
    |C_G - C_G1 (x) C_G2| for a diagram on two isolated vertices, both
    sides with multiplicity one and no invariance correction.
    '''
    single = friedrichs.FriedrichsDiagram(diagram.tree, diagram.branches,
                                          diagram.lines, diagram.externals)
    whole = renormalize_diagram(single, model, widths, window).counterterm()
    parts = [renormalize_diagram(d, model, widths, window).counterterm()
             for d in component_split(diagram)]
    lookup = [dict((m, c[0]) for m, c in zip(p.indices, p.coefficients))
              for p in parts]
    worst = 0.0
    for m, c in zip(whole.indices, whole.coefficients):
        expected = lookup[0][(m[0],)] * lookup[1][(m[1],)]
        worst = max(worst, abs(c[0] - expected))
    if len(whole.indices) != len(lookup[0]) * len(lookup[1]):
        return np.inf
    return worst


def reality_defect(diagram, model, widths, window=DEFAULT_WINDOW):
    '''
    |C_{*G} - conj(C_G)|, the counterterm of the starred diagram computed
    from its own integrand.
    '''
    mine = renormalize_diagram(diagram, model, widths, window).counterterm()
    twin = renormalize_diagram(diagram.star(), model, widths,
                               window).counterterm()
    if mine.indices != twin.indices:
        return np.inf
    if not mine.indices:
        return 0.0
    return float(np.max(np.abs(twin.coefficients -
                               np.conj(mine.coefficients))))


def cluster_exponent(diagram, model, widths, psi, scales=(10, 20, 40, 80),
                     window=DEFAULT_WINDOW, subset=None):
    '''
    Decay exponent of the renormalized pairing against the length a of
    a plane-wave translation of part of the external lines.

    Returns
    ----------
        (exponent, fit spread, values)
    '''
    externals = len(diagram.externals)
    if subset is None:
        subset = list(range(externals // 2))
    reference = continuum_amplitude(diagram, model, widths)
    forest = Forest.from_amplitude(reference)
    values = []
    for a in scales:
        amp = continuum_amplitude(diagram, model, widths,
                                  translate=(subset, a))
        ren = Renormalization(SPairing(amp, window), forest)
        values.append(abs(ren.value(psi)[0]))
    slope, spread = gausscalc.power_exponent(values, scales)
    return -slope, spread, values


def cluster_decay(diagram, model, widths, psi, scales, subset=None,
                  window=DEFAULT_WINDOW):
    '''
    cluster_exponent over positive translation lengths, with a warning
    when the magnitudes do not decrease along the scales.
    '''
    if subset is not None:
        subset = sorted(set(subset))
        if not subset or len(subset) >= len(diagram.externals):
            raise ValueError("the translated lines must be a proper "
                             "nonempty subset of the externals")
    if any(a <= 0 for a in scales):
        raise ValueError("translation lengths must be positive")
    exponent, spread, values = cluster_exponent(diagram, model, widths, psi,
                                                scales, window, subset)
    if any(b > a for a, b in zip(values, values[1:])):
        logger.warning("cluster magnitudes of %s are not monotone: %s",
                       diagram.diagram_id, values)
    return exponent, spread, values


def renormalized(diagram, model, widths, psi, window=DEFAULT_WINDOW,
                 table=None):
    '''
    <R_G[f], Psi>: the subtracted pairing plus the counterterm. With a
    table holding the diagram, its power counting and the entries of
    its lower-order sets are read from the table.
    '''
    if table is None or diagram.diagram_id not in table:
        return renormalize_diagram(diagram, model, widths,
                                   window).value(psi)
    entry = table[diagram.diagram_id]
    pairing = SPairing(continuum_amplitude(diagram, model, table.widths),
                       table.window)
    ren = Renormalization(pairing, entry.forest(),
                          lookup=table.lookup(diagram.diagram_id))
    return ren.value(psi)


def _unpack(keys, values, grid):
    # (K,) component values back into a NormalPolynomial
    poly = wick.NormalPolynomial(grid)
    start = 0
    for key in keys:
        size = grid.size ** len(key)
        poly.terms[key] = np.asarray(values[start:start + size]).reshape(
            (grid.size,) * len(key))
        start += size
    return poly


def _first_order(dyn, t_obs=0.0):
    tree = treealg.DirectedTree((0,))
    pairing = SPairing(grid_amplitude(dyn, tree, t_obs), grid_window(1))
    return Renormalization(pairing, grid_forest(tree), invariance='eigen',
                           strict=False)


def stationary_state(dyn, t=0.0):
    '''
    The order-one renormalized evolution from the infinite past to t on
    the mode grid, paired with the constant test function.

    Returns
    ----------
        (NormalPolynomial, NormalPolynomial mask of secular entries)
    '''
    ren = _first_order(dyn, t)
    values = ren.value(constant_test(1))
    keys = ren.pairing.amplitude.keys
    state = _unpack(keys, values, dyn.grid)
    secular = _unpack(keys, ren.secular.astype(float), dyn.grid)
    return state, secular


def _masked_gap(left, right, mask):
    worst = 0.0
    for key in set(left.terms) | set(right.terms) | set(mask.terms):
        a = left.terms.get(key, 0)
        b = right.terms.get(key, 0)
        keep = mask.terms.get(key, 0) == 0
        gap = np.abs(np.asarray(a) - np.asarray(b)) * keep
        if np.size(gap):
            worst = max(worst, float(np.max(gap)))
    return worst


def closed_form(dyn):
    '''
    i kernel / E entry by entry: the order-one state from the infinite
    past, secular entries set to i kernel.
    '''
    expected = wick.NormalPolynomial(dyn.grid)
    for key, kernel in dyn.lint.items():
        energy = wick.energy_tensor(dyn.grid, key)
        safe = np.where(np.abs(energy) < ZERO_ENERGY, 1.0, energy)
        expected.terms[key] = 1j * kernel / safe
    return expected


def property_checks(dyn, times=(0.5, 1.0, 2.0)):
    '''
    Order-one checks of the renormalized evolution on the grid, secular
    entries excluded:

      stationarity: e^{-L0 t} X_0 against the value computed at t;
      evolution: X_t against int_0^t e^{-L0 s} Lint ds + X_0;
      closed form: X_0 against i kernel / E;
      lambda: the windowed tree integral plus the assembled Lambda
      against the closed form.

    Returns
    ----------
        dict of worst residuals
    '''
    X0, secular = stationary_state(dyn)
    out = {'stationarity': 0.0, 'evolution': 0.0}
    expected = closed_form(dyn)
    out['closed_form'] = _masked_gap(X0, expected, secular)
    bare = _first_order(dyn).pairing
    windowed = _unpack(bare.amplitude.keys, bare.pair(constant_test(1)),
                       dyn.grid)
    lam = assemble_lambda(1, grid_recursion(dyn, 1))
    out['lambda'] = _masked_gap(windowed + lam, expected, secular)
    for t in times:
        Xt, _ = stationary_state(dyn, t)
        moved = wick.free_evolve(X0, -t)
        out['stationarity'] = max(out['stationarity'],
                                  _masked_gap(Xt, moved, secular))
        evolved = dyn.integrated_lint(t, 0.0) + X0
        out['evolution'] = max(out['evolution'],
                               _masked_gap(moved, evolved, secular))
    return out
