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

import numpy as np
import scipy.sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, expm_multiply

from neqrenorm import modespace, wick
from neqrenorm.errors import CapacityError, QuadratureError
from neqrenorm.modespace import (A_DAG_MINUS, A_DAG_PLUS, A_MINUS, A_PLUS,
                                 CREATION_SIGN)

logger = logging.getLogger(__name__)

# bound on dim**2, the size of the density-array space
DEFAULT_BUDGET = 2 ** 18


class DoubledRep(object):
    '''
    The doubled algebra realized on dim x dim arrays. Minus-branch
    generators multiply from the left by a(k) / a+(k); plus-branch
    generators multiply from the right by a+(k) / a(k).

    Parameters
    ----------
        grid: ModeGrid
        n_max: largest occupation kept per mode
        budget: bound on dim**2
    '''

    def __init__(self, grid, n_max, budget=DEFAULT_BUDGET):
        if n_max < 1:
            raise ValueError("n_max must be at least 1")
        dim = (n_max + 1) ** grid.size
        if dim * dim > budget:
            raise CapacityError(dim * dim, budget)
        self.grid = grid
        self.n_max = n_max
        self.dim = dim
        single = scipy.sparse.diags(np.sqrt(np.arange(1, n_max + 1)), 1)
        eye = scipy.sparse.identity(n_max + 1)
        self.lowering = []
        for k in range(grid.size):
            factors = [eye] * grid.size
            factors[k] = single
            op = factors[0]
            for factor in factors[1:]:
                op = scipy.sparse.kron(op, factor)
            self.lowering.append(np.asarray(op.todense(), dtype=complex))
        self.occupations = np.array(
            list(itertools.product(range(n_max + 1), repeat=grid.size)))
        self._scale = 1.0 / np.sqrt(grid.weight)

    def annihilator(self, k):
        return self.lowering[k] * self._scale

    def creator(self, k):
        return self.lowering[k].T * self._scale

    def number(self, k):
        """b+(k) b(k), the occupation operator of one mode."""
        return self.lowering[k].T.dot(self.lowering[k])

    def apply(self, code, k, X):
        '''
        Applies one doubled generator to an array.

        Parameters
        ----------
            code: species code
            k: mode index
            X: dim x dim array

        Returns
        ----------
            dim x dim array
        '''
        if code not in _ACTIONS:
            raise NotImplementedError("unknown generator species %r" % code)
        return _ACTIONS[code](self, k, X)

    def identity(self):
        return np.eye(self.dim, dtype=complex)


def _a_minus(rep, k, X):
    return rep.annihilator(k).dot(X)


def _a_dag_minus(rep, k, X):
    return rep.creator(k).dot(X)


def _a_plus(rep, k, X):
    return X.dot(rep.creator(k))


def _a_dag_plus(rep, k, X):
    return X.dot(rep.annihilator(k))


_ACTIONS = {
    A_MINUS: _a_minus,
    A_DAG_MINUS: _a_dag_minus,
    A_PLUS: _a_plus,
    A_DAG_PLUS: _a_dag_plus,
}


def represent(grid, n_max, budget=DEFAULT_BUDGET):
    return DoubledRep(grid, n_max, budget)


class StateVector(object):
    '''
    An element of the array space together with the occupation field of
    the Gaussian reference state it was built from.
    '''

    def __init__(self, rep, array, occ):
        self.rep = rep
        self.array = np.asarray(array, dtype=complex)
        self.occ = occ

    def pairing(self, X=None):
        """<X> = trace(X); the state itself when X is None."""
        if X is None:
            X = self.array
        return complex(np.trace(X))

    def star(self):
        return StateVector(self.rep, self.array.conj().T, self.occ)


def thermal_state(rep, occ):
    '''
    Truncated Gaussian reference state: a product over modes of
    geometric weights x^n with x = n(k) / (1 + n(k)).

    Parameters
    ----------
        rep: DoubledRep
        occ: OccupationField on rep.grid

    Returns
    ----------
        StateVector with unit trace
    '''
    ratio = occ.values / (1.0 + occ.values)
    weights = np.ones(rep.dim)
    for k in range(rep.grid.size):
        weights = weights * ratio[k] ** rep.occupations[:, k]
    weights = weights / np.sum(weights)
    return StateVector(rep, np.diag(weights), occ)


def vacuum_state(rep):
    return thermal_state(rep, modespace.occupation(rep.grid, 'vacuum'))


class LiouvillePair(object):
    '''
    L0 X = -i [H0, X] and Lint X = -i [V, X] on the array space, with the
    coupling lam. H0 is diagonal in the occupation basis.
    '''

    def __init__(self, rep, h0, v, lam):
        self.rep = rep
        self.h0 = h0
        self.v = v
        self.lam = float(lam)
        self.energies = np.real(np.diag(h0))
        self.gaps = self.energies[:, np.newaxis] - self.energies[np.newaxis, :]
        self._superops = None

    def apply_l0(self, X):
        return -1j * (self.h0.dot(X) - X.dot(self.h0))

    def apply_lint(self, X):
        return -1j * (self.v.dot(X) - X.dot(self.v))

    def free(self, X, t):
        """e^{L0 t} X."""
        return np.exp(-1j * self.gaps * t) * X

    def interaction(self, X, s):
        """Lint(s) X = e^{-L0 s} Lint e^{L0 s} X."""
        phase = np.exp(-1j * self.gaps * s)
        return np.conj(phase) * self.apply_lint(phase * X)

    def superoperators(self):
        '''
        Sparse matrices of L0 and Lint acting on row-major flattened
        arrays.
        '''
        if self._superops is None:
            eye = scipy.sparse.identity(self.rep.dim, format='csr')
            v = scipy.sparse.csr_matrix(self.v)
            l0 = scipy.sparse.diags(-1j * self.gaps.ravel()).tocsr()
            lint = -1j * (scipy.sparse.kron(v, eye) -
                          scipy.sparse.kron(eye, v.T))
            self._superops = (l0, lint.tocsr())
        return self._superops

    def evolve(self, X, t):
        """e^{(L0 + lam Lint) t} X, the full evolution."""
        l0, lint = self.superoperators()
        gen = (l0 + self.lam * lint) * t
        out = expm_multiply(gen, np.asarray(X, dtype=complex).ravel())
        return out.reshape(X.shape)


def _h0(rep):
    eps = rep.grid.energy
    h0 = np.zeros((rep.dim, rep.dim), dtype=complex)
    for k in range(rep.grid.size):
        h0 += eps[k] * rep.number(k)
    return h0


def _interaction(rep, kernel):
    # V = w sum_T T[p1,p2,q1,q2] b+(p1) b+(p2) b(q1) b(q2)
    tensor = kernel.grid_kernel(rep.grid)
    b = rep.lowering
    v = np.zeros((rep.dim, rep.dim), dtype=complex)
    for p1, p2, q1, q2 in np.argwhere(tensor != 0):
        v += tensor[p1, p2, q1, q2] * (
            b[p1].T.dot(b[p2].T).dot(b[q1]).dot(b[q2]))
    return rep.grid.weight * v


def liouvillian(rep, kernel, lam=1.0):
    '''
    Builds the free and interaction parts of the von Neumann operator.

    Parameters
    ----------
        rep: DoubledRep
        kernel: InteractionKernel
        lam: coupling constant

    Returns
    ----------
        LiouvillePair
    '''
    h0 = _h0(rep)
    v = _interaction(rep, kernel)
    logger.debug("liouvillian on dim=%d, |V|=%.3e", rep.dim, np.abs(v).max())
    return LiouvillePair(rep, h0, v, lam)


class DysonTerm(LinearOperator):
    '''
    The order-n coefficient in lam of the interaction-picture evolution
    U(t2, t1), an iterated time-ordered integral of Lint(s).

    After every application error_estimate holds the achieved error
    bound of the last evaluation.
    '''

    def __init__(self, pair, order, t2, t1, method='hierarchy',
                 tolerance=1e-10):
        size = pair.rep.dim ** 2
        super(DysonTerm, self).__init__(dtype=complex, shape=(size, size))
        if not np.isfinite(t1) or not np.isfinite(t2):
            raise ValueError("Dyson terms need a finite interval; use "
                             "adiabatic_sweep for t' -> -inf")
        if t2 < t1:
            raise ValueError("need t'' >= t', got (%r, %r)" % (t2, t1))
        if order < 0 or order > 3:
            raise ValueError("Dyson order must lie in 0..3, got %d" % order)
        if method not in _DYSON_METHODS:
            raise NotImplementedError("unknown Dyson method '%s'" % method)
        self.pair = pair
        self.order = order
        self.t2 = float(t2)
        self.t1 = float(t1)
        self.method = method
        self.tolerance = tolerance
        self.error_estimate = 0.0

    def apply(self, X):
        X = np.asarray(X, dtype=complex)
        if self.order == 0:
            self.error_estimate = 0.0
            return X.copy()
        if self.t2 == self.t1:
            self.error_estimate = 0.0
            return np.zeros_like(X)
        return _DYSON_METHODS[self.method](self, X)

    def _matvec(self, x):
        dim = self.pair.rep.dim
        return self.apply(np.reshape(x, (dim, dim))).ravel()


def _solve_hierarchy(term, X, rtol):
    pair, order = term.pair, term.order
    dim = pair.rep.dim

    def rhs(s, y):
        blocks = y.reshape(order + 1, dim, dim)
        out = np.zeros_like(blocks)
        for k in range(1, order + 1):
            out[k] = pair.interaction(blocks[k - 1], s)
        return out.ravel()

    y0 = np.zeros((order + 1, dim, dim), dtype=complex)
    y0[0] = X
    sol = solve_ivp(rhs, (term.t1, term.t2), y0.ravel(), method='DOP853',
                    rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise QuadratureError(float('nan'), term.tolerance, tag=sol.message)
    return sol.y[:, -1].reshape(order + 1, dim, dim)[order]


def _hierarchy(term, X):
    # y_k' = Lint(s) y_{k-1}, y_k(t1) = 0; the order-n term is y_n(t2)
    fine = _solve_hierarchy(term, X, term.tolerance)
    coarse = _solve_hierarchy(term, X, term.tolerance * 100)
    term.error_estimate = float(np.max(np.abs(fine - coarse)))
    scale = max(1.0, float(np.max(np.abs(fine))))
    logger.debug("dyson order %d on [%g, %g]: error estimate %.2e",
                 term.order, term.t1, term.t2, term.error_estimate)
    if term.error_estimate > 1e3 * term.tolerance * scale:
        raise QuadratureError(term.error_estimate, term.tolerance,
                              tag='dyson order %d' % term.order)
    return fine


def _van_loan(term, X):
    # exp of the block-bidiagonal [[L0, Lint], [0, L0], ...]: the corner
    # block holds e^{L0 dt} times the ordered integral
    pair, order = term.pair, term.order
    dim = pair.rep.dim
    size = dim * dim
    l0, lint = pair.superoperators()
    blocks = [[None] * (order + 1) for _ in range(order + 1)]
    for i in range(order + 1):
        blocks[i][i] = l0
        if i < order:
            blocks[i][i + 1] = lint
    big = scipy.sparse.bmat(blocks, format='csc')
    vec = np.zeros((order + 1) * size, dtype=complex)
    vec[order * size:] = pair.free(X, term.t1).ravel()
    out = expm_multiply(big * (term.t2 - term.t1), vec)
    term.error_estimate = 0.0
    return pair.free(out[:size].reshape(dim, dim), -term.t2)


_DYSON_METHODS = {
    'hierarchy': _hierarchy,
    'expm': _van_loan,
}


def dyson_term(pair, order, t2, t1, method='hierarchy', tolerance=1e-10):
    return DysonTerm(pair, order, t2, t1, method, tolerance)


def two_point(rep, state, g1, g2):
    '''
    trace(g1 g2 state) for generators given as (species code, mode).

    Parameters
    ----------
        rep: DoubledRep
        state: StateVector
        g1, g2: (code, mode index), g1 standing on the left

    Returns
    ----------
        complex
    '''
    inner = rep.apply(g2[0], g2[1], state.array)
    return complex(np.trace(rep.apply(g1[0], g1[1], inner)))


def adiabatic_sweep(pair, order, X, windows=(5.0, 10.0, 20.0), t=0.0,
                    method='expm'):
    '''
    Dyson terms on growing windows [t - T, t] with Cauchy differences
    between consecutive windows. No limit is claimed.

    Returns
    ----------
        list of dicts with keys window, norm, cauchy, error_estimate
    '''
    rows = []
    previous = None
    for window in windows:
        term = dyson_term(pair, order, t, t - window, method=method)
        value = term.apply(X)
        row = {'window': float(window),
               'norm': float(np.linalg.norm(value)),
               'cauchy': None,
               'error_estimate': term.error_estimate}
        if previous is not None:
            row['cauchy'] = float(np.linalg.norm(value - previous))
        rows.append(row)
        previous = value
    return rows


def _wick_apply(rep, species, kernel, pairs, rho):
    # :g1 rest: rho = g1 (:rest: rho) - sum_j c(g1, g_j) :rest without j: rho
    if not species:
        return kernel * rho
    out = np.zeros_like(rho)
    if not np.any(kernel):
        return out
    head = species[0]
    for k in range(rep.grid.size):
        sub = kernel[k]
        if np.any(sub):
            out += rep.apply(head, k,
                             _wick_apply(rep, species[1:], sub, pairs, rho))
    for j in range(1, len(species)):
        if not pairs.nonzero(head, species[j]):
            continue
        diagonal = np.diagonal(kernel, axis1=0, axis2=j)
        contracted = diagonal.dot(pairs(head, species[j]))
        rest = species[1:j] + species[j + 1:]
        out -= _wick_apply(rep, rest, contracted, pairs, rho)
    return out


def realize(rep, poly, state):
    '''
    Image of a normal-ordered polynomial acting on the reference state.

    Parameters
    ----------
        rep: DoubledRep
        poly: NormalPolynomial on rep.grid (not batched)
        state: StateVector of the reference Gaussian state

    Returns
    ----------
        dim x dim array
    '''
    if poly.batch is not None:
        raise ValueError("cannot realize a batched polynomial")
    pairs = wick.PairingTable(state.occ)
    out = np.zeros((rep.dim, rep.dim), dtype=complex)
    for species, kernel in poly.items():
        # creators leftmost so annihilators act first on the state
        order = sorted(range(len(species)),
                       key=lambda j: (CREATION_SIGN[species[j]] < 0, j))
        codes = tuple(species[j] for j in order)
        out += _wick_apply(rep, codes, np.transpose(kernel, order),
                           pairs, state.array)
    return out
