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
import json
import logging

import numpy as np
import scipy.linalg

from neqrenorm import wick
from neqrenorm.errors import NonIntegrableError

logger = logging.getLogger(__name__)


class GaussianTerm(object):
    '''
    coef * prod(prefactor) * exp(-sum_c z_c^T P(tau) z_c + sum_c L[c] . z_c
    + kappa . tau) with P(tau) = A0 + sum_i tau_i A_tau[i].

    z_c is the c-th spatial component of all m momentum variables.

    Parameters
    ----------
        coef: complex coefficient
        A0: (m, m) complex symmetric array
        A_tau: (n_tau, m, m) complex symmetric arrays
        kappa: (n_tau,) complex, the momentum-free part of the exponent
        L: (d, m) complex linear part, zero by default
        prefactor: sequence of (component, (m,) vector) linear forms
    '''

    def __init__(self, coef, A0, A_tau, kappa=None, L=None, prefactor=()):
        self.coef = complex(coef)
        self.A0 = np.asarray(A0, dtype=complex)
        m = self.A0.shape[0]
        self.A_tau = np.asarray(A_tau, dtype=complex).reshape(-1, m, m)
        n_tau = self.A_tau.shape[0]
        if kappa is None:
            kappa = np.zeros(n_tau)
        self.kappa = np.asarray(kappa, dtype=complex).reshape(n_tau)
        self.L = None if L is None else np.asarray(L, dtype=complex)
        self.prefactor = tuple((int(c), np.asarray(u, dtype=complex))
                               for c, u in prefactor)

    def linear(self, d):
        if self.L is None:
            return np.zeros((d, self.A0.shape[0]), dtype=complex)
        return self.L

    def copy(self):
        return GaussianTerm(self.coef, self.A0.copy(), self.A_tau.copy(),
                            self.kappa.copy(),
                            None if self.L is None else self.L.copy(),
                            self.prefactor)

    def to_dict(self):
        def pack(a):
            return {'real': np.real(a).tolist(), 'imag': np.imag(a).tolist()}
        return {'coef': [self.coef.real, self.coef.imag],
                'A0': pack(self.A0), 'A_tau': pack(self.A_tau),
                'kappa': pack(self.kappa),
                'L': None if self.L is None else pack(self.L),
                'prefactor': [[c, pack(u)] for c, u in self.prefactor]}


class GaussianIntegrand(object):
    '''
    A finite sum of Gaussian terms over m momentum variables in d
    dimensions with linear delta constraints sum_j C[r, j] z_j = 0.

    Parameters
    ----------
        m: number of momentum variables
        d: spatial dimension
        external: boolean mask of length m; external variables stay free
        constraints: (n_c, m) array of constraint rows
        terms: list of GaussianTerm
        n_tau: number of delay variables
    '''

    def __init__(self, m, d, external, constraints, terms, n_tau):
        self.m = int(m)
        self.d = int(d)
        self.external = np.asarray(external, dtype=bool).reshape(self.m)
        self.constraints = np.asarray(constraints, dtype=float).reshape(-1,
                                                                        self.m)
        self.terms = list(terms)
        self.n_tau = int(n_tau)

    @property
    def internal(self):
        return np.flatnonzero(~self.external)

    @property
    def externals(self):
        return np.flatnonzero(self.external)

    def __add__(self, other):
        if (self.m, self.d, self.n_tau) != (other.m, other.d, other.n_tau):
            raise ValueError("integrands live on different variables")
        if not (np.array_equal(self.external, other.external) and
                np.array_equal(self.constraints, other.constraints)):
            raise ValueError("integrands have different constraints")
        return GaussianIntegrand(self.m, self.d, self.external,
                                 self.constraints, self.terms + other.terms,
                                 self.n_tau)

    def scaled(self, factor):
        terms = []
        for term in self.terms:
            term = term.copy()
            term.coef *= factor
            terms.append(term)
        return GaussianIntegrand(self.m, self.d, self.external,
                                 self.constraints, terms, self.n_tau)

    def evaluate(self, z, tau):
        '''
        Pointwise value of the integrand, constraints ignored.

        Parameters
        ----------
            z: (..., m, d) momenta
            tau: (n_tau,) delays
        '''
        z = np.asarray(z, dtype=float)
        tau = np.asarray(tau, dtype=float).reshape(self.n_tau)
        total = 0
        for term in self.terms:
            P = term.A0 + np.tensordot(tau, term.A_tau, axes=(0, 0))
            quad = np.einsum('...ic,ij,...jc->...', z, P, z)
            lin = np.einsum('cj,...jc->...', term.linear(self.d), z)
            value = term.coef * np.exp(-quad + lin + np.dot(term.kappa, tau))
            for c, u in term.prefactor:
                value = value * np.einsum('j,...j->...', u, z[..., c])
            total = total + value
        return total

    def to_dict(self):
        return {'m': self.m, 'd': self.d, 'external': self.external.tolist(),
                'constraints': self.constraints.tolist(),
                'n_tau': self.n_tau,
                'terms': [t.to_dict() for t in self.terms]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class _Elimination(object):
    # z = S y + E x with y the free internal variables and x the externals
    def __init__(self, f):
        internal = f.internal
        externals = f.externals
        rows = f.constraints
        m = f.m
        block = rows[:, internal]
        rank = _rank(block)
        chosen = np.zeros(0, dtype=int)
        pivots = np.zeros(0, dtype=int)
        if rank:
            _, _, row_perm = scipy.linalg.qr(block.T, pivoting=True)
            chosen = np.sort(row_perm[:rank])
            _, _, col_perm = scipy.linalg.qr(block[chosen], pivoting=True)
            pivots = np.sort(col_perm[:rank])
        pivot_vars = internal[pivots]
        free_vars = np.setdiff1d(internal, pivot_vars)
        S = np.zeros((m, free_vars.size))
        E = np.zeros((m, externals.size))
        S[free_vars, np.arange(free_vars.size)] = 1.0
        E[externals, np.arange(externals.size)] = 1.0
        jacobian = 1.0
        if rank:
            used = rows[chosen]
            cp = used[:, pivot_vars]
            inv = np.linalg.inv(cp)
            S[pivot_vars] = -inv.dot(used[:, free_vars])
            E[pivot_vars] = -inv.dot(used[:, externals])
            jacobian = abs(np.linalg.det(cp)) ** (-f.d)
        # dependent rows reduce to relations among the external momenta
        others = np.setdiff1d(np.arange(rows.shape[0]), chosen)
        residual = np.zeros((others.size, m))
        residual[:, externals] = rows[others].dot(E)
        self.residual = residual[np.any(np.abs(residual) > 1e-12, axis=1)]
        self.S = S
        self.E = E
        self.jacobian = jacobian
        self.rank = rank
        self.free = free_vars
        self.pivots = pivot_vars


def _rank(block):
    if block.size == 0:
        return 0
    return int(np.linalg.matrix_rank(block))


def _sqrt_det(Q):
    # det(Q)^{1/2} continued from Im Q = 0: Q = R + iJ with R positive
    # definite gives sqrt(det R) * prod sqrt(1 + i mu_j)
    R = 0.5 * (Q + np.swapaxes(Q, -1, -2)).real
    J = 0.5 * (Q + np.swapaxes(Q, -1, -2)).imag
    try:
        G = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NonIntegrableError("real part of the quadratic form is not "
                                 "positive definite on the integration space")
    Ginv = np.linalg.inv(G)
    M = Ginv @ J @ np.swapaxes(Ginv, -1, -2)
    mu = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    root = np.prod(np.diagonal(G, axis1=-2, axis2=-1), axis=-1)
    return root * np.prod(np.sqrt(1.0 + 1j * mu), axis=-1)


def _moment(forms, mean, cov):
    # E[prod_j u_j . z_{c_j}] for a Gaussian with per-component mean
    total = 0
    for pairing in wick.partial_pairings(len(forms)):
        used = set(itertools.chain.from_iterable(pairing))
        value = 1
        for a, b in pairing:
            ca, ua = forms[a]
            cb, ub = forms[b]
            if ca != cb:
                value = 0
                break
            value = value * np.einsum('i,...ij,j->...', ua, cov, ub)
        else:
            for j in range(len(forms)):
                if j not in used:
                    c, u = forms[j]
                    value = value * np.einsum('i,...i->...', u, mean[..., c])
        total = total + value
    return total


class TauFunction(object):
    '''
    Closed form of the momentum integral of a GaussianIntegrand: a sum of
    c * det(Q(tau))^{-d/2} * exp(b(tau, p_ext)) terms. The square root is
    continued from the point where Q is real positive definite.
    '''

    def __init__(self, integrand):
        self.integrand = integrand
        self.elimination = _Elimination(integrand)

    @property
    def n_tau(self):
        return self.integrand.n_tau

    @property
    def residual_constraints(self):
        """Constraints among external momenta only, left to the caller."""
        return self.elimination.residual

    def __call__(self, tau, p_ext=None):
        return eval_tau(self, tau, p_ext)

    def evaluate(self, tau, p_ext=None):
        '''
        Parameters
        ----------
            tau: (n_tau,) or (B, n_tau) delays
            p_ext: (m_ext, d) external momenta, zeros by default

        Returns
        ----------
            complex scalar or (B,) array
        '''
        f = self.integrand
        el = self.elimination
        tau = np.asarray(tau, dtype=float)
        single = tau.ndim <= 1
        tau = tau.reshape(-1, f.n_tau)
        d = f.d
        if p_ext is None:
            p_ext = np.zeros((el.E.shape[1], d))
        x = np.asarray(p_ext, dtype=float).reshape(el.E.shape[1], d)
        S, E = el.S, el.E
        n_free = S.shape[1]
        total = np.zeros(tau.shape[0], dtype=complex)
        for term in f.terms:
            P = term.A0[np.newaxis] + np.einsum('bi,ijk->bjk', tau, term.A_tau)
            P = 0.5 * (P + np.swapaxes(P, -1, -2))
            L = term.linear(d)
            zx = E.dot(x)
            const = (-np.einsum('jc,bjk,kc->b', zx, P, zx) +
                     np.einsum('cj,jc->', L, zx) + tau.dot(term.kappa))
            if n_free == 0:
                value = term.coef * np.exp(const)
                for c, u in term.prefactor:
                    value = value * u.dot(zx[:, c])
                total += value
                continue
            Q = S.T[np.newaxis] @ P @ S[np.newaxis]
            # b_c = S^T L_c - 2 S^T P E x_c, one column per component
            b = (S.T.dot(L.T)[np.newaxis] -
                 2.0 * S.T[np.newaxis] @ P @ zx[np.newaxis])
            sol = np.linalg.solve(Q, b)
            exponent = const + 0.25 * np.einsum('bjc,bjc->b', b, sol)
            root = _sqrt_det(Q)
            value = (term.coef * np.pi ** (n_free * d / 2.0) *
                     root ** (-d) * np.exp(exponent))
            if term.prefactor:
                mean = 0.5 * sol
                cov = 0.5 * np.linalg.inv(Q)
                forms = []
                shift = []
                for c, u in term.prefactor:
                    forms.append((c, S.T.dot(u)))
                    shift.append(u.dot(zx[:, c]))
                value = value * _shifted_moment(forms, shift, mean, cov)
            total += value
        total = total * el.jacobian
        return total[0] if single else total

    def power_exponent(self, direction, scales=(10.0, 100.0, 1000.0),
                       p_ext=None):
        '''
        Slope of log|F(lam * direction)| against log lam.
        '''
        direction = np.asarray(direction, dtype=float)
        scales = np.asarray(scales, dtype=float)
        values = np.abs(self.evaluate(np.outer(scales, direction), p_ext))
        slope, _ = np.polyfit(np.log(scales), np.log(values), 1)
        return float(slope)

    def to_dict(self):
        el = self.elimination
        return {'integrand': self.integrand.to_dict(),
                'S': el.S.tolist(), 'E': el.E.tolist(),
                'jacobian': el.jacobian}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _shifted_moment(forms, shift, mean, cov):
    # linear forms u.z = (S^T u).y + const; expand the constants in
    total = 0
    n = len(forms)
    for subset in itertools.product((0, 1), repeat=n):
        picked = [forms[j] for j in range(n) if subset[j]]
        value = np.prod([shift[j] for j in range(n) if not subset[j]]
                        or [1.0])
        total = total + value * _moment(picked, mean, cov)
    return total


def integrate_momenta(f):
    '''
    Integrates the internal momenta of f in closed form.

    Parameters
    ----------
        f: GaussianIntegrand

    Returns
    ----------
        TauFunction; raises NonIntegrableError when the real part of the
        reduced quadratic form is not positive definite (checked on
        evaluation) or the constraints are over-determined
    '''
    return TauFunction(f)


def eval_tau(F, tau, p_ext=None):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("delays must be non-negative")
    return F.evaluate(tau, p_ext)


def translate_phase(f, subset, a):
    '''
    Multiplies f by exp(i a sum_{r in subset} p_r^1), a plane wave in the
    first momentum component of the chosen external variables.

    Parameters
    ----------
        f: GaussianIntegrand
        subset: indices into f.externals
        a: translation length
    '''
    subset = sorted(set(int(r) for r in subset))
    externals = f.externals
    if not subset or len(subset) >= externals.size:
        raise ValueError("translation needs a proper nonempty subset of "
                         "the external lines")
    terms = []
    for term in f.terms:
        term = term.copy()
        L = term.linear(f.d).copy()
        for r in subset:
            L[0, externals[r]] += 1j * a
        term.L = L
        terms.append(term)
    return GaussianIntegrand(f.m, f.d, f.external, f.constraints, terms,
                             f.n_tau)


def with_test_function(f, widths):
    '''
    Pairs the external momenta with the Gaussian test function
    prod_r exp(-widths[r] |p_r|^2); the result has no external variables.
    '''
    externals = f.externals
    widths = np.broadcast_to(np.asarray(widths, dtype=float),
                             externals.shape)
    terms = []
    for term in f.terms:
        term = term.copy()
        term.A0[externals, externals] += widths
        terms.append(term)
    return GaussianIntegrand(f.m, f.d, np.zeros(f.m, dtype=bool),
                             f.constraints, terms, f.n_tau)


def grid_sum(f, tau, p_ext=None, spacing=0.1, extent=4.0):
    '''
    Lattice sum of f over its internal momenta: every internal component
    on spacing * Z within [-extent, extent], integer constraint rows as
    Kronecker deltas divided by spacing**d. External momenta must lie on
    the lattice.
    '''
    internal = f.internal
    externals = f.externals
    d = f.d
    axis = np.arange(-extent, extent + 0.5 * spacing, spacing)
    z = np.zeros((axis.size ** (internal.size * d), f.m, d))
    if p_ext is not None:
        z[:, externals, :] = np.asarray(p_ext, dtype=float)
    grids = np.meshgrid(*([axis] * (internal.size * d)), indexing='ij')
    for slot, grid in enumerate(grids):
        z[:, internal[slot // d], slot % d] = grid.ravel()
    keep = np.ones(z.shape[0], dtype=bool)
    cells = np.rint(z / spacing)
    for row in f.constraints:
        total = np.einsum('j,bjc->bc', row, cells)
        keep &= np.all(total == 0, axis=1)
    values = f.evaluate(z[keep], tau)
    rank = _rank(f.constraints[:, internal])
    weight = spacing ** ((internal.size - rank) * d)
    return complex(np.sum(values) * weight)


def power_exponent(values, scales):
    '''
    Least-squares slope of log|values| against log scales, with the
    relative residual of the fit.
    '''
    logs = np.log(np.abs(np.asarray(values)))
    x = np.log(np.asarray(scales, dtype=float))
    coeffs, residual = np.polyfit(x, logs, 1, full=True)[:2]
    spread = float(np.sqrt(residual[0] / x.size)) if residual.size else 0.0
    return float(coeffs[0]), spread
