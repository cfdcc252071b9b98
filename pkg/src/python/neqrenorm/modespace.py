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
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Generator species in normal-ordering order:
# a+_+ (creation, plus branch), a_+, a_-, a+_- (creation, minus branch).
A_DAG_PLUS, A_PLUS, A_MINUS, A_DAG_MINUS = 0, 1, 2, 3
SPECIES_NAMES = ('a+_+', 'a_+', 'a_-', 'a+_-')
# +1 for creation symbols
CREATION_SIGN = (1, -1, -1, 1)
BRANCH = (1, 1, -1, -1)
# free phase exp(i * THETA * (omega - mu) * t) under e^{L0 t}
THETA = (1, -1, 1, -1)
# the * involution swaps branches and conjugates
STAR = (3, 2, 1, 0)

_CODE = {(1, 1): A_DAG_PLUS, (-1, 1): A_PLUS,
         (-1, -1): A_MINUS, (1, -1): A_DAG_MINUS}


def species_code(sign, branch):
    """Species code of the generator with creation sign and branch."""
    return _CODE[(int(sign), int(branch))]


class ModeGrid(object):
    '''
    Finite set of momentum modes with a common quadrature weight.

    Parameters
    ----------
        modes: array of shape (M, d)
        weight: momentum-space volume per mode
        mu: chemical potential, must be negative
        spacing: lattice spacing when the modes lie on a symmetric grid;
                 enables exact integer momentum conservation
    '''

    def __init__(self, modes, weight, mu, spacing=None):
        modes = np.asarray(modes, dtype=float)
        if modes.ndim == 1:
            modes = modes.reshape(-1, 1)
        if modes.shape[0] == 0:
            raise ValueError("a mode grid needs at least one mode")
        if not weight > 0:
            raise ValueError("mode weight must be positive")
        if not mu < 0:
            raise ValueError("chemical potential must be negative, got %r" % mu)
        if len(set(map(tuple, np.round(modes, 12)))) != modes.shape[0]:
            raise ValueError("modes must be pairwise distinct")
        self.modes = modes
        self.weight = float(weight)
        self.mu = float(mu)
        self.spacing = spacing
        if spacing is not None:
            self.cells = np.rint(2.0 * modes / spacing).astype(int)
        else:
            self.cells = None

    @property
    def size(self):
        return self.modes.shape[0]

    @property
    def d(self):
        return self.modes.shape[1]

    @property
    def omega(self):
        return 0.5 * np.sum(self.modes ** 2, axis=1)

    @property
    def energy(self):
        """omega(k) - mu, strictly positive on every mode."""
        return self.omega - self.mu

    def conservation(self, signs):
        '''
        Kronecker delta of signed momentum conservation.

        Parameters
        ----------
            signs: sequence of +1/-1, one per mode index

        Returns
        ----------
            boolean array of shape (M,)*len(signs), True where
            sum_j signs[j] * k_j = 0
        '''
        rank = len(signs)
        size = self.size
        coords = self.cells if self.cells is not None else self.modes
        total = np.zeros((size,) * rank + (self.d,), dtype=coords.dtype)
        for axis, sign in enumerate(signs):
            shape = [1] * rank + [self.d]
            shape[axis] = size
            total = total + sign * coords.reshape(shape)
        if self.cells is not None:
            return np.all(total == 0, axis=-1)
        return np.all(np.abs(total) < 1e-9, axis=-1)

    def to_dict(self):
        return {'modes': self.modes.tolist(), 'weight': self.weight,
                'mu': self.mu, 'spacing': self.spacing}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def build_grid(d, extent, spacing, mu):
    '''
    Uniform grid centered at the origin.

    Parameters
    ----------
        d: spatial dimension
        extent: number of points per axis
        spacing: distance between neighbouring points
        mu: chemical potential (< 0)

    Returns
    ----------
        ModeGrid with extent**d modes and weight spacing**d
    '''
    if extent < 1 or d < 1:
        raise ValueError("extent and dimension must be at least 1")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if not mu < 0:
        raise ValueError("chemical potential must be negative, got %r" % mu)
    axis = (np.arange(extent) - (extent - 1) / 2.0) * spacing
    modes = np.array(list(itertools.product(axis, repeat=d)), dtype=float)
    grid = ModeGrid(modes, spacing ** d, mu, spacing=spacing)
    logger.debug("built grid d=%d extent=%d (%d modes)", d, extent, grid.size)
    return grid


class OccupationField(object):
    """Occupation numbers n(k) of the reference Gaussian state."""

    def __init__(self, grid, kind, values, **params):
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("occupation numbers must be finite")
        if np.any(values < 0):
            raise ValueError("occupation numbers must be non-negative")
        self.grid = grid
        self.kind = kind
        self.values = values
        self.params = params

    def __getitem__(self, k):
        return self.values[k]

    @property
    def is_vacuum(self):
        return not np.any(self.values)

    def gaussian_terms(self):
        '''
        n(k) as a list of (amplitude, width) pairs with
        n(k) = sum amplitude * exp(-width * |k|^2).
        '''
        if self.kind == 'vacuum':
            return []
        if self.kind == 'gaussian':
            return [(self.params['n0'], self.params['b'])]
        raise NotImplementedError(
            "occupation '%s' has no Gaussian form" % self.kind)


def _vacuum(grid, spec):
    return np.zeros(grid.size), {}


def _planck(grid, spec):
    beta = float(spec.get('beta', 1.0))
    if not beta > 0:
        raise ValueError("inverse temperature must be positive")
    eps = grid.energy
    if np.any(eps <= 0):
        raise ValueError("Planck occupation needs omega - mu > 0")
    x = np.exp(-beta * eps)
    return x / (1.0 - x), {'beta': beta}


def _gaussian(grid, spec):
    n0, b = float(spec.get('n0', 0.3)), float(spec.get('b', 1.0))
    if n0 < 0 or b < 0:
        raise ValueError("Gaussian occupation needs n0 >= 0 and b >= 0")
    k2 = np.sum(grid.modes ** 2, axis=1)
    return n0 * np.exp(-b * k2), {'n0': n0, 'b': b}


OCCUPATION_FORMS = {
    'vacuum': _vacuum,
    'planck': _planck,
    'gaussian': _gaussian,
}


def occupation(grid, form):
    '''
    Evaluates an occupation form on a grid.

    Parameters
    ----------
        grid: ModeGrid
        form: form name, a dict with key 'kind', or an OccupationSpec

    Returns
    ----------
        OccupationField
    '''
    if isinstance(form, str):
        spec = {'kind': form}
    elif isinstance(form, dict):
        spec = dict(form)
    else:
        spec = dict(vars(form))
    kind = spec.get('kind', 'vacuum')
    if kind not in OCCUPATION_FORMS:
        raise NotImplementedError("unknown occupation form '%s'" % kind)
    values, params = OCCUPATION_FORMS[kind](grid, spec)
    return OccupationField(grid, kind, values, **params)


@dataclass(frozen=True)
class InteractionKernel:
    '''
    Gaussian two-body kernel
    v(p1,p2|q1,q2) = c * exp(-a (|p1|^2 + |p2|^2 + |q1|^2 + |q2|^2)).
    '''
    c: complex = 0.5
    a: float = 0.3

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("kernel width must be positive")

    # bosonic symmetry under p1<->p2 and q1<->q2 holds for the whole family
    symmetric = True

    @property
    def is_real(self):
        return complex(self.c).imag == 0.0

    def value(self, p1, p2, q1, q2):
        total = sum(np.sum(np.asarray(p, dtype=float) ** 2, axis=-1)
                    for p in (p1, p2, q1, q2))
        return self.c * np.exp(-self.a * total)

    def conj(self):
        return InteractionKernel(complex(self.c).conjugate(), self.a)

    def grid_kernel(self, grid):
        '''
        Kernel tensor on a grid.

        Returns
        ----------
            complex array T[p1, p2, q1, q2] = v * delta(p1 + p2 = q1 + q2)
        '''
        k2 = np.sum(grid.modes ** 2, axis=1)
        gauss = np.exp(-self.a * k2)
        tensor = self.c * np.einsum('i,j,k,l->ijkl', gauss, gauss, gauss, gauss)
        delta = grid.conservation((1, 1, -1, -1))
        return np.where(delta, tensor, 0.0).astype(complex)


def _rho0_terms(left, right):
    # rho0(a^left a^right) with +1 meaning the creation symbol; returns
    # (constant, coefficient of n)
    if left == 1 and right == -1:
        return (0.0, 1.0)
    if left == -1 and right == 1:
        return (1.0, 1.0)
    return (0.0, 0.0)


def pairing_terms(x, y):
    '''
    Two-point function of the doubled reference state for species x
    standing left of species y, as (constant, coefficient of n(k)).
    The full pairing is (constant + coefficient * n(k)) delta(k - k').
    '''
    sx, sy = CREATION_SIGN[x], CREATION_SIGN[y]
    bx, by = BRANCH[x], BRANCH[y]
    if bx < 0 and by < 0:
        return _rho0_terms(sx, sy)
    if bx > 0 and by > 0:
        return _rho0_terms(-sy, -sx)
    if bx > 0 and by < 0:
        return _rho0_terms(-sx, sy)
    return _rho0_terms(-sy, sx)


def pairing(x, y, n):
    const, slope = pairing_terms(x, y)
    return const + slope * np.asarray(n, dtype=float)


def propagator_species(orientation, g_plus, g_minus):
    """Species of the upper and lower ends of an oriented line."""
    upper = species_code(-orientation * g_plus, g_plus)
    lower = species_code(orientation * g_minus, g_minus)
    return upper, lower


def propagator(orientation, g_plus, g_minus, n):
    '''
    Pairing coefficient of a line in a Friedrichs diagram.

    Parameters
    ----------
        orientation: +1 or -1
        g_plus: branch sign at the upper end
        g_minus: branch sign at the lower end
        n: occupation value(s) at the line momentum

    Returns
    ----------
        scalar or array drawn from {0, n, 1 + n}; the delta function
        is left to the caller
    '''
    for sign in (orientation, g_plus, g_minus):
        if sign not in (1, -1):
            raise ValueError("signs must be +1 or -1")
    upper, lower = propagator_species(orientation, g_plus, g_minus)
    return pairing(upper, lower, n)


class PropagatorTable(object):
    """All propagator entries of an occupation field."""

    def __init__(self, occ):
        self.occ = occ
        self.entries = {}
        for key in itertools.product((1, -1), repeat=3):
            self.entries[key] = propagator(key[0], key[1], key[2], occ.values)

    def __getitem__(self, key):
        return self.entries[key]
