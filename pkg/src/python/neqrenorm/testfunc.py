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
import logging
import math

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate

logger = logging.getLogger(__name__)

# half width of the bump psi
BUMP_WIDTH = 0.1


def _flat(x):
    # exp(-1/x) for x > 0, zero elsewhere
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _flat_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    a = _flat(x)
    b = _flat(1.0 - np.asarray(x, dtype=float))
    return a / (a + b)


def smooth_step_prime(x):
    x = np.asarray(x, dtype=float)
    a, b = _flat(x), _flat(1.0 - x)
    return (_flat_prime(x) * b + a * _flat_prime(1.0 - x)) / (a + b) ** 2


def window_width(n):
    """b of the window for n delay variables."""
    return 1.0 / (3.0 * n)


def window(s, b):
    '''
    The window xi: equal to 1 on [0, b/2], to 0 from b on.
    '''
    s = np.asarray(s, dtype=float)
    return 1.0 - smooth_step((s - 0.5 * b) / (0.5 * b))


def window_prime(s, b):
    s = np.asarray(s, dtype=float)
    return -smooth_step_prime((s - 0.5 * b) / (0.5 * b)) * (2.0 / b)


def _bump_shape(u):
    u = np.asarray(u, dtype=float) / BUMP_WIDTH
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@functools.lru_cache(maxsize=None)
def _bump_norm():
    value, _ = integrate.quad(lambda u: float(_bump_shape(u)),
                              -BUMP_WIDTH, BUMP_WIDTH, epsabs=1e-15,
                              epsrel=1e-13, limit=200)
    logger.debug("bump normalization %.15g", value)
    return value


def bump(u):
    '''
    psi: smooth, supported on |u| <= 0.1, unit integral.
    '''
    return _bump_shape(u) / _bump_norm()


def smear(x, lam):
    '''
    delta_lam(x - lam) = (x / lam^2) psi(x / lam - 1); its integral over
    lam in (0, inf) is 1 for every x > 0.
    '''
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return x / lam ** 2 * bump(x / lam - 1.0)


def _sector_step(x, n):
    # 0 below 1/(2n), 1 above 1/n
    return smooth_step((np.asarray(x, dtype=float) - 0.5 / n) * (2.0 * n))


def partition(sigma):
    '''
    Sector weights eta_A(sigma) over the nonempty subsets A of the
    variables; they sum to one wherever sigma has a positive entry.

    Parameters
    ----------
        sigma: (B, n) non-negative points

    Returns
    ----------
        dict frozenset(A) -> (B,) weights
    '''
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    n = sigma.shape[1]
    ratio = sigma / np.sum(sigma, axis=1, keepdims=True)
    large = _sector_step(ratio, n)
    out = {}
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            weight = np.ones(sigma.shape[0])
            for i in range(n):
                weight = weight * (large[:, i] if i in subset
                                   else 1.0 - large[:, i])
            out[frozenset(subset)] = weight
    return out


class Profile(object):
    '''
    A function of one delay variable s >= 0 with known Taylor data at 0.
    '''

    def __call__(self, s):
        raise NotImplementedError()

    def taylor(self, order):
        """Taylor coefficients a_0 .. a_order at s = 0."""
        raise NotImplementedError()

    def jet(self, k):
        """The k-th derivative at 0."""
        return math.factorial(k) * self.taylor(k)[k]


class ExpPoly(Profile):
    '''
    poly(s) * exp(-alpha s), coefficients in increasing degree.
    '''

    def __init__(self, coeffs, alpha):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.alpha = float(alpha)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return npoly.polyval(s, self.coeffs) * np.exp(-self.alpha * s)

    def taylor(self, order):
        exp_series = np.array([(-self.alpha) ** k / math.factorial(k)
                               for k in range(order + 1)])
        out = npoly.polymul(self.coeffs, exp_series)[:order + 1]
        return np.pad(out, (0, order + 1 - out.size))

    def __repr__(self):
        return "ExpPoly(%s, %g)" % (list(self.coeffs), self.alpha)


class WindowMonomial(Profile):
    '''
    s^m xi_b(s) / m!: the windowed monomial dual to the m-th derivative.
    '''

    def __init__(self, m, b):
        self.m = int(m)
        self.b = float(b)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return s ** self.m * window(s, self.b) / math.factorial(self.m)

    def taylor(self, order):
        out = np.zeros(order + 1)
        if self.m <= order:
            out[self.m] = 1.0 / math.factorial(self.m)
        return out

    def __repr__(self):
        return "WindowMonomial(%d, %g)" % (self.m, self.b)


class GeneratorProfile(Profile):
    '''
    s^2 d/ds of the windowed monomial s^m xi_b(s) / m!: the generator of
    the delay translation applied to the dual basis.
    '''

    def __init__(self, m, b):
        self.m = int(m)
        self.b = float(b)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        m = self.m
        value = s ** (m + 2) * window_prime(s, self.b)
        if m:
            value = value + m * s ** (m + 1) * window(s, self.b)
        return value / math.factorial(m)

    def taylor(self, order):
        out = np.zeros(order + 1)
        if self.m and self.m + 1 <= order:
            out[self.m + 1] = float(self.m) / math.factorial(self.m)
        return out


class TimeShifted(Profile):
    '''
    phi(s / (1 - s t)) for s < 1/t and 0 beyond: a delay translated by t
    seen through s = 1/tau.
    '''

    def __init__(self, profile, t):
        if t < 0:
            raise ValueError("translations act for t >= 0")
        self.profile = profile
        self.t = float(t)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.t == 0:
            return self.profile(s)
        inside = s < 1.0 / self.t
        safe = np.where(inside, s, 0.0)
        return np.where(inside, self.profile(safe / (1.0 - safe * self.t)),
                        0.0)

    def taylor(self, order):
        a = self.profile.taylor(order)
        inner = np.array([0.0] + [self.t ** (j - 1)
                                  for j in range(1, order + 1)])
        out = np.zeros(order + 1)
        power = np.array([1.0])
        for k in range(order + 1):
            padded = np.pad(power, (0, max(0, order + 1 - power.size)))
            out += a[k] * padded[:order + 1]
            power = npoly.polymul(power, inner)[:order + 1]
        return out


def total_degree_ball(k, N):
    """Multi-indices of length k with |m| <= N; empty for N < 0."""
    if N < 0:
        return []
    return [m for m in itertools.product(range(N + 1), repeat=k)
            if sum(m) <= N]


def multi_indices(n, groups):
    '''
    Product of total-degree balls, one per group.

    Parameters
    ----------
        n: number of delay variables
        groups: list of (positions, N)

    Returns
    ----------
        list of length-n tuples, zero outside the groups
    '''
    out = [tuple([0] * n)]
    for positions, N in groups:
        ball = total_degree_ball(len(positions), N)
        if not ball:
            return []
        grown = []
        for m in out:
            for part in ball:
                m = list(m)
                for p, k in zip(positions, part):
                    m[p] = k
                grown.append(tuple(m))
        out = grown
    return out


class TestFunction(object):
    '''
    A finite sum of products of one-variable profiles.

    Parameters
    ----------
        n: number of delay variables
        terms: list of (coef, tuple of n Profiles)
    '''

    __test__ = False

    def __init__(self, n, terms=()):
        self.n = int(n)
        self.terms = [(complex(c), tuple(p)) for c, p in terms]
        for _, profiles in self.terms:
            if len(profiles) != self.n:
                raise ValueError("need one profile per variable")

    @classmethod
    def product(cls, profiles, coef=1.0):
        return cls(len(profiles), [(coef, tuple(profiles))])

    def __call__(self, s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        total = np.zeros(s.shape[0], dtype=complex)
        for coef, profiles in self.terms:
            value = np.full(s.shape[0], coef)
            for i, p in enumerate(profiles):
                value = value * p(s[:, i])
            total += value
        return total

    def derivative(self, m):
        """d^m Psi at 0 for a multi-index m."""
        total = 0j
        for coef, profiles in self.terms:
            value = coef
            for p, k in zip(profiles, m):
                value *= p.jet(k)
            total += value
        return total

    def jet(self, indices):
        return np.array([self.derivative(m) for m in indices])

    def __add__(self, other):
        if other.n != self.n:
            raise ValueError("test functions of different arity")
        return TestFunction(self.n, self.terms + other.terms)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, factor):
        return TestFunction(self.n, [(c * factor, p) for c, p in self.terms])

    def __neg__(self):
        return self.scaled(-1.0)

    @property
    def is_zero(self):
        return not self.terms

    def project(self, positions, indices, b):
        '''
        P_D: Taylor projection in the variables at `positions` onto the
        windowed monomials of the given multi-indices.
        '''
        positions = tuple(positions)
        terms = []
        for coef, profiles in self.terms:
            for m in indices:
                value = coef
                for p in positions:
                    value *= profiles[p].jet(m[p])
                if value == 0:
                    continue
                new = list(profiles)
                for p in positions:
                    new[p] = WindowMonomial(m[p], b)
                terms.append((value, tuple(new)))
        return TestFunction(self.n, terms)

    def time_shift(self, t, positions):
        '''
        T*_t: every profile at the given positions translated by t.
        '''
        terms = []
        for coef, profiles in self.terms:
            new = list(profiles)
            for p in positions:
                new[p] = TimeShifted(profiles[p], t)
            terms.append((coef, tuple(new)))
        return TestFunction(self.n, terms)


def dual_monomial(n, m, b):
    """e_m: product of windowed monomials."""
    return TestFunction.product([WindowMonomial(k, b) for k in m])


def generator_image(n, m, b, roots):
    '''
    h_m = sum over root positions r of s_r^2 d/ds_r e_m.
    '''
    terms = []
    for r in roots:
        profiles = [WindowMonomial(k, b) for k in m]
        profiles[r] = GeneratorProfile(m[r], b)
        terms.append((1.0, tuple(profiles)))
    return TestFunction(n, terms)


def probes(n, count, seed=0, zero_order=0):
    '''
    Random product probes poly(s) exp(-alpha s) per variable. With
    zero_order k > 0 every profile vanishes to order k at 0.
    '''
    rng = np.random.RandomState(seed)
    out = []
    for _ in range(count):
        profiles = []
        for _ in range(n):
            coeffs = rng.uniform(-1.0, 1.0, size=3)
            coeffs[0] = rng.uniform(0.5, 1.5)
            coeffs = np.concatenate([np.zeros(zero_order), coeffs])
            profiles.append(ExpPoly(coeffs, rng.uniform(0.5, 2.0)))
        out.append(TestFunction.product(profiles))
    logger.debug("%d test functions on %d variables (seed %d, zero order %d)",
                 count, n, seed, zero_order)
    return out
