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


class NeqRenormError(Exception):
    """Base class for every error raised by the engine."""


class CapacityError(NeqRenormError):
    """A dense representation would exceed the configured budget."""

    def __init__(self, size, budget):
        self.size = size
        self.budget = budget
        super(CapacityError, self).__init__(
            "dense size %d exceeds budget %d" % (size, budget))


class QuadratureError(NeqRenormError):
    '''
    Raised when a quadrature misses its tolerance.

    Parameters
    ----------
        estimate: achieved error estimate
        tolerance: requested tolerance
        tag: identifies the offending tree, diagram or sector
    '''

    def __init__(self, estimate, tolerance, tag=None):
        self.estimate = estimate
        self.tolerance = tolerance
        self.tag = tag
        msg = "quadrature error estimate %.3e above tolerance %.3e" % (
            estimate, tolerance)
        if tag is not None:
            msg += " (%s)" % (tag,)
        super(QuadratureError, self).__init__(msg)


class NonIntegrableError(NeqRenormError):
    """The real part of a Gaussian exponent is not positive definite."""


class ConditioningError(NeqRenormError):
    """A moment solve is too ill-conditioned to trust."""

    def __init__(self, condition, limit):
        self.condition = condition
        self.limit = limit
        super(ConditioningError, self).__init__(
            "condition number %.3e above %.3e" % (condition, limit))


class InvariantError(NeqRenormError):
    """A generator relation of the invariant extension is inconsistent."""


class MissingEntryError(NeqRenormError):
    """A counterterm table lookup found no entry for a lower-order set."""

    def __init__(self, key, free):
        self.key = key
        self.free = tuple(sorted(free))
        super(MissingEntryError, self).__init__(
            "no table entry for %s on delays %s" % (key, self.free))
