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
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

logger = logging.getLogger(__name__)

WORKERS_ENV = 'NEQRENORM_WORKERS'


@dataclass
class GridSpec:
    d: int = 1
    extent: int = 2
    spacing: float = 1.0
    mu: float = -1.0


@dataclass
class OccupationSpec:
    # vacuum, planck or gaussian
    kind: str = 'vacuum'
    beta: float = 1.0
    n0: float = 0.3
    b: float = 1.0


@dataclass
class KernelSpec:
    c: float = 0.5
    a: float = 0.3


@dataclass
class RunConfig:
    '''
    Everything a run depends on. Two runs with equal configs produce
    equal reports when bit reproducibility is requested.
    '''
    grid: GridSpec = field(default_factory=GridSpec)
    occupation: OccupationSpec = field(default_factory=OccupationSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    order: int = 2
    n_max: int = 4
    tolerance: float = 1e-10
    window: float = 50.0
    probes: int = 5
    seed: int = 0
    subtraction: bool = True
    # continuum dimension used by the renormalization and cluster stages
    renorm_d: int = 1
    cluster_d: int = 3
    test_width: float = 0.5
    bit_repro: bool = False
    output: str = 'neqrenorm-out'

    @classmethod
    def from_dict(cls, data):
        '''
        Builds a config from nested dictionaries.

        Parameters
        ----------
            data: mapping with the field names of RunConfig; nested
                  sections for grid, occupation and kernel

        Returns
        ----------
            a RunConfig, unknown keys raise ValueError
        '''
        sections = {'grid': GridSpec, 'occupation': OccupationSpec,
                    'kernel': KernelSpec}
        known = set(f.name for f in fields(cls))
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ValueError("unknown config key '%s'" % key)
            if key in sections:
                kwargs[key] = _build_section(sections[key], value, key)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            data = json.load(handle)
        logger.debug("loaded config from %s", path)
        return cls.from_dict(data)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def digest(self):
        return hashlib.sha256(self.to_json().encode('utf-8')).hexdigest()

    def override(self, **changes):
        '''
        Returns a copy with the given top level fields replaced.
        Entries set to None are ignored so parsed CLI flags can be
        passed through unchanged.
        '''
        data = asdict(self)
        for key, value in changes.items():
            if value is None:
                continue
            if key not in data:
                raise ValueError("unknown config key '%s'" % key)
            data[key] = value
        return RunConfig.from_dict(data)


def _build_section(kind, value, name):
    if isinstance(value, kind):
        return value
    known = set(f.name for f in fields(kind))
    for key in value:
        if key not in known:
            raise ValueError("unknown key '%s' in section '%s'" % (key, name))
    return kind(**value)


def worker_count():
    """Number of worker processes, taken from the environment."""
    raw = os.environ.get(WORKERS_ENV, '1')
    try:
        count = int(raw)
    except ValueError:
        raise ValueError("%s must be an integer, got '%s'" % (WORKERS_ENV, raw))
    return max(1, count)
