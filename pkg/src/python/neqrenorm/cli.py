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
import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time

import numpy as np

from neqrenorm import (corrdyn, fockoracle, friedrichs, renorm, testfunc,
                       treealg, verify)
from neqrenorm._version__ import __version__
from neqrenorm.config import RunConfig
from neqrenorm.errors import NeqRenormError

logger = logging.getLogger(__name__)

ORACLE_WINDOW = (0.0, 1.0)
SWEEP_WINDOWS = (5.0, 10.0, 20.0)


def parse_grid(text):
    '''
    "d,extent" or "d,extent,spacing".
    '''
    parts = text.split(',')
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(
            "grid must read d,extent[,spacing], got '%s'" % text)
    try:
        out = {'d': int(parts[0]), 'extent': int(parts[1])}
        if len(parts) == 3:
            out['spacing'] = float(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError("bad grid '%s'" % text)
    return out


def load_config(args):
    '''
    The config file (or the defaults) with the command line flags
    applied on top.
    '''
    path = getattr(args, 'config', None)
    config = RunConfig.load(path) if path else RunConfig()
    changes = {'order': args.order, 'n_max': args.n_max,
               'window': args.window, 'probes': args.probes,
               'seed': args.seed, 'output': args.output}
    if args.bit_repro:
        changes['bit_repro'] = True
    if args.no_subtraction:
        changes['subtraction'] = False
    if args.grid is not None:
        changes['grid'] = dataclasses.replace(config.grid, **args.grid)
    return config.override(**changes)


def write_report(config, name, text):
    os.makedirs(config.output, exist_ok=True)
    path = os.path.join(config.output, name)
    with open(path, 'w') as handle:
        handle.write(text)
    logger.info("wrote %s", path)
    return path


def _stamp(config, payload):
    payload = dict(payload)
    payload['config'] = config.digest()
    payload['version'] = __version__
    return json.dumps(payload, sort_keys=True, indent=1)


def cmd_trees(args):
    '''
    Lists the right trees with n vertices, checked against the
    generate-and-filter oracle.
    '''
    trees = treealg.enumerate_trees(args.n, shoots=args.shoots,
                                    connected=args.connected)
    oracle = treealg.enumerate_trees_bruteforce(args.n, shoots=args.shoots,
                                                connected=args.connected)
    listing = []
    for tree in trees:
        entry = {'id': tree.tree_id, 'tree': tree.to_dict(),
                 'right': tree.is_right(), 'acyclic': tree.is_acyclic()}
        if args.right_subtrees and tree.is_right():
            entry['right_subtrees'] = [
                {'antichain': list(sub.antichain), 'lines': list(sub.lines),
                 'tree': sub.as_tree().to_dict()}
                for sub in treealg.right_subtrees(tree)]
        listing.append(entry)
    payload = {'n': args.n, 'count': len(trees),
               'oracle_count': len(oracle),
               'oracle_match': set(trees) == set(oracle), 'trees': listing}
    print(json.dumps(payload, sort_keys=True, indent=1))
    return 0 if payload['oracle_match'] else 1


def cmd_diagrams(config, args):
    model = friedrichs.ContinuumModel.from_config(config)
    diagrams = renorm.diagrams_of_order(
        model, config.order, connected=not args.all,
        renormalizable_only=args.renormalizable_only)
    payload = {'order': config.order, 'count': len(diagrams),
               'diagrams': [d.to_dict() for d in diagrams]}
    write_report(config, 'diagrams.json', _stamp(config, payload))
    print("%d diagrams of order %d" % (len(diagrams), config.order))
    return 0


def cmd_amplitude(config, args):
    '''
    Power counting of every connected diagram of the configured order.
    '''
    model = friedrichs.ContinuumModel.from_config(config)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(['diagram', 'order', 'renormalizable', 'omega', 'p',
                     'spread', 'N'])
    for diagram in renorm.diagrams_of_order(model, config.order):
        amp = renorm.continuum_amplitude(diagram, model, config.test_width)
        omega, p, spread = renorm.divergence_degree(amp, range(amp.n))
        writer.writerow([diagram.diagram_id, diagram.tree.n,
                         int(diagram.renormalizable), repr(omega),
                         '%.6f' % p, '%.6f' % spread,
                         renorm.subtraction_order(omega)])
    write_report(config, 'amplitude.csv', out.getvalue())
    return 0


def cmd_oracle_compare(config, args):
    '''
    Tree expansion against the Dyson terms on the cyclic vector, and the
    adiabatic window sweep of the first-order term.
    '''
    dyn = corrdyn.Dynamics.from_config(config)
    rep = fockoracle.represent(dyn.grid, config.n_max)
    state = fockoracle.thermal_state(rep, dyn.occ)
    pair = fockoracle.liouvillian(rep, dyn.kernel)
    t1, t2 = ORACLE_WINDOW
    rows = []
    for order in range(1, min(config.order, 3) + 1):
        poly = corrdyn.tree_expansion(dyn, order, t2, t1,
                                      tolerance=config.tolerance)
        mine = fockoracle.realize(rep, poly, state)
        term = fockoracle.dyson_term(pair, order, t2, t1,
                                     tolerance=config.tolerance)
        oracle = term.apply(state.array)
        rows.append({'order': order, 'interval': [t1, t2],
                     'difference': float(np.linalg.norm(mine - oracle)),
                     'norm': float(np.linalg.norm(oracle)),
                     'error_estimate': term.error_estimate})
    sweep = fockoracle.adiabatic_sweep(pair, 1, state.array, SWEEP_WINDOWS)
    payload = {'comparisons': rows, 'adiabatic_sweep': sweep}
    write_report(config, 'oracle.json', _stamp(config, payload))
    return 0


def _diagram_report(table, model, config, sectors):
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(['diagram', 'order', 'N', 'sector_error',
                     'invariance_residual'])
    for entry in table:
        diagram = entry.diagram
        psi = testfunc.probes(entry.order, 1, config.seed)[0]
        try:
            residual = repr(renorm.time_translation_defect(
                diagram, model, [psi], (1.0,), config.window,
                seed=config.seed))
        except ValueError as e:
            logger.warning("no invariance residual for %s: %s",
                           entry.key, e)
            residual = ''
        sector_error = ''
        if sectors:
            deep = testfunc.probes(entry.order, 1, config.seed,
                                   zero_order=entry.top_order + 1)[0]
            amp = renorm.continuum_amplitude(diagram, model, table.widths)
            total, _ = renorm.sector_pairing(
                renorm.SPairing(amp, table.window), deep, entry=entry)
            direct = renorm.SPairing(amp, None).pair(
                entry.forest().r_prime(deep))
            sector_error = repr(float(np.max(np.abs(total - direct))))
        writer.writerow([entry.key, entry.order, entry.top_order,
                         sector_error, residual])
    return out.getvalue()


def cmd_renorm(config, args):
    '''
    Counterterm table through the configured order with its reports.
    '''
    model = friedrichs.ContinuumModel.from_config(config)
    table = renorm.counterterm_recursion(
        model, config.order, config.test_width, config.window,
        renormalizable_only=args.renormalizable_only)
    write_report(config, 'counterterms.json',
                 _stamp(config, table.to_dict()))
    write_report(config, 'counterterms.csv', table.to_csv())
    write_report(config, 'report.csv',
                 _diagram_report(table, model, config, args.sectors))
    print("%d counterterms through order %d" % (len(table), config.order))
    return 0


def cmd_cluster(config, args):
    model = friedrichs.ContinuumModel.from_config(config, d=config.cluster_d)
    diagram = renorm.designated_diagram(model, config.test_width,
                                        max(config.order, 1))
    psi = testfunc.probes(diagram.tree.n, 1, config.seed)[0]
    exponent, spread, values = renorm.cluster_decay(
        diagram, model, config.test_width, psi, verify.CLUSTER_SCALES,
        window=config.window)
    payload = {'diagram': diagram.diagram_id, 'd': config.cluster_d,
               'scales': list(verify.CLUSTER_SCALES),
               'magnitudes': [float(v) for v in values],
               'exponent': exponent, 'spread': spread,
               'note': 'fitted power over a finite range; the decay '
                       'faster than any power is not resolved'}
    write_report(config, 'cluster.json', _stamp(config, payload))
    print("decay exponent %.3f (spread %.3f)" % (exponent, spread))
    return 0


def cmd_verify(config, args):
    '''
    Runs the acceptance suite; nonzero exit on any failed check.
    '''
    start = time.time()
    report = verify.run_suite(config, args.criteria)
    timings = not config.bit_repro
    write_report(config, 'verify.json', report.to_json(timings))
    write_report(config, 'verify.csv', report.to_csv())
    for result in report.results:
        print("[%s] %2d %-20s %.3e %s %.3e %s" % (
            'PASS' if result.passed else 'FAIL', result.criterion,
            result.name, result.measured, '>=' if result.at_least else '<=',
            result.tolerance, result.note))
    if timings:
        print("runtime %.1fs" % (time.time() - start))
    return 0 if report.passed else 1


COMMANDS = {
    'diagrams': cmd_diagrams,
    'amplitude': cmd_amplitude,
    'oracle-compare': cmd_oracle_compare,
    'renorm': cmd_renorm,
    'cluster': cmd_cluster,
    'verify': cmd_verify,
}


def _run_flags(parser):
    parser.add_argument('config', nargs='?', help="JSON run configuration")
    parser.add_argument('--order', type=int)
    parser.add_argument('--grid', type=parse_grid, help="d,extent[,spacing]")
    parser.add_argument('--n-max', dest='n_max', type=int)
    parser.add_argument('--window', type=float, help="delay window T")
    parser.add_argument('--probes', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--output', help="report directory")
    parser.add_argument('--bit-repro', dest='bit_repro', action='store_true',
                        help="omit timings so reruns are byte-identical")
    parser.add_argument('--no-subtraction', dest='no_subtraction',
                        action='store_true')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='neqrenorm',
        description="Renormalized perturbation theory of nonequilibrium "
                    "Bose gases at desk scale.")
    parser.add_argument('-v', '--verbose', action='store_true')
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    trees = sub.add_parser('trees', help="list right trees")
    trees.add_argument('n', type=int)
    trees.add_argument('--shoots', type=int, default=0)
    trees.add_argument('--connected', action='store_true')
    trees.add_argument('--right-subtrees', dest='right_subtrees',
                       action='store_true')

    diagrams = sub.add_parser('diagrams', help="enumerate diagrams")
    _run_flags(diagrams)
    diagrams.add_argument('--all', action='store_true',
                          help="include disconnected diagrams")
    diagrams.add_argument('--renormalizable-only', action='store_true')

    _run_flags(sub.add_parser('amplitude', help="power counting"))
    _run_flags(sub.add_parser('oracle-compare', help="oracle comparison"))

    ren = sub.add_parser('renorm', help="counterterm table")
    _run_flags(ren)
    ren.add_argument('--renormalizable-only', action='store_true')
    ren.add_argument('--sectors', action='store_true',
                     help="add sector-decomposition errors to the report")

    _run_flags(sub.add_parser('cluster', help="weak cluster decay"))

    check = sub.add_parser('verify', help="acceptance suite")
    _run_flags(check)
    check.add_argument('--criteria', type=int, nargs='+')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    try:
        if args.command == 'trees':
            return cmd_trees(args)
        config = load_config(args)
        if config.bit_repro:
            os.environ['NEQRENORM_WORKERS'] = '1'
        return COMMANDS[args.command](config, args)
    except (NeqRenormError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == '__main__':
    sys.exit(main())
