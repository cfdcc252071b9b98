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
import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from base_test import BaseTest
from neqrenorm import cli, config, verify
from neqrenorm.config import RunConfig


class TestRunConfig(BaseTest):

    def test_defaults(self):
        c = RunConfig()
        self.assertEqual(c.order, 2)
        self.assertEqual(c.grid.mu, -1.0)
        self.assertEqual(c.occupation.kind, 'vacuum')

    def test_from_dict(self):
        c = RunConfig.from_dict({'order': 3, 'grid': {'d': 2, 'extent': 1},
                                 'kernel': {'c': 0.1}})
        self.assertEqual(c.order, 3)
        self.assertEqual(c.grid.d, 2)
        self.assertEqual(c.grid.spacing, 1.0)
        self.assertEqual(c.kernel.c, 0.1)
        self.assertEqual(c.kernel.a, 0.3)

    def test_unknown_keys(self):
        with self.assertRaises(ValueError):
            RunConfig.from_dict({'ordr': 3})
        with self.assertRaises(ValueError):
            RunConfig.from_dict({'grid': {'size': 3}})

    def test_override(self):
        c = RunConfig().override(order=1, seed=None)
        self.assertEqual(c.order, 1)
        self.assertEqual(c.seed, 0)
        with self.assertRaises(ValueError):
            RunConfig().override(nonsense=1)

    def test_digest(self):
        self.assertEqual(RunConfig().digest(), RunConfig().digest())
        self.assertNotEqual(RunConfig().digest(),
                            RunConfig().override(seed=1).digest())

    def test_load(self):
        folder = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, folder)
        path = os.path.join(folder, 'run.json')
        original = RunConfig.from_dict({'order': 1, 'window': 10.0})
        with open(path, 'w') as handle:
            handle.write(original.to_json())
        self.assertEqual(RunConfig.load(path), original)

    def test_worker_count(self):
        with mock.patch.dict(os.environ, {config.WORKERS_ENV: '3'}):
            self.assertEqual(config.worker_count(), 3)
        with mock.patch.dict(os.environ, {config.WORKERS_ENV: '0'}):
            self.assertEqual(config.worker_count(), 1)
        with mock.patch.dict(os.environ, {config.WORKERS_ENV: 'many'}):
            with self.assertRaises(ValueError):
                config.worker_count()


class TestRunSuite(BaseTest):

    def test_order_zero_is_vacuous(self):
        report = verify.run_suite(RunConfig().override(order=0))
        self.assertTrue(report.passed)
        self.assertEqual(report.results, [])

    def test_unknown_criterion(self):
        with self.assertRaises(NotImplementedError):
            verify.run_suite(RunConfig().override(order=1), [99])

    def test_combinatorics(self):
        report = verify.run_suite(RunConfig().override(order=1), [3])
        self.assertEqual([r.name for r in report.results],
                         ['enumeration', 'composition'])
        self.assertTrue(report.passed)
        self.assertIn(3, report.runtimes)

    def test_check_result(self):
        self.assertTrue(verify.CheckResult(1, 'x', 1e-9, 1e-8).passed)
        self.assertFalse(verify.CheckResult(1, 'x', 1e-7, 1e-8).passed)
        self.assertTrue(verify.CheckResult(1, 'x', 3.0, 2.0,
                                           at_least=True).passed)
        self.assertFalse(verify.CheckResult(1, 'x', float('nan'), 1.0).passed)


class TestCli(BaseTest):

    def setUp(self):
        self.folder = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.folder)

    def run_main(self, argv):
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = cli.main(argv)
        return code, out.getvalue()

    def test_parse_grid(self):
        self.assertEqual(cli.parse_grid('2,3'), {'d': 2, 'extent': 3})
        self.assertEqual(cli.parse_grid('1,4,0.5'),
                         {'d': 1, 'extent': 4, 'spacing': 0.5})
        for bad in ['2', '1,2,3,4', 'a,b']:
            with self.assertRaises(argparse.ArgumentTypeError):
                cli.parse_grid(bad)

    def test_load_config(self):
        args = cli.build_parser().parse_args(
            ['verify', '--order', '1', '--grid', '2,3', '--seed', '5',
             '--no-subtraction', '--output', self.folder])
        c = cli.load_config(args)
        self.assertEqual(c.order, 1)
        self.assertEqual((c.grid.d, c.grid.extent, c.grid.mu), (2, 3, -1.0))
        self.assertEqual(c.seed, 5)
        self.assertFalse(c.subtraction)
        self.assertEqual(c.window, RunConfig().window)

    def test_trees(self):
        code, text = self.run_main(['trees', '3'])
        self.assertEqual(code, 0)
        payload = json.loads(text)
        self.assertEqual(payload['count'], 16)
        self.assertTrue(payload['oracle_match'])
        code, text = self.run_main(['trees', '3', '--connected'])
        self.assertEqual(json.loads(text)['count'], 9)

    def test_diagrams(self):
        code, _ = self.run_main(['diagrams', '--order', '1', '--output',
                                 self.folder])
        self.assertEqual(code, 0)
        with open(os.path.join(self.folder, 'diagrams.json')) as handle:
            payload = json.load(handle)
        self.assertEqual(payload['count'], 2)
        self.assertEqual(payload['config'], RunConfig().override(
            order=1, output=self.folder).digest())

    def test_verify_order_zero(self):
        code, _ = self.run_main(['verify', '--order', '0', '--bit-repro',
                                 '--output', self.folder])
        self.assertEqual(code, 0)
        with open(os.path.join(self.folder, 'verify.json')) as handle:
            payload = json.load(handle)
        self.assertTrue(payload['passed'])
        self.assertNotIn('runtime', payload)
        self.assertTrue(os.path.exists(os.path.join(self.folder,
                                                    'verify.csv')))

    def test_bad_config(self):
        path = os.path.join(self.folder, 'bad.json')
        with open(path, 'w') as handle:
            json.dump({'bogus': 1}, handle)
        code, _ = self.run_main(['diagrams', path, '--output', self.folder])
        self.assertEqual(code, 2)


if __name__ == '__main__':
    unittest.main()
