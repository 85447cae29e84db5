# SPDX-License-Identifier: Apache-2.0.
import csv
import os
import shutil
import tempfile
import unittest
from unittest import TestCase, mock

import numpy as np

from qglab import evolution
from qglab.cli import EXIT_BLOWUP, EXIT_INVALID, EXIT_OK, SUBCOMMANDS, main
from qglab.config import OUT_ENV, read_manifest
from qglab.spectral import read_snapshot

SIMULATE = """
n = 16
t_end = 0.1
snapshots = 3
"""


class MainTest(TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        patcher = mock.patch.dict(os.environ)
        patcher.start()
        self.addCleanup(patcher.stop)
        os.environ.pop(OUT_ENV, None)

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def _config(self, text, name='run.conf'):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def _main(self, subcommand, text, out='out', *extra):
        out_dir = os.path.join(self.tmp, out)
        argv = [subcommand, '--config', self._config(text), '--out', out_dir, '--threads', '1'] + list(extra)
        return main(argv), out_dir

    def _rows(self, path):
        with open(path, newline='') as f:
            return list(csv.reader(f))

    def test_simulate_zero_field(self):
        status, out = self._main('simulate', SIMULATE + 'init = zero\n')
        self.assertEqual(EXIT_OK, status)
        rows = self._rows(os.path.join(out, 'diagnostics.csv'))
        self.assertEqual(4, len(rows))
        self.assertEqual('t', rows[0][0])
        snapshot = read_snapshot(os.path.join(out, 'final.qgf'))
        self.assertEqual(16, snapshot.field.grid.n)
        self.assertAlmostEqual(0.1, snapshot.t)
        subcommand, params = read_manifest(os.path.join(out, 'manifest.txt'))
        self.assertEqual('simulate', subcommand)
        self.assertEqual('zero', params['init'])

    def test_invalid_input(self):
        status, _ = self._main('simulate', 'n = 7\n')
        self.assertEqual(EXIT_INVALID, status)
        status, _ = self._main('picard', SIMULATE)
        self.assertEqual(EXIT_INVALID, status)
        self.assertEqual(EXIT_INVALID, main(['--out', os.path.join(self.tmp, 'none')]))
        self.assertEqual(EXIT_INVALID, main(['simulate', '--config', os.path.join(self.tmp, 'missing.conf')]))

    def test_blowup_keeps_partial_artifacts(self):
        real_step = evolution._step
        calls = []

        def fails_on_second_call(c, t, h, cfg, rhs):
            calls.append(t)
            out = real_step(c, t, h, cfg, rhs)
            return out if len(calls) < 2 else np.full_like(out, np.nan)

        with mock.patch('qglab.evolution._step', side_effect=fails_on_second_call):
            status, out = self._main('simulate', SIMULATE + 'dt = 0.05\nnonlinear = false\n')
        self.assertEqual(EXIT_BLOWUP, status)
        rows = self._rows(os.path.join(out, 'diagnostics.csv'))
        self.assertEqual(['0.0', '0.05'], [row[0] for row in rows[1:]])
        self.assertAlmostEqual(0.05, read_snapshot(os.path.join(out, 'final.qgf')).t)
        subcommand, _ = read_manifest(os.path.join(out, 'manifest.txt'))
        self.assertEqual('simulate', subcommand)

    def test_picard_zero_data(self):
        text = SIMULATE + 'init = zero\nalpha = 1\np = 3\ns = 21/20\nn_max = 2\n'
        status, out = self._main('picard', text)
        self.assertEqual(EXIT_OK, status)
        rows = self._rows(os.path.join(out, 'contraction.csv'))
        self.assertEqual(3, len(rows))
        limit = self._rows(os.path.join(out, 'limit.csv'))
        self.assertEqual(['n', 'd_n_max', 'limit_distance', 'within'], limit[0])
        self.assertEqual(['2', '0.0', '0.0', 'true'], limit[1])

    def test_resume_reproduces_artifacts(self):
        status, first = self._main('simulate', SIMULATE, 'first', '--seed', '5')
        self.assertEqual(EXIT_OK, status)
        second = os.path.join(self.tmp, 'second')
        status = main(['--resume', os.path.join(first, 'manifest.txt'), '--out', second, '--threads', '1'])
        self.assertEqual(EXIT_OK, status)
        self.assertEqual(self._rows(os.path.join(first, 'diagnostics.csv')),
                         self._rows(os.path.join(second, 'diagnostics.csv')))
        _, params = read_manifest(os.path.join(second, 'manifest.txt'))
        self.assertEqual(5, params['seed'])

    def test_out_env_overrides_flag(self):
        target = os.path.join(self.tmp, 'env-out')
        os.environ[OUT_ENV] = target
        status, flag_dir = self._main('simulate', SIMULATE + 'init = zero\n', 'flag-out')
        self.assertEqual(EXIT_OK, status)
        self.assertTrue(os.path.exists(os.path.join(target, 'manifest.txt')))
        self.assertFalse(os.path.exists(flag_dir))

    def test_decay_curve(self):
        status, out = self._main('decay-curve', 'n = 64\nA = 1\ntimes = 0, 1, 2\nj = -1\n')
        self.assertEqual(EXIT_OK, status)
        self.assertEqual(4, len(self._rows(os.path.join(out, 'decay.csv'))))
        self.assertEqual(4, len(self._rows(os.path.join(out, 'heat.csv'))))

    def test_verify_single_estimate(self):
        text = 'n = 16\ncount = 2\nestimate = product\np = 2\ns1 = 2/5\ns2 = 2/5\n'
        status, out = self._main('verify-estimates', text)
        self.assertEqual(EXIT_OK, status)
        rows = self._rows(os.path.join(out, 'estimates.csv'))
        self.assertEqual(2, len(rows))
        self.assertEqual('product', rows[1][0])
        self.assertEqual('3', rows[1][2])

    def test_verify_all_skips_failing_windows(self):
        text = 'n = 16\ncount = 1\nestimate = all\np = 3\ns1 = 1/5\ns2 = 1/5\ns = 1\n'
        with self.assertLogs('qglab.cli', level='WARNING'):
            status, out = self._main('verify-estimates', text)
        self.assertEqual(EXIT_OK, status)
        rows = self._rows(os.path.join(out, 'estimates.csv'))
        self.assertEqual(['product', 'advection'], [row[0] for row in rows[1:]])

    def test_verify_strichartz_writes_exponents(self):
        text = ('n = 32\ncount = 1\nestimate = strichartz\np = 3\nr = 3\ns = 0\n'
                'A_grid = 1, 10\nkappa_grid = 0.5, 1\n')
        status, out = self._main('verify-estimates', text)
        self.assertEqual(EXIT_OK, status)
        rows = self._rows(os.path.join(out, 'estimates.csv'))
        self.assertEqual('strichartz', rows[1][0])
        exponents = self._rows(os.path.join(out, 'exponents.csv'))
        self.assertEqual(['exponent', 'fitted', 'predicted', 'within'], exponents[0])
        self.assertEqual(['A', 'kappa'], [row[0] for row in exponents[1:]])
        self.assertEqual(['0', '-1/3'], [row[2] for row in exponents[1:]])
        _, manifest = read_manifest(os.path.join(out, 'manifest.txt'))
        self.assertEqual([0.5, 1.0], manifest['kappa_grid'])

    def test_verify_rejects_hypotheses(self):
        text = 'n = 16\ncount = 1\nestimate = product\np = 2\ns1 = 1\ns2 = 1/2\n'
        status, _ = self._main('verify-estimates', text)
        self.assertEqual(EXIT_INVALID, status)

    def test_every_pipeline_is_registered(self):
        self.assertEqual({'simulate', 'picard', 'strichartz-scan', 'decay-curve', 'verify-estimates',
                          'threshold-scan', 'critical-family', 'vanishing-viscosity', 'norms'}, set(SUBCOMMANDS))


if __name__ == '__main__':
    unittest.main()
