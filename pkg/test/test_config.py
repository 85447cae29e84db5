# SPDX-License-Identifier: Apache-2.0.
import csv
import math
import os
import shutil
import tempfile
import unittest
from fractions import Fraction
from unittest import TestCase, mock

import numpy as np

from qglab import ValidationError
from qglab.config import (OUT_ENV, ConfigError, RunManifest, parse_config, parse_config_text, read_manifest,
                          resolve_out_dir, write_csv)

SUBCRITICAL = """
# subcritical indices
alpha = 1
p = 3
s = 21/20   # r follows
"""


class ParseTest(TestCase):

    def test_defaults(self):
        params = parse_config_text('')
        self.assertEqual(128, params['n'])
        self.assertAlmostEqual(32.0 * math.pi, params['length'])
        self.assertEqual(Fraction(1), params['alpha'])
        self.assertIsNone(params.idx)
        self.assertEqual((), params.explicit)

    def test_derived_time_exponent(self):
        params = parse_config_text(SUBCRITICAL)
        self.assertEqual(Fraction(21, 20), params['s'])
        self.assertEqual(Fraction(60, 23), params['r'])
        self.assertEqual(Fraction(60, 23), params.idx.r)
        self.assertEqual(('alpha', 'p', 's'), params.explicit)

    def test_explicit_r_is_kept(self):
        params = parse_config_text(SUBCRITICAL + 'r = 3\n')
        self.assertEqual(Fraction(3), params['r'])

    def test_critical(self):
        params = parse_config_text('alpha = 1/2\np = 5/2\ncritical = yes\n')
        self.assertTrue(params.idx.critical)
        self.assertEqual(Fraction(3, 2), params.idx.s)
        self.assertEqual(Fraction(5, 2), params['r'])

    def test_window_violation(self):
        with self.assertRaises(ConfigError) as cm:
            parse_config_text('alpha = 1\np = 3\ns = 2\n')
        self.assertIn('requires', str(cm.exception))

    def test_estimate_configs_skip_window(self):
        params = parse_config_text('estimate = product\np = 2\ns1 = 2/5\ns2 = 2/5\ns = 5\n')
        self.assertIsNone(params.idx)
        self.assertIsNone(params['r'])

    def test_lengths(self):
        for text in ('2pi*16', '2*pi*16', '32 * pi', '100.53096491487338'):
            params = parse_config_text('length = {}\n'.format(text))
            self.assertAlmostEqual(32.0 * math.pi, params['length'], places=10)
        with self.assertRaises(ConfigError):
            parse_config_text('length = -pi\n')

    def test_lists(self):
        params = parse_config_text('A_grid = 1, 10, 100\nN_grid = 1,2\namplitudes = 0.5\nkappa_grid = 0.5, 2\n')
        self.assertEqual([1.0, 10.0, 100.0], params['A_grid'])
        self.assertEqual([1, 2], params['N_grid'])
        self.assertEqual([0.5], params['amplitudes'])
        self.assertEqual([0.5, 2.0], params['kappa_grid'])
        with self.assertRaises(ConfigError):
            parse_config_text('A_grid = ,\n')


class ErrorTest(TestCase):

    def test_duplicate_key_names_line(self):
        with self.assertRaises(ConfigError) as cm:
            parse_config_text('n = 32\nkappa = 1\n\nn = 64\n')
        self.assertEqual(4, cm.exception.line)
        self.assertIn('first set on line 1', str(cm.exception))

    def test_unknown_keys_listed(self):
        with self.assertRaises(ConfigError) as cm:
            parse_config_text('foo = 1\nn = 32\nbar = 2\n')
        self.assertIsNone(cm.exception.line)
        self.assertIn('foo, bar', str(cm.exception))

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as cm:
            parse_config_text('n = 32\nkappa 1\n')
        self.assertEqual(2, cm.exception.line)

    def test_bad_values(self):
        for text in ('n = abc', 'critical = maybe', 'init = nowhere', 's = 1/0', 'kappa ='):
            with self.assertRaises(ConfigError, msg=text) as cm:
                parse_config_text(text)
            self.assertEqual(1, cm.exception.line)

    def test_domains(self):
        for text in ('n = 7', 'n = 4', 'alpha = 3/2', 'alpha = 0', 'kappa = 0', 'c_cfl = 2', 'dt = -1',
                     'snapshots = 0', 'init = snapshot'):
            with self.assertRaises(ConfigError, msg=text):
                parse_config_text(text)

    def test_config_error_is_validation_error(self):
        self.assertTrue(issubclass(ConfigError, ValidationError))

    def test_require(self):
        params = parse_config_text('p = 3\n')
        self.assertEqual((Fraction(3),), params.require('p'))
        with self.assertRaises(ConfigError) as cm:
            params.require('p', 'r', 'A_grid')
        self.assertIn('r, A_grid', str(cm.exception))


class FileTest(TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_parse_file(self):
        path = os.path.join(self.tmp, 'run.conf')
        with open(path, 'w') as f:
            f.write(SUBCRITICAL)
        self.assertEqual(parse_config_text(SUBCRITICAL).config_hash(), parse_config(path).config_hash())

    def test_hash_ignores_order_and_comments(self):
        a = parse_config_text('n = 32\nkappa = 0.5\n')
        b = parse_config_text('# same run\nkappa = 0.50\n\nn = 32\n')
        self.assertEqual(a.config_hash(), b.config_hash())
        self.assertNotEqual(a.config_hash(), parse_config_text('n = 64\nkappa = 0.5\n').config_hash())

    def test_manifest_round_trip(self):
        params = parse_config_text(SUBCRITICAL + 'length = 2pi*8\nA_grid = 1, 10\n').with_values(seed=9)
        manifest = RunManifest('picard', params)
        manifest.add_artifact(os.path.join(self.tmp, 'contraction.csv'))
        manifest.timings['run'] = 0.25
        path = manifest.write(os.path.join(self.tmp, 'manifest.txt'))

        subcommand, restored = read_manifest(path)
        self.assertEqual('picard', subcommand)
        self.assertEqual(9, restored['seed'])
        self.assertEqual(params.config_hash(), restored.config_hash())
        with open(path) as f:
            text = f.read()
        self.assertIn('config_hash = {}'.format(manifest.config_hash), text)
        self.assertIn('param.s = 21/20', text)
        self.assertNotIn('param.r =', text)

    def test_manifest_needs_subcommand(self):
        path = os.path.join(self.tmp, 'manifest.txt')
        with open(path, 'w') as f:
            f.write('param.n = 32\n')
        with self.assertRaises(ConfigError):
            read_manifest(path)

    def test_write_csv(self):
        path = write_csv(os.path.join(self.tmp, 'out.csv'), ('name', 'value'),
                         [('r', Fraction(60, 23)), ('x', 0.1), ('n', 3), ('y', np.float64(0.05))])
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual([['name', 'value'], ['r', '60/23'], ['x', '0.1'], ['n', '3'], ['y', '0.05']], rows)
        with self.assertRaises(ValidationError):
            write_csv(os.path.join(self.tmp, 'bad.csv'), ('a', 'b'), [(1,)])

    def test_out_dir_environment_wins(self):
        target = os.path.join(self.tmp, 'from-env')
        with mock.patch.dict(os.environ, {OUT_ENV: target}):
            self.assertEqual(target, resolve_out_dir(os.path.join(self.tmp, 'from-flag')))
        self.assertTrue(os.path.isdir(target))
        self.assertFalse(os.path.exists(os.path.join(self.tmp, 'from-flag')))
        with mock.patch.dict(os.environ, {OUT_ENV: ''}):
            flag = os.path.join(self.tmp, 'from-flag')
            self.assertEqual(flag, resolve_out_dir(flag))


if __name__ == '__main__':
    unittest.main()
