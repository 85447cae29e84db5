# SPDX-License-Identifier: Apache-2.0.

"""
Run configuration: the ``key = value`` parameter file, the run manifest and CSV output.
"""

import csv
import hashlib
import logging
import math
import os
import re
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from qglab import IndexWindowError, ModeledClass, ValidationError, to_fraction

logger = logging.getLogger(__name__)

OUT_ENV = 'QGLAB_OUT'

INIT_CHOICES = ('ensemble', 'bump', 'zero', 'snapshot')
ESTIMATE_CHOICES = ('product', 'advection', 'commutator', 'strichartz', 'all')


class ConfigError(ValidationError):
    """
    Malformed or invalid configuration.

    Attributes:
        line (Optional[int]): 1-based line number at fault, when one is.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)
        self.line = line


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ('true', 'yes', '1', 'on'):
        return True
    if lowered in ('false', 'no', '0', 'off'):
        return False
    raise ValueError("expected true or false, got '{}'".format(text))


def _parse_rational(text: str) -> Fraction:
    return to_fraction(text)


def _parse_length(text: str) -> float:
    """Floats and products such as ``2pi*16`` or ``2*pi*16``."""
    value = 1.0
    for token in text.replace(' ', '').lower().split('*'):
        if token.endswith('pi'):
            coefficient = token[:-2]
            value *= (float(coefficient) if coefficient else 1.0) * math.pi
        else:
            value *= float(token)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError("length must be positive and finite")
    return value


def _list_of(parse: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse_list(text: str) -> List[Any]:
        items = [item.strip() for item in text.split(',') if item.strip()]
        if not items:
            raise ValueError("expected a comma separated list")
        return [parse(item) for item in items]
    return parse_list


def _choice(choices: Sequence[str]) -> Callable[[str], str]:
    def parse_choice(text: str) -> str:
        if text not in choices:
            raise ValueError("expected one of {}, got '{}'".format(', '.join(choices), text))
        return text
    return parse_choice


# name -> (parser, default); None means no default
KEYS = {
    'n': (int, 128),
    'length': (_parse_length, 2.0 * math.pi * 16.0),
    'alpha': (_parse_rational, Fraction(1)),
    'kappa': (float, 1.0),
    'A': (float, 100.0),
    'p': (_parse_rational, None),
    's': (_parse_rational, None),
    'q': (_parse_rational, Fraction(2)),
    'r': (_parse_rational, None),
    's1': (_parse_rational, None),
    's2': (_parse_rational, None),
    'beta': (_parse_rational, None),
    'critical': (_parse_bool, False),
    't_end': (float, 1.0),
    'dt': (float, None),
    'c_cfl': (float, 0.5),
    'snapshots': (int, 21),
    'seed': (int, 0),
    'count': (int, 4),
    'spectrum_slope': (float, -2.0),
    'j_min': (int, None),
    'j_max': (int, None),
    'amplitude': (float, 1.0),
    'amplitudes': (_list_of(float), None),
    'A_grid': (_list_of(float), None),
    'kappa_grid': (_list_of(float), None),
    'N_grid': (_list_of(int), None),
    'n_max': (int, 6),
    'members': (int, 5),
    'init': (_choice(INIT_CHOICES), 'ensemble'),
    'init_path': (str, None),
    'bump_width': (float, 2.0),
    'times': (_list_of(float), None),
    'nonlinear': (_parse_bool, True),
    'estimate': (_choice(ESTIMATE_CHOICES), 'all'),
    'threshold_constant': (float, 1.0),
    'j': (int, None),
}

_LINE_RE = re.compile(r'^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$')


def _spell(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ', '.join(_spell(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ParameterSet(ModeledClass):
    """
    Typed parameters of one run.

    Attributes:
        values (Dict[str, Any]): Every key of ``KEYS`` with its parsed or default value.
        explicit (Tuple[str, ...]): Keys set in the file, in file order.
        idx: :class:`qglab.picard.IndexSet` when alpha, p and s (or critical) were given, else None.
    """

    __slots__ = ['values', 'explicit', 'idx']

    def __init__(self, values: Dict[str, Any], explicit: Iterable[str] = (), idx=None):
        self.values = values
        self.explicit = tuple(explicit)
        self.idx = idx

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def get(self, name: str, default: Any = None) -> Any:
        value = self.values.get(name)
        return default if value is None else value

    def require(self, *names: str) -> Tuple[Any, ...]:
        """
        Raises:
            ConfigError: listing every missing key.
        """
        missing = [name for name in names if self.values.get(name) is None]
        if missing:
            raise ConfigError("missing required key(s): {}".format(', '.join(missing)))
        return tuple(self.values[name] for name in names)

    def with_values(self, **overrides) -> 'ParameterSet':
        values = dict(self.values)
        values.update(overrides)
        return ParameterSet(values, self.explicit + tuple(k for k in overrides if k not in self.explicit), self.idx)

    def canonical_text(self) -> str:
        """Sorted ``key = value`` lines of every set value, exact rationals spelled a/b."""
        lines = ['{} = {}'.format(k, _spell(v)) for k, v in sorted(self.values.items()) if v is not None]
        return '\n'.join(lines) + '\n'

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode('utf-8')).hexdigest()


def _index_set(values: Dict[str, Any]):
    from qglab.picard import IndexSet

    critical = values['critical']
    if values['p'] is None or (values['s'] is None and not critical):
        return None
    try:
        return IndexSet(values['alpha'], values['p'], values['s'], critical=critical)
    except IndexWindowError as e:
        raise ConfigError(str(e)) from e


def parse_config_text(text: str) -> ParameterSet:
    """
    Parse ``key = value`` lines. ``#`` starts a comment; blank lines are skipped.

    When alpha, p and s are present (and no estimate is named) the admissible window is validated
    exactly and r derived (rho in critical mode); an explicit r is kept as given.

    Raises:
        ConfigError: on a malformed line, a duplicate key (naming the line), unknown keys
            (listing all of them) or a value out of its domain.
    """
    seen = {}  # type: Dict[str, int]
    parsed = {}  # type: Dict[str, Any]
    unknown = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        match = _LINE_RE.match(line)
        if match is None:
            raise ConfigError("expected 'key = value', got '{}'".format(raw.strip()), number)
        key, value = match.group(1), match.group(2)
        if key in seen:
            raise ConfigError("duplicate key '{}' (first set on line {})".format(key, seen[key]), number)
        seen[key] = number
        if key not in KEYS:
            unknown.append(key)
            continue
        if not value:
            raise ConfigError("key '{}' has no value".format(key), number)
        try:
            parsed[key] = KEYS[key][0](value)
        except (ValueError, ValidationError) as e:
            raise ConfigError("invalid value for '{}': {}".format(key, e), number) from e
    if unknown:
        raise ConfigError("unknown key(s): {}".format(', '.join(unknown)))

    values = {key: default for key, (_, default) in KEYS.items()}
    values.update(parsed)
    _check_domains(values)
    # estimate configurations carry estimate indices, not the solution-space window
    idx = None if 'estimate' in parsed else _index_set(values)
    if idx is not None and values['r'] is None:
        values['r'] = idx.time_exponent
    logger.debug("parsed %d keys", len(parsed))
    return ParameterSet(values, seen.keys(), idx)


def _check_domains(values: Dict[str, Any]):
    if values['n'] < 8 or values['n'] % 2:
        raise ConfigError("n must be even and >= 8, got {}".format(values['n']))
    if not (0 < values['alpha'] <= 1):
        raise ConfigError("alpha must lie in (0, 1], got {}".format(values['alpha']))
    for key in ('kappa', 't_end', 'bump_width'):
        if not values[key] > 0:
            raise ConfigError("{} must be positive, got {}".format(key, values[key]))
    if values['dt'] is not None and not values['dt'] > 0:
        raise ConfigError("dt must be positive, got {}".format(values['dt']))
    if not (0 < values['c_cfl'] <= 1):
        raise ConfigError("c_cfl must lie in (0, 1], got {}".format(values['c_cfl']))
    for key in ('snapshots', 'count', 'n_max', 'members'):
        if values[key] < 1:
            raise ConfigError("{} must be >= 1, got {}".format(key, values[key]))
    if values['init'] == 'snapshot' and not values['init_path']:
        raise ConfigError("init = snapshot needs init_path")


def parse_config(path: str) -> ParameterSet:
    """Read and validate a configuration file."""
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    logger.info("read configuration %s", path)
    return parse_config_text(text)


class RunManifest(ModeledClass):
    """
    Record of one run: enough to reproduce every artifact.

    Attributes:
        subcommand (str): Pipeline that ran.
        params (ParameterSet): Full parameter set.
        seed (int): Seed of every random draw.
        config_hash (str): SHA-256 of the canonical parameter text.
        artifacts (List[str]): Paths written, in order.
        timings (Dict[str, float]): Wall-clock seconds per phase.
        status (int): Exit status of the run.
    """

    __slots__ = ['subcommand', 'params', 'seed', 'config_hash', 'artifacts', 'timings', 'status']

    def __init__(self, subcommand: str, params: ParameterSet, seed: Optional[int] = None):
        self.subcommand = subcommand
        self.params = params
        self.seed = params['seed'] if seed is None else int(seed)
        self.config_hash = params.config_hash()
        self.artifacts = []  # type: List[str]
        self.timings = {}  # type: Dict[str, float]
        self.status = 0

    def add_artifact(self, path: str) -> str:
        self.artifacts.append(path)
        return path

    def text(self) -> str:
        lines = ['subcommand = {}'.format(self.subcommand),
                 'config_hash = {}'.format(self.config_hash),
                 'seed = {}'.format(self.seed),
                 'status = {}'.format(self.status)]
        # only the keys the user set; defaults and derived values are recomputed on resume
        for key in sorted(set(self.params.explicit)):
            value = self.params[key]
            if value is not None:
                lines.append('param.{} = {}'.format(key, _spell(value)))
        for i, path in enumerate(self.artifacts):
            lines.append('artifact.{} = {}'.format(i, path))
        for phase, seconds in self.timings.items():
            lines.append('timing.{} = {!r}'.format(phase, seconds))
        return '\n'.join(lines) + '\n'

    def write(self, path: str) -> str:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.text())
        return path


def read_manifest(path: str) -> Tuple[str, ParameterSet]:
    """
    Subcommand and parameter set of a manifest written by :meth:`RunManifest.write`.

    Raises:
        ConfigError: if the manifest lacks a subcommand or holds malformed parameters.
    """
    subcommand = None
    params = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            match = _LINE_RE.match(raw.strip())
            if match is None:
                continue
            key, value = match.group(1), match.group(2)
            if key == 'subcommand':
                subcommand = value
            elif key.startswith('param.'):
                params.append('{} = {}'.format(key[len('param.'):], value))
    if subcommand is None:
        raise ConfigError("manifest {} names no subcommand".format(path))
    return subcommand, parse_config_text('\n'.join(params))


def resolve_out_dir(flag_value: Optional[str]) -> str:
    """QGLAB_OUT overrides --out; the directory is created if needed."""
    out = os.environ.get(OUT_ENV) or flag_value or 'qglab-out'
    os.makedirs(out, exist_ok=True)
    return out


def _cell(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    return value


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Header row then one row per record; floats in their shortest round-trip spelling."""
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValidationError("row has {} cells, header has {}".format(len(row), len(columns)))
            writer.writerow([_cell(v) for v in row])
    logger.debug("wrote %s", path)
    return path
