# SPDX-License-Identifier: Apache-2.0.

"""
Pseudo-spectral laboratory for the 2D dissipative dispersive quasi-geostrophic equation

    d/dt theta + kappa (-Laplacian)^(alpha/2) theta + u . grad theta + A u_2 = 0,    u = R^perp theta

on a doubly periodic box, together with the dyadic (Littlewood-Paley) norm calculus, the
explicit linear propagator, and the successive-approximation scheme used to build global solutions.
"""

__all__ = [
    'ModeledClass',
    'ValidationError',
    'IndexWindowError',
    'to_fraction',
    'spectral',
    'operators',
    'littlewood_paley',
    'paraproduct',
    'propagator',
    'evolution',
    'picard',
    'estimates',
    'config',
    'cli',
    'trajectory',
    'workers',
]

from fractions import Fraction
import numbers
from typing import Union

__version__ = '1.0.0-dev'

Rational = Union[int, float, str, Fraction]


class ValidationError(ValueError):
    """
    Base for every error caused by invalid input (fields, indices, configuration).

    The command line maps this family to exit status 2.
    """
    pass


class IndexWindowError(ValidationError):
    """
    An index (p, s, r, beta, ...) lies outside its admissible window.

    Attributes:
        bound (str): The violated inequality, with exact values substituted.
    """

    def __init__(self, bound: str, message: str = None):
        super().__init__(message or "index outside admissible window: requires {}".format(bound))
        self.bound = bound


def to_fraction(value: Rational) -> Fraction:
    """
    Convert a user-facing number to an exact :class:`fractions.Fraction`.

    Floats are read through their shortest decimal spelling, so ``0.4`` becomes ``2/5``
    rather than the nearest binary fraction. Strings may be ``"a/b"`` or decimals.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError("expected a number, got bool")
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, float):
        if value != value or value in (float('inf'), float('-inf')):
            raise ValidationError("expected a finite number, got {}".format(value))
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError("cannot read '{}' as a rational number".format(value)) from e
    if isinstance(value, numbers.Real):
        return Fraction(repr(float(value)))
    raise ValidationError("expected a number, got {}".format(type(value).__name__))


class ModeledClass:
    """
    Base for the record types of this package (grids, parameters, reports).

    Subclasses list their attributes in ``__slots__``; the repr is built from them.
    """

    __slots__ = ()

    def __repr__(self):
        properties = []
        for slot in self.__slots__:
            if slot.startswith('_'):
                continue
            value = getattr(self, slot, None)
            properties.append("{}={}".format(slot, _short_repr(value)))

        return '{}.{}({})'.format(
            self.__class__.__module__,
            self.__class__.__name__,
            ', '.join(properties))


def _short_repr(value):
    shape = getattr(value, 'shape', None)
    if shape is not None and len(shape) > 0:
        return '<array shape={}>'.format(tuple(shape))
    return repr(value)
