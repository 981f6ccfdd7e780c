"""Signed Q7.7 fixed-point arithmetic.

A value is stored as a 14-bit two's-complement integer ``raw`` and read as
``raw / 128``.  The sign bit counts towards the seven integer bits, so the
representable range is ``[-64, 64 - 2**-7]``.  Every operation rounds to
nearest with ties to even and saturates on overflow.

Two layers are provided: the :class:`Fx` scalar type with the ``fx_*``
functions, and the ``*_raw`` functions that operate elementwise on integer
numpy arrays of raw words.  Both share the same rounding rules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

INT_BITS = 7
FRAC_BITS = 7
WORD_BITS = INT_BITS + FRAC_BITS
SCALE = 1 << FRAC_BITS
RAW_MIN = -(1 << (WORD_BITS - 1))
RAW_MAX = (1 << (WORD_BITS - 1)) - 1
LSB = 1.0 / SCALE
MIN_VALUE = RAW_MIN / SCALE
MAX_VALUE = RAW_MAX / SCALE

_HALF = 1 << (FRAC_BITS - 1)
_MASK = SCALE - 1
_FOUR_RAW = 4 * SCALE
_ONE_RAW = SCALE
_EIGHTH_RAW = SCALE // 8
_HALF_RAW = SCALE // 2


def _sat(raw: int) -> int:
    return RAW_MIN if raw < RAW_MIN else RAW_MAX if raw > RAW_MAX else raw


def _round_shift(p: int) -> int:
    # p = q * 2**7 + r with 0 <= r < 2**7 (floor semantics of >> on negatives)
    q = p >> FRAC_BITS
    r = p & _MASK
    if r > _HALF or (r == _HALF and q & 1):
        q += 1
    return q


@dataclass(frozen=True, order=True)
class Fx:
    """One Q7.7 word."""

    raw: int

    def __post_init__(self):
        raw = self.raw
        if isinstance(raw, (bool, np.bool_)) or not isinstance(raw, (int, np.integer)):
            raise TypeError(f"raw must be an integer, got {type(raw).__name__}")
        if not RAW_MIN <= raw <= RAW_MAX:
            raise DomainError(f"raw {raw} outside [{RAW_MIN}, {RAW_MAX}]")
        object.__setattr__(self, "raw", int(raw))

    @property
    def value(self) -> float:
        return self.raw / SCALE

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: "Fx") -> "Fx":
        return fx_add(self, other)

    def __mul__(self, other: "Fx") -> "Fx":
        return fx_mul(self, other)

    def __repr__(self) -> str:
        return f"Fx({self.value!r}, raw={self.raw})"


ZERO = Fx(0)
ONE = Fx(_ONE_RAW)


def quantize(x: float) -> Fx:
    """Nearest representable value to ``x``; saturates outside the range."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"cannot quantize non-finite value {x!r}")
    # round() on floats is round-half-even; x * 128 is exact for doubles
    scaled = x * SCALE
    if scaled >= RAW_MAX:
        return Fx(RAW_MAX)
    if scaled <= RAW_MIN:
        return Fx(RAW_MIN)
    return Fx(round(scaled))


def fx_add(a: Fx, b: Fx) -> Fx:
    return Fx(_sat(a.raw + b.raw))


def fx_mul(a: Fx, b: Fx) -> Fx:
    return Fx(_sat(_round_shift(a.raw * b.raw)))


def fx_relu(a: Fx) -> Fx:
    return a if a.raw > 0 else ZERO


def fx_hard_sigmoid(a: Fx) -> Fx:
    """``clamp(a / 8 + 1/2, 0, 1)`` evaluated with :func:`fx_mul` and :func:`fx_add`."""
    if a.raw <= -_FOUR_RAW:
        return ZERO
    if a.raw >= _FOUR_RAW:
        return ONE
    return fx_add(fx_mul(a, Fx(_EIGHTH_RAW)), Fx(_HALF_RAW))


# -- vectorised raw-word layer -------------------------------------------------

def quantize_array(x) -> np.ndarray:
    """Elementwise :func:`quantize`, returning raw words as ``int64``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot quantize non-finite values")
    return np.clip(np.rint(x * SCALE), RAW_MIN, RAW_MAX).astype(np.int64)


def to_float(raw) -> np.ndarray:
    return np.asarray(raw, dtype=np.int64) / SCALE


def saturate_raw(raw) -> np.ndarray:
    return np.clip(np.asarray(raw, dtype=np.int64), RAW_MIN, RAW_MAX)


def add_raw(a, b) -> np.ndarray:
    return np.clip(np.asarray(a, np.int64) + np.asarray(b, np.int64), RAW_MIN, RAW_MAX)


def mul_raw(a, b) -> np.ndarray:
    p = np.asarray(a, np.int64) * np.asarray(b, np.int64)
    q = p >> FRAC_BITS
    r = p & _MASK
    q = q + ((r > _HALF) | ((r == _HALF) & ((q & 1) == 1)))
    return np.clip(q, RAW_MIN, RAW_MAX)


def relu_raw(a) -> np.ndarray:
    return np.maximum(np.asarray(a, np.int64), 0)


def hard_sigmoid_raw(a) -> np.ndarray:
    a = np.asarray(a, np.int64)
    mid = add_raw(mul_raw(a, _EIGHTH_RAW), _HALF_RAW)
    return np.where(a <= -_FOUR_RAW, 0, np.where(a >= _FOUR_RAW, _ONE_RAW, mid))


def check_raw(raw, what: str = "values") -> np.ndarray:
    """Return ``raw`` as int64, raising if any word is outside the 14-bit range."""
    arr = np.asarray(raw)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise DomainError(f"{what} must be integer raw words")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < RAW_MIN or arr.max() > RAW_MAX):
        raise DomainError(f"{what} contain raw words outside [{RAW_MIN}, {RAW_MAX}]")
    return arr
