"""Numeral detection and scientific-notation decomposition.

A numeral n is stored as mantissa f and integer exponent e with
n = f * 10^e and 1 <= |f| < 10 (zero is the special case e=0, f=0).
The parser recognizes plain numbers, comma-grouped numbers, and
percentages in ASCII text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal

from .core import NumericError


@dataclass(frozen=True)
class NumeralValue:
    value: float
    exponent: int
    mantissa: float
    is_zero: bool = False

    def validate(self) -> None:
        if self.is_zero:
            assert self.mantissa == 0.0 and self.exponent == 0
        else:
            assert 1.0 <= abs(self.mantissa) < 10.0, self
            composed = self.mantissa * 10.0**self.exponent
            assert abs(composed - self.value) <= 1e-12 * abs(self.value), self


def decompose(value: float) -> NumeralValue:
    """Split a finite real into (mantissa, exponent) with 1 <= |mantissa| < 10."""
    value = float(value)
    if not math.isfinite(value):
        raise NumericError(f"cannot decompose non-finite value {value!r}")
    if value == 0.0:
        return NumeralValue(0.0, 0, 0.0, is_zero=True)
    # Work from the shortest round-trip decimal digits so that common
    # decimals get the exact mantissa one would write by hand.
    sign, digits, dexp = Decimal(repr(value)).as_tuple()
    exponent = len(digits) - 1 + dexp
    mantissa = float(Decimal((sign, digits, -(len(digits) - 1))))
    return NumeralValue(value, exponent, mantissa)


def compose(nv: NumeralValue) -> float:
    if nv.is_zero:
        return 0.0
    return nv.mantissa * 10.0**nv.exponent


def render(value: float) -> str:
    """Canonical decimal string: shortest round-trip, no exponent notation,
    integers without a decimal point."""
    value = float(value)
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return format(Decimal(repr(value)), "f")


# A numeral: optional sign directly attached to digits, either comma-grouped
# or plain digits, optional fraction, optional trailing percent. The sign is
# not consumed after a digit ("3-2" parses 3 and 2).
_NUMERAL_RE = re.compile(
    r"""
    (?<![\d.])            # not inside a number
    (?P<sign>-?)
    (?P<int>\d{1,3}(?:,\d{3})+|\d+)
    (?P<frac>\.\d+)?
    (?P<pct>%?)
    """,
    re.VERBOSE,
)


def parse_numerals(text: str) -> list[tuple[tuple[int, int], NumeralValue]]:
    """Find numerals left-to-right, longest match, non-overlapping.

    Returns (span, NumeralValue) pairs; spans index into `text`.
    """
    out = []
    for m in _NUMERAL_RE.finditer(text):
        if m.group("sign") and m.start() > 0 and text[m.start() - 1].isdigit():
            continue  # defensive; the lookbehind already prevents this
        raw = m.group("int").replace(",", "") + (m.group("frac") or "")
        value = float(m.group("sign") + raw)
        if m.group("pct"):
            value = value / 100.0
        out.append(((m.start(), m.end()), decompose(value)))
    return out
