"""Minifloat format ladder and just-enough-bits conversion.

Weights are stored as FP16 bit patterns and served at narrower formats by
slicing bit-planes. Plane numbering is fixed: plane 0 is the sign, planes
1..5 the exponent MSB first, planes 6..15 the mantissa MSB first. A format
that keeps the full 5-bit exponent converts by pure plane slicing; narrower
exponents are re-biased with saturation on overflow and flush-to-zero on
underflow.

There are no Inf/NaN encodings anywhere in the ladder: the all-ones exponent
code is an ordinary finite value. This keeps plane slicing exact (masking
mantissa planes of any FP16 pattern is itself the conversion) and makes
saturation emerge naturally for narrow exponent ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

FP16_EXP_BITS = 5
FP16_MAN_BITS = 10
FP16_BIAS = 15


class Rounding(Enum):
    """Mantissa narrowing behavior when dropping stored LSBs."""

    TRUNCATE = "truncate"
    ROUND_NEAREST_EVEN = "round-nearest-even"


@dataclass(frozen=True)
class FpFormat:
    """One rung of the format ladder.

    ``exp_bits`` and ``man_bits`` must be sub-slices of the FP16 layout.
    ``bias`` follows the standard minifloat rule 2^(exp_bits-1) - 1; the
    zero-width format (a skipped chunk) has every width 0.
    """

    name: str
    sign_bits: int
    exp_bits: int
    man_bits: int
    bias: int

    def __post_init__(self) -> None:
        if self.sign_bits == 0:
            if self.exp_bits or self.man_bits or self.bias:
                raise ValueError(f"{self.name}: zero-width format must have all widths 0")
            return
        if self.sign_bits != 1:
            raise ValueError(f"{self.name}: sign_bits must be 0 or 1")
        if not 1 <= self.exp_bits <= FP16_EXP_BITS:
            raise ValueError(f"{self.name}: exp_bits must be in 1..{FP16_EXP_BITS}")
        if not 0 <= self.man_bits <= FP16_MAN_BITS:
            raise ValueError(f"{self.name}: man_bits must be in 0..{FP16_MAN_BITS}")
        expected_bias = (1 << (self.exp_bits - 1)) - 1
        if self.bias != expected_bias:
            raise ValueError(
                f"{self.name}: bias {self.bias} does not match 2^(exp_bits-1)-1 = {expected_bias}"
            )

    @property
    def total_bits(self) -> int:
        return self.sign_bits + self.exp_bits + self.man_bits

    @property
    def is_skip(self) -> bool:
        return self.sign_bits == 0

    @property
    def keeps_fp16_scale(self) -> bool:
        """True when conversion is pure plane slicing (no re-bias needed)."""
        return self.exp_bits == FP16_EXP_BITS and self.bias == FP16_BIAS


def make_format(name: str, exp_bits: int, man_bits: int, bias: int | None = None) -> FpFormat:
    if exp_bits == 0 and man_bits == 0:
        return FpFormat(name, 0, 0, 0, 0)
    if bias is None:
        bias = (1 << (exp_bits - 1)) - 1
    return FpFormat(name, 1, exp_bits, man_bits, bias)


FP16 = make_format("FP16", 5, 10)
FP12 = make_format("FP12", 5, 6)
FP8 = make_format("FP8", 5, 2)
FP6 = make_format("FP6", 3, 2)
FP4 = make_format("FP4", 2, 1)
FP0 = make_format("FP0", 0, 0)

DEFAULT_LADDER: tuple[FpFormat, ...] = (FP16, FP12, FP8, FP6, FP4, FP0)


@dataclass(frozen=True)
class GuardConfig:
    """Extra exponent/mantissa planes fetched beyond the target width."""

    guard_exp: int = 0
    guard_man: int = 0

    def __post_init__(self) -> None:
        if self.guard_exp not in (0, 1, 2):
            raise ValueError(f"guard_exp must be in 0..2, got {self.guard_exp}")
        if self.guard_man not in (0, 1, 2):
            raise ValueError(f"guard_man must be in 0..2, got {self.guard_man}")


NO_GUARD = GuardConfig(0, 0)


@dataclass(frozen=True)
class WeightWord:
    """A bit pattern tagged with the format that gives it meaning."""

    bits: int
    fmt: FpFormat

    def __post_init__(self) -> None:
        if not 0 <= self.bits < (1 << self.fmt.total_bits):
            raise ValueError(f"bits 0x{self.bits:x} out of range for {self.fmt.name}")


def fetched_widths(fmt: FpFormat, guard: GuardConfig) -> tuple[int, int]:
    """Exponent/mantissa plane counts actually read for (fmt, guard)."""
    if fmt.is_skip:
        raise ValueError("skipped chunk has no planes")
    exp = min(FP16_EXP_BITS, fmt.exp_bits + guard.guard_exp)
    man = min(FP16_MAN_BITS, fmt.man_bits + guard.guard_man)
    return exp, man


def plane_set(fmt: FpFormat, guard: GuardConfig = NO_GUARD) -> tuple[int, ...]:
    """Plane indices needed to serve a chunk at (fmt, guard).

    Always the sign plane, then exponent MSB planes, then mantissa MSB
    planes: {0} + {1..exp} + {6..6+man-1}.
    """
    exp, man = fetched_widths(fmt, guard)
    return (0,) + tuple(range(1, exp + 1)) + tuple(range(6, 6 + man))


def _round_field(value: int, drop: int, mode: Rounding) -> int:
    """Narrow an unsigned field by ``drop`` LSBs under the given mode.

    The dropped LSBs are the exact remainder; ties go to even. The result
    may carry out of the field width (caller handles overflow).
    """
    if drop == 0:
        return value
    kept = value >> drop
    if mode is Rounding.TRUNCATE:
        return kept
    rem = value & ((1 << drop) - 1)
    half = 1 << (drop - 1)
    if rem > half or (rem == half and kept & 1):
        kept += 1
    return kept


def convert(
    source: WeightWord,
    target: FpFormat,
    guard: GuardConfig = NO_GUARD,
    mode: Rounding = Rounding.TRUNCATE,
) -> WeightWord:
    """Convert a stored FP16 word to ``target`` using only fetched planes.

    Unfetched exponent/mantissa LSBs are zero. Formats that keep the FP16
    exponent scale convert by slicing the magnitude word directly, with the
    fetched guard mantissa bits driving nearest-even rounding; narrower
    exponents re-bias, saturating to the maximum-magnitude finite value on
    overflow and flushing to signed zero on underflow.
    """
    if source.fmt.total_bits != 16 or not source.fmt.keeps_fp16_scale:
        raise ValueError("conversion source must be a full FP16 word")
    if target.is_skip:
        raise ValueError("cannot convert to the skipped format")

    exp_f, man_f = fetched_widths(target, guard)
    bits = source.bits
    sign = bits >> 15
    exp = (bits >> FP16_MAN_BITS) & 0x1F
    man = bits & 0x3FF

    # Zero unfetched LSB planes; this is the only data conversion sees.
    exp_keep = exp & ~((1 << (FP16_EXP_BITS - exp_f)) - 1)
    man_keep = man & ~((1 << (FP16_MAN_BITS - man_f)) - 1)

    if target.keeps_fp16_scale:
        # Pure slicing: exponent passes through (subnormals included), the
        # mantissa narrows with carry into the exponent field.
        field = (exp_keep << man_f) | (man_keep >> (FP16_MAN_BITS - man_f))
        field = _round_field(field, man_f - target.man_bits, mode)
        if field >> (FP16_EXP_BITS + target.man_bits):
            field = (1 << (FP16_EXP_BITS + target.man_bits)) - 1  # clamp to max finite
        return WeightWord((sign << (FP16_EXP_BITS + target.man_bits)) | field, target)

    exp_max = (1 << target.exp_bits) - 1
    if exp_keep == 0:
        # Source subnormal magnitude is far below any re-biased min normal.
        return WeightWord(sign << (target.exp_bits + target.man_bits), target)
    rebias = exp_keep - FP16_BIAS + target.bias
    if rebias > exp_max:
        return _saturated(sign, target)
    if rebias < 1:
        return WeightWord(sign << (target.exp_bits + target.man_bits), target)

    man_t = _round_field(man_keep >> (FP16_MAN_BITS - man_f), man_f - target.man_bits, mode)
    if man_t >> target.man_bits:
        man_t = 0
        rebias += 1
        if rebias > exp_max:
            return _saturated(sign, target)
    word = (sign << (target.exp_bits + target.man_bits)) | (rebias << target.man_bits) | man_t
    return WeightWord(word, target)


def _saturated(sign: int, fmt: FpFormat) -> WeightWord:
    body = (1 << (fmt.exp_bits + fmt.man_bits)) - 1
    return WeightWord((sign << (fmt.exp_bits + fmt.man_bits)) | body, fmt)


def dequantize(word: WeightWord) -> float:
    """Value of a minifloat word: (-1)^s * 2^(e-bias) * (1 + m/2^man_bits),
    with the e = 0 row subnormal."""
    fmt = word.fmt
    if fmt.is_skip:
        raise ValueError("skipped format has no value")
    sign = word.bits >> (fmt.exp_bits + fmt.man_bits)
    exp = (word.bits >> fmt.man_bits) & ((1 << fmt.exp_bits) - 1)
    man = word.bits & ((1 << fmt.man_bits) - 1)
    scale = 1 << fmt.man_bits
    if exp == 0:
        value = math.ldexp(man / scale, 1 - fmt.bias)
    else:
        value = math.ldexp(1 + man / scale, exp - fmt.bias)
    return -value if sign else value


def encode_fp16(value: float) -> WeightWord:
    """Nearest-even FP16 encoding of a finite real (test-fixture helper).

    Magnitudes beyond the largest finite pattern clamp to it; note the
    codomain has no Inf, so values that IEEE half would round to infinity
    land on large finite codes instead.
    """
    if math.isnan(value) or math.isinf(value):
        raise ValueError("encode_fp16 requires a finite value")
    sign = 1 if math.copysign(1.0, value) < 0 else 0
    mag = abs(value)
    if mag == 0.0:
        return WeightWord(sign << 15, FP16)

    frac, exp2 = math.frexp(mag)  # mag = frac * 2^exp2, frac in [0.5, 1)
    biased = exp2 - 1 + FP16_BIAS
    if biased <= 0:
        # Subnormal row: units of 2^-24.
        q = _round_half_even(math.ldexp(mag, 24))
        if q >= 1 << FP16_MAN_BITS:
            return WeightWord((sign << 15) | (1 << FP16_MAN_BITS), FP16)
        return WeightWord((sign << 15) | q, FP16)
    man = _round_half_even(math.ldexp(frac * 2 - 1, FP16_MAN_BITS))
    if man >> FP16_MAN_BITS:
        man = 0
        biased += 1
    if biased >= (1 << FP16_EXP_BITS):
        return WeightWord((sign << 15) | 0x7FFF, FP16)
    return WeightWord((sign << 15) | (biased << FP16_MAN_BITS) | man, FP16)


def _round_half_even(x: float) -> int:
    lo = math.floor(x)
    rem = x - lo
    if rem > 0.5 or (rem == 0.5 and lo & 1):
        return lo + 1
    return lo
