"""Exact-rational reference implementations used as test oracles.

Everything here works in Fraction arithmetic over explicitly enumerated
code tables, deliberately avoiding the bit-twiddling style of the package
under test. Slow but exact; call sites memoize where sweeps get large.
"""

from __future__ import annotations

from bisect import bisect_right
from fractions import Fraction
from functools import lru_cache

TWO = Fraction(2)


def minifloat_value(bits: int, exp_bits: int, man_bits: int, bias: int) -> Fraction:
    """Exact value of a minifloat code; exponent code 0 is the subnormal row
    and there are no Inf/NaN codes."""
    sign = bits >> (exp_bits + man_bits)
    exp = (bits >> man_bits) & ((1 << exp_bits) - 1)
    man = bits & ((1 << man_bits) - 1)
    scale = 1 << man_bits
    if exp == 0:
        mag = Fraction(man, scale) * TWO ** (1 - bias)
    else:
        mag = (1 + Fraction(man, scale)) * TWO ** (exp - bias)
    return -mag if sign else mag


def fp16_value(bits: int) -> Fraction:
    return minifloat_value(bits, 5, 10, 15)


@lru_cache(maxsize=None)
def _magnitude_table(exp_bits: int, man_bits: int, bias: int) -> tuple[Fraction, ...]:
    # Non-negative codes in order; code order equals value order because
    # the encoding has no special rows.
    return tuple(
        minifloat_value(code, exp_bits, man_bits, bias)
        for code in range(1 << (exp_bits + man_bits))
    )


def _nearest_even_code(mags: tuple[Fraction, ...], v: Fraction) -> int:
    """Code of the table value nearest to v >= 0, ties to the even code."""
    i = bisect_right(mags, v)
    if i == 0:
        return 0
    if i == len(mags):
        return len(mags) - 1
    lo, hi = mags[i - 1], mags[i]
    d_lo, d_hi = v - lo, hi - v
    if d_lo < d_hi:
        return i - 1
    if d_hi < d_lo:
        return i
    return i if (i % 2 == 0) else i - 1


def _round_half_even(n: Fraction) -> int:
    floor = n.numerator // n.denominator
    rem = n - floor
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and floor % 2 == 1):
        return floor + 1
    return floor


@lru_cache(maxsize=None)
def _convert_map(
    exp_bits: int, man_bits: int, bias: int, fetched_exp: int, fetched_man: int, truncate: bool
) -> dict[int, int]:
    """Masked FP16 word -> converted target word, for every reachable mask."""
    out: dict[int, int] = {}
    body_bits = exp_bits + man_bits
    for sign in (0, 1):
        for exp_m in range(0, 32, 1 << (5 - fetched_exp)):
            for man_m in range(0, 1024, 1 << (10 - fetched_man)):
                masked = (sign << 15) | (exp_m << 10) | man_m
                v = abs(fp16_value(masked))
                if exp_bits == 5 and bias == 15:
                    # Aligned codomain includes the subnormal row.
                    mags = _magnitude_table(5, man_bits, 15)
                    if truncate:
                        code = bisect_right(mags, v) - 1
                    else:
                        code = _nearest_even_code(mags, v)
                    out[masked] = (sign << body_bits) | code
                    continue
                max_exp = (1 << exp_bits) - 1
                if exp_m == 0:
                    out[masked] = sign << body_bits
                    continue
                target_exp = exp_m - 15 + bias
                if target_exp > max_exp:
                    out[masked] = (sign << body_bits) | ((1 << body_bits) - 1)
                    continue
                if target_exp < 1:
                    out[masked] = sign << body_bits
                    continue
                frac = v / TWO ** (exp_m - 15) - 1
                n = frac * (1 << man_bits)
                man_t = n.numerator // n.denominator if truncate else _round_half_even(n)
                if man_t == 1 << man_bits:
                    man_t = 0
                    target_exp += 1
                    if target_exp > max_exp:
                        out[masked] = (sign << body_bits) | ((1 << body_bits) - 1)
                        continue
                out[masked] = (sign << body_bits) | (target_exp << man_bits) | man_t
    return out


def ref_convert(
    bits16: int,
    exp_bits: int,
    man_bits: int,
    bias: int,
    guard_exp: int,
    guard_man: int,
    truncate: bool,
) -> int:
    """Reference conversion of an FP16 bit pattern to the target layout."""
    fetched_exp = min(5, exp_bits + guard_exp)
    fetched_man = min(10, man_bits + guard_man)
    sign = bits16 >> 15
    exp = (bits16 >> 10) & 0x1F
    man = bits16 & 0x3FF
    exp_m = (exp >> (5 - fetched_exp)) << (5 - fetched_exp)
    man_m = (man >> (10 - fetched_man)) << (10 - fetched_man)
    masked = (sign << 15) | (exp_m << 10) | man_m
    return _convert_map(exp_bits, man_bits, bias, fetched_exp, fetched_man, truncate)[masked]


def ref_encode_fp16(value: float) -> int:
    """Nearest-even FP16 code for a finite real, clamping beyond the table."""
    import math

    sign = 1 if math.copysign(1.0, value) < 0 else 0
    code = _nearest_even_code(_magnitude_table(5, 10, 15), abs(Fraction(value)))
    return (sign << 15) | code
