"""Independent oracles used to freeze expected values.

These deliberately avoid the implementation's code paths: the binomial tail
is a dumb per-term summation straight from math.comb, and the DFT bin power
is a direct complex summation.  Keep them dumb.
"""
from __future__ import annotations

import cmath
import math
from fractions import Fraction

import numpy as np


def brute_force_binom_tail(n: int, k: int, p: Fraction) -> Fraction:
    """P(X >= k) as a plain sum of comb(n, i) * p^i * q^(n-i)."""
    p = Fraction(p)
    q = 1 - p
    return sum((Fraction(math.comb(n, i)) * p**i * q ** (n - i) for i in range(k, n + 1)),
               start=Fraction(0))


def brute_force_binom_terms(n: int, p: Fraction) -> list[Fraction]:
    """All pmf terms P(X = i), i = 0..n, via comb and powers."""
    p = Fraction(p)
    q = 1 - p
    return [Fraction(math.comb(n, i)) * p**i * q ** (n - i) for i in range(n + 1)]


def dft_bin_power(x: np.ndarray, k: int) -> float:
    """|X_k|^2 by direct complex summation (no FFT, no recurrence)."""
    n = len(x)
    acc = 0j
    for j in range(n):
        acc += x[j] * cmath.exp(-2j * math.pi * k * j / n)
    return abs(acc) ** 2


def sine_rms(amplitude: float) -> float:
    """Closed-form RMS of a pure sinusoid over whole periods."""
    return amplitude / math.sqrt(2.0)
