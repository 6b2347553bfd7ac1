"""Vectorised interval arithmetic with outward rounding.

Intervals are carried as ``(lo, hi)`` pairs of numpy arrays so that one call
encloses a whole batch of boxes. Every elementary operation widens its result
by one ulp in each direction (two for transcendental functions), which keeps
the enclosures sound under IEEE round-to-nearest.

A NaN bound marks a failed enclosure (e.g. division by an interval that
contains zero). Comparisons against NaN are false, so such entries can never
be pruned by a caller, only refined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


class EnclosureError(ArithmeticError):
    """Raised when an enclosure cannot be formed (caller should split the box)."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def _down(a, k=1):
    for _ in range(k):
        a = np.nextafter(a, -np.inf)
    return a


def _up(a, k=1):
    for _ in range(k):
        a = np.nextafter(a, np.inf)
    return a


def const(c, shape):
    v = np.full(shape, float(c))
    return v, v


def neg(a):
    return -a[1], -a[0]


def add(a, b):
    return _down(a[0] + b[0]), _up(a[1] + b[1])


def sub(a, b):
    return _down(a[0] - b[1]), _up(a[1] - b[0])


def mul(a, b):
    p1 = a[0] * b[0]
    p2 = a[0] * b[1]
    p3 = a[1] * b[0]
    p4 = a[1] * b[1]
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return _down(lo), _up(hi)


def div(a, b):
    bad = (b[0] <= 0.0) & (b[1] >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rlo = _down(1.0 / b[1])
        rhi = _up(1.0 / b[0])
    lo, hi = mul(a, (rlo, rhi))
    if np.any(bad):
        lo = np.where(bad, np.nan, lo)
        hi = np.where(bad, np.nan, hi)
    return lo, hi


def power(a, n: int):
    lo, hi = a
    if n == 0:
        return const(1.0, np.shape(lo))
    if n == 1:
        return lo, hi
    plo = lo**n
    phi = hi**n
    if n % 2 == 1:
        return _down(plo), _up(phi)
    # even power: tight on sign-definite intervals, [0, max] across zero
    rlo = np.where(lo >= 0, plo, np.where(hi <= 0, phi, 0.0))
    rhi = np.where(lo >= 0, phi, np.where(hi <= 0, plo, np.maximum(plo, phi)))
    rlo = np.where(rlo > 0, _down(rlo), rlo)
    return rlo, _up(rhi)


def _monotone(fn, a, lower=-np.inf, upper=np.inf):
    with np.errstate(over="ignore"):
        lo = _down(fn(a[0]), 2)
        hi = _up(fn(a[1]), 2)
    return np.maximum(lo, lower), np.minimum(hi, upper)


def exp(a):
    return _monotone(np.exp, a, lower=0.0)


def tanh(a):
    return _monotone(np.tanh, a, lower=-1.0, upper=1.0)


def sigmoid_np(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus_np(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(a):
    return _monotone(sigmoid_np, a, lower=0.0, upper=1.0)


def softplus(a):
    return _monotone(softplus_np, a, lower=0.0)


def sin(a):
    lo, hi = a
    with np.errstate(invalid="ignore"):
        slo = np.sin(lo)
        shi = np.sin(hi)
        # does [lo, hi] contain pi/2 + 2k pi (maximum) or -pi/2 + 2k pi (minimum)?
        has_max = np.floor((hi - HALF_PI) / TWO_PI) >= np.ceil((lo - HALF_PI) / TWO_PI)
        has_min = np.floor((hi + HALF_PI) / TWO_PI) >= np.ceil((lo + HALF_PI) / TWO_PI)
    wide = (hi - lo) >= TWO_PI
    rlo = np.where(has_min | wide, -1.0, np.maximum(_down(np.minimum(slo, shi), 2), -1.0))
    rhi = np.where(has_max | wide, 1.0, np.minimum(_up(np.maximum(slo, shi), 2), 1.0))
    # extrema located within rounding of an endpoint are covered by the padding;
    # guard the decision itself with a small absolute slack
    near = 1e-12
    rlo = np.where(~(has_min | wide) & (rlo < -1.0 + near), -1.0, rlo)
    rhi = np.where(~(has_max | wide) & (rhi > 1.0 - near), 1.0, rhi)
    bad = ~(np.isfinite(lo) & np.isfinite(hi))
    if np.any(bad):
        rlo = np.where(bad, -1.0, rlo)
        rhi = np.where(bad, 1.0, rhi)
    return rlo, rhi


def cos(a):
    lo, hi = a
    with np.errstate(invalid="ignore"):
        clo = np.cos(lo)
        chi = np.cos(hi)
        has_max = np.floor(hi / TWO_PI) >= np.ceil(lo / TWO_PI)
        has_min = np.floor((hi - math.pi) / TWO_PI) >= np.ceil((lo - math.pi) / TWO_PI)
    wide = (hi - lo) >= TWO_PI
    rlo = np.where(has_min | wide, -1.0, np.maximum(_down(np.minimum(clo, chi), 2), -1.0))
    rhi = np.where(has_max | wide, 1.0, np.minimum(_up(np.maximum(clo, chi), 2), 1.0))
    near = 1e-12
    rlo = np.where(~(has_min | wide) & (rlo < -1.0 + near), -1.0, rlo)
    rhi = np.where(~(has_max | wide) & (rhi > 1.0 - near), 1.0, rhi)
    bad = ~(np.isfinite(lo) & np.isfinite(hi))
    if np.any(bad):
        rlo = np.where(bad, -1.0, rlo)
        rhi = np.where(bad, 1.0, rhi)
    return rlo, rhi


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
}
