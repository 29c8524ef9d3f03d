"""Sugeno lambda-measures and the discrete Choquet integral.

A lambda-measure over ``n`` sources is fully determined by its densities
(the worth of each singleton).  The interaction coefficient ``lam`` is the
unique root ``lam > -1`` of ``prod(1 + lam * g_i) = lam + 1``; once known,
the worth of any subset follows in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvalidDensityError, InvalidSubsetError, NumericalFailure

LAMBDA_TOL = 1e-12
MAX_BISECTIONS = 200
ADDITIVE_SNAP = 1e-9
_EDGE = 1e-12


def validate_densities(densities: Iterable[float]) -> np.ndarray:
    """Return densities as a float array, raising if any lies outside (0, 1]."""
    g = np.asarray(list(densities) if not isinstance(densities, np.ndarray) else densities,
                   dtype=float).ravel()
    if g.size < 1:
        raise InvalidDensityError("at least one density is required")
    if not np.all(np.isfinite(g)):
        raise InvalidDensityError(f"densities must be finite, got {g.tolist()}")
    if np.any(g <= 0.0) or np.any(g > 1.0):
        raise InvalidDensityError(f"densities must lie in (0, 1], got {g.tolist()}")
    return g


def _residual(lam: float, g: Sequence[float]) -> float:
    prod = 1.0
    for gi in g:
        prod *= 1.0 + lam * gi
    return prod - lam - 1.0


def _reduced_residual(lam: float, excess: float, e: Sequence[float]) -> float:
    """Residual divided by ``lam``: ``excess + sum_k lam**(k-1) * e_k`` for k >= 2.

    ``e`` holds the elementary symmetric polynomials of the densities and
    ``excess`` is ``sum(g) - 1``.  Unlike the raw residual this has no
    cancellation near ``lam = 0`` and is negative below the root, positive
    above it, in both regimes.
    """
    acc = 0.0
    for ek in reversed(e[2:]):
        acc = acc * lam + ek
    return excess + lam * acc


def _bisect(lo: float, hi: float, excess: float, e: Sequence[float]) -> float:
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = _reduced_residual(mid, excess, e)
        if r == 0.0:
            return mid
        if r > 0.0:
            hi = mid
        else:
            lo = mid
    if hi - lo > LAMBDA_TOL * max(1.0, abs(lo)):
        raise NumericalFailure("lambda bisection did not converge")
    r_lo = abs(_reduced_residual(lo, excess, e))
    r_hi = abs(_reduced_residual(hi, excess, e))
    return lo if r_lo <= r_hi else hi


def solve_lambda(densities: Iterable[float]) -> float:
    """Solve for the lambda-measure interaction coefficient.

    Returns 0 when the densities already sum to one (within 1e-9), a
    positive root when they sum to less, and a root in (-1, 0) when they
    sum to more.  Bisection is run to float resolution on the residual
    divided by ``lam``, which has exactly one sign change in each regime.

    >>> solve_lambda([0.5, 0.5])
    0.0
    >>> round(solve_lambda([0.2, 0.3]), 9)
    8.333333333
    """
    g = validate_densities(densities)
    gl = g.tolist()
    excess = math.fsum(gl) - 1.0
    if g.size == 1 or abs(excess) <= ADDITIVE_SNAP:
        return 0.0
    e = [1.0] + [0.0] * len(gl)
    for gi in gl:
        for k in range(len(gl), 0, -1):
            e[k] += gi * e[k - 1]
    if excess > 0.0:
        lo, hi = -1.0 + _EDGE, -_EDGE
        if _residual(lo, gl) <= 0.0:
            # A density of (numerically) one pushes the root onto the -1 edge;
            # lo already satisfies the residual to within _EDGE.
            return lo
        return _bisect(lo, hi, excess, e)

    hi = 1.0
    while _reduced_residual(hi, excess, e) <= 0.0:
        hi *= 2.0
        if not math.isfinite(hi) or hi > 1e300:
            raise NumericalFailure(f"could not bracket lambda for densities {gl}")
    return _bisect(0.0, hi, excess, e)


@dataclass(frozen=True)
class LambdaMeasure:
    """Densities plus their solved interaction coefficient."""

    densities: tuple[float, ...]
    lam: float

    @classmethod
    def from_densities(cls, densities: Iterable[float]) -> "LambdaMeasure":
        g = validate_densities(densities)
        return cls(tuple(g.tolist()), solve_lambda(g))

    @property
    def size(self) -> int:
        return len(self.densities)

    def worth(self, subset: Iterable[int]) -> float:
        return subset_worth(self, subset)


def subset_worth(measure: LambdaMeasure, subset: Iterable[int]) -> float:
    """Worth of a set of source indices under ``measure``.

    The empty set is worth exactly 0 and the full set exactly 1 (the
    boundary conditions); anything in between uses the closed form
    ``(prod(1 + lam * g_i) - 1) / lam``, or the plain sum when ``lam == 0``.
    """
    n = measure.size
    members = set()
    for idx in subset:
        if isinstance(idx, bool) or int(idx) != idx or not 0 <= int(idx) < n:
            raise InvalidSubsetError(f"source index {idx!r} out of range for {n} sources")
        members.add(int(idx))
    if not members:
        return 0.0
    if len(members) == n:
        return 1.0
    g = measure.densities
    lam = measure.lam
    if lam == 0.0:
        return float(sum(g[i] for i in sorted(members)))
    prod = 1.0
    for i in sorted(members):
        prod *= 1.0 + lam * g[i]
    return (prod - 1.0) / lam


def _suffix_worths(g_sorted: np.ndarray, lam: float) -> np.ndarray:
    """Worth of each trailing set A_i = {(i), ..., (n)} along the last axis."""
    if lam == 0.0:
        worth = np.cumsum(g_sorted[..., ::-1], axis=-1)[..., ::-1]
    else:
        prods = np.cumprod((1.0 + lam * g_sorted)[..., ::-1], axis=-1)[..., ::-1]
        worth = (prods - 1.0) / lam
    worth = np.clip(worth, 0.0, 1.0)
    worth[..., 0] = 1.0
    return worth


def choquet_batch(values: np.ndarray, measure: LambdaMeasure) -> np.ndarray:
    """Choquet integrals of each row of ``values`` (shape N x n) against one measure.

    Rows are sorted ascending (ties kept in source order) and integrated as
    ``f(1) + sum_{i>=2} (f(i) - f(i-1)) * g(A_i)``, which is the usual
    ``sum f(i) [g(A_i) - g(A_{i+1})]`` rearranged so that a constant row
    returns that constant exactly.
    """
    f = np.asarray(values, dtype=float)
    if f.ndim != 2 or f.shape[1] != measure.size:
        raise DimensionError(
            f"expected rows of length {measure.size}, got array of shape {f.shape}")
    if f.shape[0] == 0:
        return np.empty(0)
    order = np.argsort(f, axis=1, kind="stable")
    f_sorted = np.take_along_axis(f, order, axis=1)
    g_sorted = np.asarray(measure.densities)[order]
    worth = _suffix_worths(g_sorted, measure.lam)
    steps = np.diff(f_sorted, axis=1)
    return f_sorted[:, 0] + np.sum(steps * worth[:, 1:], axis=1)


def choquet_integral(supports: Sequence[float], measure: LambdaMeasure) -> float:
    """Choquet integral of one support vector with respect to ``measure``.

    >>> m = LambdaMeasure.from_densities([0.2, 0.3])
    >>> round(choquet_integral([0.4, 0.7], m), 12)
    0.49
    """
    f = np.asarray(supports, dtype=float).ravel()
    if f.size != measure.size:
        raise DimensionError(f"{f.size} supports for a measure over {measure.size} sources")
    return float(choquet_batch(f[None, :], measure)[0])
