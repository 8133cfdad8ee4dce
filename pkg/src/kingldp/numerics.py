"""Scalar numerical kernel: tail quadrature, bracketed roots, golden-section
search and an accurate log of the standard normal CDF.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "QuadratureResult",
    "BracketedRoot",
    "UnimodalResult",
    "QuadratureError",
    "QuadratureWarning",
    "RootRangeError",
    "integrate_tail",
    "integrate_interval",
    "solve_monotone",
    "optimize_unimodal",
    "log_normal_cdf",
]

_GL_LOW = np.polynomial.legendre.leggauss(10)
_GL_HIGH = np.polynomial.legendre.leggauss(20)
_NODES = np.concatenate([_GL_LOW[0], _GL_HIGH[0]])
_N_LOW = _GL_LOW[0].size

MAX_DEPTH = 60
MAX_PANELS = 4000


class QuadratureError(ArithmeticError):
    """Integrand produced NaN."""


class QuadratureWarning(RuntimeWarning):
    """Subdivision budget exhausted before reaching the requested tolerance."""


class RootRangeError(ValueError):
    """Target not attained on the largest admissible bracket."""


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_err_estimate: float
    evaluations: int
    converged: bool = True


@dataclass(frozen=True)
class BracketedRoot:
    root: float
    residual: float
    bracket_low: float
    bracket_high: float


class UnimodalResult(NamedTuple):
    argopt: float
    value: float
    at_boundary: bool


def _panel(g, a: float, b: float):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = np.asarray(g(mid + half * _NODES), dtype=float)
    if vals.shape != _NODES.shape:
        vals = np.broadcast_to(vals, _NODES.shape)
    if np.isnan(vals).any():
        raise QuadratureError(f"integrand returned NaN on [{a!r}, {b!r}]")
    low = half * float(np.dot(_GL_LOW[1], vals[:_N_LOW]))
    high = half * float(np.dot(_GL_HIGH[1], vals[_N_LOW:]))
    return high, abs(high - low)


def integrate_interval(
    g: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
) -> QuadratureResult:
    """Globally adaptive Gauss-Legendre quadrature of a vectorised ``g`` on [a, b].

    The panel with the largest error estimate is bisected until the summed
    estimate drops below ``max(abs_tol, rel_tol * |value|)``.  Panels deeper
    than ``MAX_DEPTH`` bisections are frozen.
    """
    if not 0.0 < rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in (0, 1e-3]")
    value, err = _panel(g, a, b)
    evaluations = _NODES.size
    # heap of (-err, a, b, value, err, depth)
    heap = [(-err, a, b, value, err, 0)]
    frozen_value = 0.0
    frozen_err = 0.0
    total_value, total_err = value, err
    converged = True
    while heap:
        target = max(abs_tol, rel_tol * abs(total_value))
        if total_err <= target:
            break
        if len(heap) >= MAX_PANELS:
            converged = False
            break
        _, pa, pb, pval, perr, depth = heapq.heappop(heap)
        if depth >= MAX_DEPTH:
            frozen_value += pval
            frozen_err += perr
            continue
        pm = 0.5 * (pa + pb)
        lv, le = _panel(g, pa, pm)
        rv, re = _panel(g, pm, pb)
        evaluations += 2 * _NODES.size
        total_value += lv + rv - pval
        total_err += le + re - perr
        heapq.heappush(heap, (-le, pa, pm, lv, le, depth + 1))
        heapq.heappush(heap, (-re, pm, pb, rv, re, depth + 1))
    else:
        target = max(abs_tol, rel_tol * abs(total_value))
        converged = total_err <= target
    # re-sum to shed the drift of the running updates
    total_value = math.fsum([h[3] for h in heap]) + frozen_value
    total_err = math.fsum([h[4] for h in heap]) + frozen_err
    if total_err > max(abs_tol, rel_tol * abs(total_value)):
        converged = False
    if not converged:
        warnings.warn(
            f"quadrature did not reach tolerance: estimate {total_value!r} "
            f"+/- {total_err!r}",
            QuadratureWarning,
            stacklevel=2,
        )
    return QuadratureResult(total_value, total_err, evaluations, converged)


def integrate_tail(
    integrand: Callable[[np.ndarray], np.ndarray],
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
) -> QuadratureResult:
    """Integrate ``integrand`` over [1, inf).

    The domain is mapped onto (0, 1] by y = 1/u, dy = du/u**2, which turns
    the 1/y**2 decay typical of the rate-function integrands into a bounded
    integrand.  ``integrand`` must accept numpy arrays.

    >>> round(integrate_tail(lambda y: 1.0 / y**2).value, 12)
    1.0
    """

    def g(u):
        return integrand(1.0 / u) / (u * u)

    return integrate_interval(g, 0.0, 1.0, rel_tol=rel_tol, abs_tol=abs_tol)


def solve_monotone(
    fn: Callable[[float], float],
    target: float,
    initial_bracket: tuple[float, float],
    tol: float = 1e-12,
    *,
    limits: tuple[float, float] = (-math.inf, math.inf),
    max_expansions: int = 200,
) -> BracketedRoot:
    """Bisection for ``fn(root) == target`` with a strictly monotone ``fn``.

    The bracket is expanded by doubling its width away from the side the
    target lies on, never past ``limits``.  Iteration stops when the residual
    is at most ``tol`` or the bracket can no longer be split.
    """
    lo, hi = map(float, initial_bracket)
    if not lo < hi:
        raise ValueError("initial bracket must satisfy low < high")
    f_lo, f_hi = fn(lo) - target, fn(hi) - target
    increasing = fn(hi) >= fn(lo)
    expansions = 0
    while f_lo * f_hi > 0:
        if expansions >= max_expansions:
            raise RootRangeError(f"target {target!r} not bracketed")
        width = hi - lo
        # which side is the target on?
        below = (f_lo > 0) if increasing else (f_lo < 0)
        if below:
            if lo <= limits[0]:
                raise RootRangeError(f"target {target!r} below the range of fn")
            hi, f_hi = lo, f_lo
            lo = max(lo - 2.0 * width, limits[0])
            f_lo = fn(lo) - target
        else:
            if hi >= limits[1]:
                raise RootRangeError(f"target {target!r} above the range of fn")
            lo, f_lo = hi, f_hi
            hi = min(hi + 2.0 * width, limits[1])
            f_hi = fn(hi) - target
        expansions += 1
    if f_lo == 0.0:
        return BracketedRoot(lo, 0.0, lo, lo)
    if f_hi == 0.0:
        return BracketedRoot(hi, 0.0, hi, hi)
    b_lo, b_hi = lo, hi
    best, best_res = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    while abs(best_res) > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fn(mid) - target
        if abs(f_mid) < abs(best_res):
            best, best_res = mid, f_mid
        if f_mid == 0.0:
            break
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if abs(best_res) > tol:
        raise RootRangeError(
            f"bracket collapsed at {best!r} with residual {best_res!r} > {tol!r}"
        )
    return BracketedRoot(best, best_res, b_lo, b_hi)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_unimodal(
    fn: Callable[[float], float],
    bracket: tuple[float, float],
    mode: str = "min",
    tol: float = 1e-10,
    max_iter: int = 500,
) -> UnimodalResult:
    """Golden-section search on a unimodal ``fn``.

    If the optimum found is no better than an endpoint, the endpoint is
    returned with ``at_boundary`` set.
    """
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    sign = 1.0 if mode == "min" else -1.0

    def h(v):
        return sign * fn(v)

    a, b = map(float, bracket)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = h(c), h(d)
    it = 0
    while abs(b - a) > tol and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = h(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = h(d)
        it += 1
    x, fx = (c, fc) if fc < fd else (d, fd)
    lo, hi = map(float, bracket)
    at_boundary = False
    for end in (lo, hi):
        try:
            f_end = h(end)
        except (ValueError, ZeroDivisionError, OverflowError):
            continue
        if f_end < fx:
            x, fx, at_boundary = end, f_end, True
    if not at_boundary and (abs(x - lo) <= tol or abs(x - hi) <= tol):
        at_boundary = True
    return UnimodalResult(x, sign * fx, at_boundary)


def log_normal_cdf(z: float) -> float:
    """log Phi(z) for the standard normal, accurate in both tails."""
    z = float(z)
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    return float(special.log_ndtr(z))
