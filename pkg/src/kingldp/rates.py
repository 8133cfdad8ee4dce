"""Rate functions, bounds and exact distributions for Kingman's coalescent.

Conventions: ``I`` is the rate of ``n T_n`` on scale n, ``I_hat`` the rate
of ``eps N_eps`` on scale 1/eps, ``sqrt(x - 2)`` the upward rate of ``W_n`` on
scale sqrt(n) and ``I_tilde`` its downward rate on scale n.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    integrate_tail,
    log_normal_cdf,
    optimize_unimodal,
    solve_monotone,
)

__all__ = [
    "Scale",
    "TiltPoint",
    "RateValue",
    "DownRateSolution",
    "eval_f",
    "solve_tilt",
    "eval_Lambda",
    "eval_I",
    "eval_I_closed",
    "eval_I_hat",
    "rate_up_Wn",
    "eval_M",
    "eval_I_tilde",
    "bound_T3",
    "bound_positivity_g",
    "bound_angel",
    "cramer_exp_rate",
    "tavare_pmf",
    "legendre_grid_sup",
    "TAVARE_EPS_FLOOR",
]

Scale = str  # one of "n", "sqrt_n", "inv_eps"
SCALES = ("n", "sqrt_n", "inv_eps")

QUAD_REL_TOL = 1e-13
TAVARE_EPS_FLOOR = 0.05


@dataclass(frozen=True)
class RateValue:
    """A rate value on a declared scale.

    Infinite rates use ``RateValue.infinite(scale)``; the ``finite`` flag is
    the authoritative marker and serialises as ``+inf``.
    """

    value: float
    abs_err_estimate: float
    scale: Scale
    finite: bool = True

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.finite and not (self.value >= 0.0 and math.isfinite(self.value)):
            raise ValueError(f"finite rate must be a nonnegative float, got {self.value!r}")
        if self.abs_err_estimate < 0:
            raise ValueError("abs_err_estimate must be nonnegative")

    @classmethod
    def infinite(cls, scale: Scale) -> "RateValue":
        return cls(math.inf, 0.0, scale, finite=False)

    def __float__(self) -> float:
        return self.value if self.finite else math.inf

    def serialize(self) -> str:
        return "+inf" if not self.finite else f"{self.value:.17g}"


# ---------------------------------------------------------------------------
# f and its inverse


def _f_from_q(q: float) -> float:
    # t = (1 - q)**2, q = 1 - sqrt(t) in (0, 1]
    s = 1.0 - q
    if s == 0.0:
        return 2.0
    return math.log1p(2.0 * s / q) / s


def _f_negative(t: float) -> float:
    r = math.sqrt(-t)
    return 2.0 * math.atan(r) / r


def eval_f(t: float) -> float:
    """Three-branch function whose inverse gives the Legendre tilt of I."""
    t = float(t)
    if not t < 1.0:
        raise ValueError("f is defined for t < 1 only")
    if t == 0.0:
        return 2.0
    if t > 0.0:
        return _f_from_q(1.0 - math.sqrt(t))
    return _f_negative(t)


@dataclass(frozen=True)
class TiltPoint:
    """Solution of f(t_x) = x.

    ``complement`` holds 1 - t_x to full relative precision, which matters
    for large x where t_x rounds to 1.0 in double precision.
    """

    x: float
    t_x: float
    complement: float

    def f(self) -> float:
        if self.t_x > 0.0:
            q = self.complement / (1.0 + math.sqrt(1.0 - self.complement))
            return _f_from_q(q)
        return eval_f(self.t_x)


def solve_tilt(x: float) -> TiltPoint:
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise ValueError("solve_tilt requires a finite x > 0")
    tol = 1e-14 * max(1.0, x)
    if x == 2.0:
        return TiltPoint(x, 0.0, 1.0)
    if x > 2.0:
        # f is decreasing in log q; q = 1 - sqrt(t)
        root = solve_monotone(
            lambda lq: _f_from_q(math.exp(lq)),
            x,
            (-1.0, 0.0),
            tol=tol,
            limits=(-700.0, 0.0),
        )
        q = math.exp(root.root)
        t = (1.0 - q) ** 2
        return TiltPoint(x, t, q * (2.0 - q))
    root = solve_monotone(
        lambda t: _f_negative(t) if t < 0.0 else 2.0,
        x,
        (-1.0, 0.0),
        tol=tol,
        limits=(-1e300, 0.0),
    )
    t = root.root
    return TiltPoint(x, t, 1.0 - t)


# ---------------------------------------------------------------------------
# n T_n: cumulant generating function and rate


def _log_one_minus(t: float, complement: float):
    """Vectorised y -> log(1 - t / y**2) that stays accurate as t -> 1."""
    if t > 0.5:
        # near y = 1 write 1 - t u^2 as (1 - u)(1 + u) + (1 - t) u^2
        def g(y):
            u = 1.0 / y
            near = np.log((1.0 - u) * (1.0 + u) + complement * u * u)
            far = np.log1p(-t * u * u)
            return np.where(u > 0.5, near, far)
    else:
        def g(y):
            return np.log1p(-t / (y * y))
    return g


def eval_Lambda(t: float) -> float:
    """Limiting scaled cumulant generating function of n T_n.

    +inf for t > 1/2; the value at 1/2 is 2 log 2.
    """
    t = float(t)
    if t > 0.5:
        return math.inf
    if t == 0.0:
        return 0.0
    u = 2.0 * t
    res = integrate_tail(_log_one_minus(u, 1.0 - u), rel_tol=QUAD_REL_TOL)
    return -res.value


def _lambda_with_error(t: float):
    u = 2.0 * t
    res = integrate_tail(_log_one_minus(u, 1.0 - u), rel_tol=QUAD_REL_TOL)
    return -res.value, res.abs_err_estimate


def eval_I_closed(x: float) -> float:
    """Closed form -t x / 2 - log(1 - t) of the rate function I."""
    if x <= 0:
        return math.inf
    tp = solve_tilt(x)
    return max(0.0, -0.5 * tp.t_x * x - math.log(tp.complement))


def eval_I(x: float) -> RateValue:
    """Rate of n T_n: t_x x / 2 + int_1^inf log(1 - t_x / y^2) dy."""
    x = float(x)
    if not x > 0.0:
        return RateValue.infinite("n")
    tp = solve_tilt(x)
    if tp.t_x == 0.0:
        return RateValue(0.0, 0.0, "n")
    quad = integrate_tail(_log_one_minus(tp.t_x, tp.complement), rel_tol=QUAD_REL_TOL)
    value = 0.5 * tp.t_x * x + quad.value
    residual = abs(tp.f() - x)
    err = quad.abs_err_estimate + abs(tp.t_x) * residual + 4 * math.ulp(max(abs(value), 1.0))
    return RateValue(max(0.0, value), err, "n")


def eval_I_hat(x: float) -> RateValue:
    """Rate of eps N_eps: x I(x), pi^2/2 at 0, infinite below 0."""
    x = float(x)
    if x < 0.0:
        return RateValue.infinite("inv_eps")
    if x == 0.0:
        return RateValue(math.pi**2 / 2.0, 0.0, "inv_eps")
    r = eval_I(x)
    return RateValue(x * r.value, x * r.abs_err_estimate, "inv_eps")


def legendre_grid_sup(x: float, grid, cgf=eval_Lambda):
    """max over ``grid`` of t x - cgf(t); returns (argmax, value)."""
    best_t, best = math.nan, -math.inf
    for t in grid:
        lam = cgf(float(t))
        if not math.isfinite(lam):
            continue
        v = t * x - lam
        if v > best:
            best_t, best = float(t), v
    return best_t, best


# ---------------------------------------------------------------------------
# Homozygosity W_n


def rate_up_Wn(x: float) -> RateValue:
    x = float(x)
    if not x >= 2.0:
        raise ValueError("upward rate of W_n is defined for x >= 2")
    return RateValue(math.sqrt(x - 2.0), 0.0, "sqrt_n")


def eval_M(x: float, c: float, t: float) -> float:
    """log E exp(t (c R - (R^2 + c^2) / (2 sqrt x))) for R ~ Exp(1)."""
    if not t > 0.0:
        raise ValueError("eval_M requires t > 0")
    if c < 0.0:
        raise ValueError("eval_M requires c >= 0")
    sx = math.sqrt(x)
    m1 = 0.5 * math.log(2.0 * math.pi) + 0.25 * math.log(x) - 0.5 * math.log(t)
    tc1 = t * c - 1.0
    m2 = (tc1 * tc1 * x - t * t * c * c) / (2.0 * t * sx)
    m3 = log_normal_cdf(tc1 * x**0.25 / math.sqrt(t))
    return m1 + m2 + m3


@dataclass(frozen=True)
class DownRateSolution:
    x: float
    c_star: float
    t_star: float
    value: float
    converged: bool
    diagnostics: dict = field(default_factory=dict, compare=False)


T_SEARCH = (1e-6, 1e3)
C_SEARCH = (0.0, 50.0)
C_GRID_POINTS = 200
OPT_TOL = 1e-10


def _inner_inf(x: float, c: float):
    lo, hi = math.log(T_SEARCH[0]), math.log(T_SEARCH[1])
    res = optimize_unimodal(lambda lt: eval_M(x, c, math.exp(lt)), (lo, hi), "min", OPT_TOL)
    return res.value, math.exp(res.argopt), res.at_boundary


def eval_I_tilde(x: float) -> DownRateSolution:
    """Downward rate of W_n, -sup_{c>=0} inf_{t>0} M(x, c, t).

    Inner infimum: golden section in log t (M is convex in t).  Outer
    supremum: coarse grid on c, then golden refinement between the grid
    neighbours of the best point.
    """
    x = float(x)
    if not 1.0 < x < 2.0:
        raise ValueError("I_tilde is defined for 1 < x < 2")
    cs = np.linspace(C_SEARCH[0], C_SEARCH[1], C_GRID_POINTS + 1)[1:]
    vals = [_inner_inf(x, float(c))[0] for c in cs]
    i = int(np.argmax(vals))
    lo = float(cs[i - 1]) if i > 0 else C_SEARCH[0]
    hi = float(cs[min(i + 1, cs.size - 1)])
    outer = optimize_unimodal(lambda c: _inner_inf(x, c)[0], (lo, hi), "max", OPT_TOL)
    c_star = outer.argopt
    sup_inf, t_star, inner_boundary = _inner_inf(x, c_star)
    outer_boundary = i == cs.size - 1 or (outer.at_boundary and i == 0 and c_star <= lo)
    converged = not inner_boundary and not outer_boundary and math.isfinite(sup_inf)
    # value spread over a neighbourhood much wider than the outer tolerance
    probe = [_inner_inf(x, c)[0] for c in (max(c_star - 1e-5, 1e-12), c_star + 1e-5)]
    err = max(abs(v - sup_inf) for v in probe if math.isfinite(v)) + 4 * math.ulp(max(abs(sup_inf), 1.0))
    return DownRateSolution(
        x=x,
        c_star=c_star,
        t_star=t_star,
        value=max(0.0, -sup_inf),
        converged=converged,
        diagnostics={
            "grid_best_c": float(cs[i]),
            "grid_best_value": float(vals[i]),
            "abs_err_estimate": err,
        },
    )


def bound_T3(x: float) -> float:
    """Upper bound 1/sqrt(x - 1) - 1 on I_tilde(x)."""
    if not 1.0 < x < 2.0:
        raise ValueError("bound_T3 is defined for 1 < x < 2")
    return 1.0 / math.sqrt(x - 1.0) - 1.0


def _g_parts(x: float):
    a = math.sqrt(x)
    b = math.sqrt(x - 1.0)
    return a - b, a + b


def bound_positivity_g(x: float):
    """sup_c P(r1(c) <= R <= r2(c)) in closed form, and -log of it.

    Returns ``(g, implied_upper_bound)``.
    """
    if not 1.0 < x < 2.0:
        raise ValueError("bound_positivity_g is defined for 1 < x < 2")
    lo, hi = _g_parts(x)
    b = math.sqrt(x - 1.0)
    ratio = lo / hi
    g = (2.0 * b / hi) * ratio ** (lo / (2.0 * b))
    return g, -math.log(g)


def positivity_objective(x: float, c: float) -> float:
    """P(r1 <= R <= r2) = exp(-c(sqrt x - sqrt(x-1))) - exp(-c(sqrt x + sqrt(x-1)))."""
    lo, hi = _g_parts(x)
    return math.exp(-c * lo) - math.exp(-c * hi)


def bound_angel(x: float) -> float:
    """Quadratic lower bound (x - 2)^2 / 4 on I_hat, valid on (1.5, 2.5)."""
    if not 1.5 < x < 2.5:
        raise ValueError("bound_angel is defined for 1.5 < x < 2.5")
    return (x - 2.0) ** 2 / 4.0


def cramer_exp_rate(y: float) -> float:
    """Cramer rate y - 1 - log y of the mean of Exp(1) variables."""
    if not y > 0.0:
        raise ValueError("cramer_exp_rate requires y > 0")
    return y - 1.0 - math.log(y)


# ---------------------------------------------------------------------------
# Exact distribution of N_eps


def tavare_pmf(eps: float, n: int) -> float:
    """P(N_eps = n) from the alternating series over k >= n.

    The k-th term is (-1)^(k-n) (2k-1) C(n+k-2, k-1) C(k-1, n-1) / n
    times exp(-k(k-1) eps / 2).  Near the stability floor the terms reach
    1e9 while the sum is O(1), so they are formed from exact integer
    binomials and summed in 60-digit decimal arithmetic.
    """
    eps = float(eps)
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not eps >= TAVARE_EPS_FLOOR:
        raise ValueError(
            f"eps={eps!r} is below the stability floor {TAVARE_EPS_FLOOR}; "
            "estimate P(N_eps = n) by Monte Carlo instead"
        )
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        half_eps = decimal.Decimal(eps) / 2
        total = decimal.Decimal(0)
        peak = decimal.Decimal(0)
        k = n
        while True:
            coef = (2 * k - 1) * math.comb(n + k - 2, k - 1) * math.comb(k - 1, n - 1)
            mag = decimal.Decimal(coef) * (-half_eps * (k * (k - 1))).exp() / n
            total += mag if (k - n) % 2 == 0 else -mag
            peak = max(peak, mag)
            # magnitudes decay once the Gaussian factor wins
            if k > n and mag < peak * decimal.Decimal("1e-40") and k * eps > 2.0:
                break
            k += 1
        return float(total)
