"""Verification checks backing ``kingldp verify``.

Each check returns :class:`CheckResult` rows; a failing check never stops the
others.  Monte Carlo checks draw their seeds from the suite seed, so a
suite's report is a deterministic function of (seed, budget).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import harness, rates
from .coalescent import RngStream, sample_families, sample_Tn, sample_Wn

__all__ = ["CheckResult", "SUITES", "run_suite"]

PI2_HALF = math.pi**2 / 2.0


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    reference: float
    detail: str = ""
    extra: dict = field(default_factory=dict, repr=False)


# ---------------------------------------------------------------------------
# analytic checks


def check_fixed_points() -> list[CheckResult]:
    out = []
    v = rates.eval_I(2.0).value
    out.append(CheckResult("rates", "I(2)=0", abs(v) <= 1e-10, v, 0.0, "tol 1e-10"))
    v = rates.eval_I_hat(0.0).value
    out.append(CheckResult("rates", "I_hat(0)=pi^2/2", abs(v - PI2_HALF) <= 1e-10, v, PI2_HALF, "tol 1e-10"))
    v = rates.eval_Lambda(0.0)
    out.append(CheckResult("rates", "Lambda(0)=0", abs(v) <= 1e-12, v, 0.0, "tol 1e-12"))
    v = rates.eval_f(0.0)
    out.append(CheckResult("rates", "f(0)=2", abs(v - 2.0) <= 1e-12, v, 2.0, "tol 1e-12"))
    v = rates.bound_T3(1.25)
    out.append(CheckResult("rates", "bound_T3(1.25)=1", v == 1.0, v, 1.0, "exact"))
    return out


def check_closed_form(points: int = 50) -> list[CheckResult]:
    grid = np.geomspace(0.05, 50.0, points)
    gaps = [abs(rates.eval_I(x).value - rates.eval_I_closed(x)) for x in grid]
    worst = int(np.argmax(gaps))
    return [
        CheckResult(
            "rates",
            "quadrature vs closed form",
            max(gaps) <= 1e-8,
            max(gaps),
            0.0,
            f"{points} points on [0.05, 50], worst at x={grid[worst]:.6g}, tol 1e-8",
        )
    ]


def check_duality(xs=(1.0, 2.0, 3.0, 5.0), points: int = 21001) -> list[CheckResult]:
    grid = np.linspace(-10.0, 0.5, points)
    cgf = functools.lru_cache(maxsize=None)(rates.eval_Lambda)
    out = []
    for x in xs:
        _, sup = rates.legendre_grid_sup(x, grid, cgf)
        ref = rates.eval_I(x).value
        out.append(
            CheckResult("rates", f"Legendre sup at x={x:g}", abs(sup - ref) <= 1e-4, float(sup), ref, "tol 1e-4")
        )
    return out


def check_asymptotics() -> list[CheckResult]:
    small = [x * rates.eval_I(x).value for x in (0.5, 0.1, 0.02)]
    d_small = [abs(v - PI2_HALF) for v in small]
    ok_small = d_small[0] > d_small[1] > d_small[2] and d_small[2] <= 0.1 * PI2_HALF
    large = [rates.eval_I(x).value / x for x in (10.0, 25.0, 50.0)]
    d_large = [abs(v - 0.5) for v in large]
    corrected = 0.5 - 2.0 * math.log(2.0) / 50.0
    ok_large = d_large[0] > d_large[1] > d_large[2] and abs(large[2] - corrected) <= 0.03 * corrected
    return [
        CheckResult("rates", "x I(x) -> pi^2/2 as x -> 0", ok_small, small[2], PI2_HALF,
                    "x=0.5,0.1,0.02: " + ", ".join(f"{v:.6g}" for v in small)),
        CheckResult("rates", "I(x)/x -> 1/2 as x -> inf", ok_large, large[2], corrected,
                    "x=10,25,50: " + ", ".join(f"{v:.6g}" for v in large)),
    ]


def check_bounds(points: int = 50) -> list[CheckResult]:
    xs = np.linspace(1.5, 2.5, points + 2)[1:-1]
    worst_angel = min(rates.eval_I_hat(x).value - rates.bound_angel(x) for x in xs)
    out = [
        CheckResult("rates", "I_hat >= (x-2)^2/4 on (1.5, 2.5)", worst_angel >= 0.0, worst_angel, 0.0,
                    "minimum gap")
    ]
    xs = np.linspace(1.05, 1.95, points)
    worst_upper, worst_lower, all_converged = math.inf, math.inf, True
    for x in xs:
        sol = rates.eval_I_tilde(x)
        upper = min(rates.bound_T3(x), rates.bound_positivity_g(x)[1])
        worst_upper = min(worst_upper, upper - sol.value)
        worst_lower = min(worst_lower, sol.value)
        all_converged &= sol.converged
    out.append(CheckResult("rates", "0 <= I_tilde on (1.05, 1.95)", worst_lower >= 0.0, worst_lower, 0.0,
                           "minimum value"))
    out.append(CheckResult("rates", "I_tilde <= min(T3, -log g)", worst_upper >= 0.0, worst_upper, 0.0,
                           "minimum gap"))
    out.append(CheckResult("rates", "I_tilde converged", bool(all_converged), float(all_converged), 1.0, ""))
    return out


def check_tavare_normalization(eps_values=(0.5, 1.0)) -> list[CheckResult]:
    out = []
    for eps in eps_values:
        total = math.fsum(rates.tavare_pmf(eps, n) for n in range(1, 400))
        out.append(CheckResult("rates", f"sum of tavare_pmf at eps={eps:g}", abs(total - 1.0) <= 1e-6,
                               total, 1.0, "tol 1e-6"))
    return out


# ---------------------------------------------------------------------------
# sampler and distribution checks


def _mean_check(name, draws, target):
    mean = float(np.mean(draws))
    se = float(np.std(draws, ddof=1) / math.sqrt(draws.size))
    return CheckResult("distributions", name, abs(mean - target) <= 3 * se, mean, target,
                       f"se {se:.3g}, {draws.size} draws")


def check_sampler_means(trials: int, seed: int) -> list[CheckResult]:
    out = []
    for i, n in enumerate((1, 10, 100)):
        draws = n * sample_Tn(n, trials, RngStream(seed, 100 + i))
        out.append(_mean_check(f"mean of n T_n at n={n}", draws, 2.0))
    for i, n in enumerate((5, 50)):
        draws = sample_Wn(n, "direct", RngStream(seed, 200 + i), size=trials)
        out.append(_mean_check(f"mean of W_n at n={n}", draws, 2.0 * n / (n + 1)))
    return out


def check_ks_identities(samples: int, seed: int, n: int = 10) -> list[CheckResult]:
    gen_a = RngStream(seed, 300).generator()
    gen_b = RngStream(seed, 301).generator()
    a = np.array([sample_families(n, "spacings", gen_a).freqs[0] for _ in range(samples)])
    b = np.array([sample_families(n, "normalized_exponentials", gen_b).freqs[0] for _ in range(samples)])
    d1, p1 = harness.ks_two_sample(a, b)
    a = sample_Wn(n, "direct", RngStream(seed, 302), size=samples)
    b = sample_Wn(n, "ordered", RngStream(seed, 303), size=samples)
    d2, p2 = harness.ks_two_sample(a, b)
    return [
        CheckResult("distributions", "KS spacings vs normalized exponentials (F_1)", p1 > 0.01, p1, 0.01,
                    f"D={d1:.4g}"),
        CheckResult("distributions", "KS direct vs ordered W_n", p2 > 0.01, p2, 0.01, f"D={d2:.4g}"),
    ]


def check_tavare_frequencies(trials: int, seed: int, eps: float = 0.5) -> list[CheckResult]:
    counts, _ = harness.simulate_statistic("epsNeps", eps, trials, seed)
    freq = np.bincount(counts.astype(int))
    worst, worst_n, ok = 0.0, 0, True
    for n in range(1, freq.size + 20):
        p = rates.tavare_pmf(eps, n)
        if p < 1e-3:
            continue
        obs = freq[n] / trials if n < freq.size else 0.0
        z = abs(obs - p) / math.sqrt(p * (1 - p) / trials)
        if z > worst:
            worst, worst_n = z, n
        ok &= z <= 3.0
    return [CheckResult("distributions", f"N_eps frequencies vs tavare_pmf at eps={eps:g}", bool(ok), worst, 3.0,
                        f"largest |z| at n={worst_n}, {trials} paths")]


# ---------------------------------------------------------------------------
# large-deviation slopes

SLOPE_STUDIES = (
    ("nTn >= 2.5", "nTn", ">=", 2.5, (20, 40, 80)),
    ("Wn >= 2.0225", "Wn", ">=", 2.0225, (25, 100, 400)),
    ("Wn <= 1.5", "Wn", "<=", 1.5, (25, 50, 100)),
    ("epsNeps >= 3", "epsNeps", ">=", 3.0, (0.2, 0.1, 0.05)),
)


def curve_detail(curve) -> str:
    pts = "; ".join(
        f"{r[0]:g}: {r[1]:.4g} [{r[2][0]:.4g}, {r[2][1]:.4g}] hits={r[3].hits}" for r in curve.rows
    )
    return f"{pts}; tau={curve.kendall_tau:.3g}, monotone={curve.monotone}, final_within={curve.final_within}"


def check_slopes(cap: int, seed: int, threads: int | None = None) -> list[CheckResult]:
    out = []
    for i, (label, stat, direction, x, grid) in enumerate(SLOPE_STUDIES):
        curve = harness.empirical_rate_curve(stat, direction, x, grid, "auto", seed + i, threads, cap)
        out.append(CheckResult("ldp-slopes", f"slope {label}", curve.monotone and curve.final_within,
                               curve.rows[-1][1], curve.analytic, curve_detail(curve), {"curve": curve}))
    return out


def check_cramer(cap: int, seed: int, threads: int | None = None, n: int = 80) -> list[CheckResult]:
    out = []
    for i, y in enumerate((0.5, 2.0)):
        rep = harness.cramer_selfcheck(y, [n], "auto", seed + 10 + i, threads, cap)
        _, est, exact, within = rep.rows[0]
        out.append(CheckResult(
            "ldp-slopes", f"Cramer self-check y={y:g}, n={n}", bool(within), est.rate_hat, rep.analytic,
            f"hits={est.hits} of {est.trials}, rate CI [{est.rate_ci[0]:.4g}, {est.rate_ci[1]:.4g}], "
            f"exact finite-n rate {exact:.4g}",
            {"report": rep},
        ))
    return out


# ---------------------------------------------------------------------------

SUITES = ("rates", "distributions", "ldp-slopes", "all")


def run_suite(suite: str, budget: int = 10**6, seed: int = 0, threads: int | None = None) -> list[CheckResult]:
    """Run a suite.  ``budget`` caps the trials of every Monte Carlo point."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    budget = int(budget)
    if budget < harness.MIN_TRIALS:
        raise ValueError(f"budget must be at least {harness.MIN_TRIALS}")
    out: list[CheckResult] = []
    if suite in ("rates", "all"):
        for fn in (check_fixed_points, check_closed_form, check_duality, check_asymptotics,
                   check_bounds, check_tavare_normalization):
            out += fn()
    if suite in ("distributions", "all"):
        trials = min(budget, 10**5)
        out += check_sampler_means(trials, seed)
        out += check_ks_identities(min(budget, 10**4), seed)
        out += check_tavare_frequencies(trials, seed)
    if suite in ("ldp-slopes", "all"):
        out += check_slopes(budget, seed, threads)
        out += check_cramer(budget, seed, threads)
    return out
