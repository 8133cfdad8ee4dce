"""Monte Carlo estimation of large-deviation probabilities.

Trials are grouped in fixed-size blocks.  Block ``b`` of an estimate with
seed ``s`` draws from ``RngStream(s, b)``; the block size depends only on
the event.  Hit counts are therefore identical for any number of worker
threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import rates
from .coalescent import RngStream, line_count_cutoff, sample_line_counts, sample_Tn, sample_Wn

__all__ = [
    "EventSpec",
    "MCEstimate",
    "RateCurve",
    "wilson_interval",
    "estimate",
    "auto_trials",
    "within_policy",
    "empirical_rate_curve",
    "ks_two_sample",
    "cramer_selfcheck",
    "default_threads",
    "simulate_statistic",
    "MIN_TRIALS",
    "TRIAL_CAP",
]

MIN_TRIALS = 1000
TRIAL_CAP = 10**8
TARGET_DRAWS_PER_BLOCK = 1 << 20
Z95 = float(stats.norm.ppf(0.975))
Z95_ONE_SIDED = float(stats.norm.ppf(0.95))

STATISTICS = ("nTn", "epsNeps", "Wn")
DIRECTIONS = (">=", "<=")


def default_threads() -> int:
    return max(1, int(os.environ.get("KINGLDP_THREADS", "1")))


def _natural_scale(statistic: str, direction: str) -> str:
    if statistic == "nTn":
        return "n"
    if statistic == "epsNeps":
        return "inv_eps"
    return "sqrt_n" if direction == ">=" else "n"


@dataclass(frozen=True)
class EventSpec:
    """{statistic >= threshold} or {statistic <= threshold} at a size parameter.

    ``size_param`` is n for ``nTn`` and ``Wn`` and eps for ``epsNeps``.  The
    scale is fixed by the statistic and direction; passing another one
    raises.
    """

    statistic: str
    direction: str
    threshold: float
    size_param: float
    scale: str | None = None

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        natural = _natural_scale(self.statistic, self.direction)
        if self.scale is None:
            object.__setattr__(self, "scale", natural)
        elif self.scale != natural:
            raise ValueError(
                f"{self.statistic} {self.direction} deviations live on scale "
                f"{natural!r}, not {self.scale!r}"
            )
        if self.statistic == "epsNeps":
            if not self.size_param > 0:
                raise ValueError("eps must be positive")
        elif int(self.size_param) != self.size_param or self.size_param < 1:
            raise ValueError("n must be a positive integer")

    @property
    def scale_value(self) -> float:
        if self.scale == "n":
            return float(self.size_param)
        if self.scale == "sqrt_n":
            return math.sqrt(self.size_param)
        return 1.0 / self.size_param

    def analytic_rate(self) -> float:
        """Limit rate predicted for this event, or nan if none applies."""
        x = self.threshold
        if self.statistic == "nTn":
            typical = (self.direction == ">=" and x <= 2) or (self.direction == "<=" and x >= 2)
            return 0.0 if typical else float(rates.eval_I(x))
        if self.statistic == "epsNeps":
            typical = (self.direction == ">=" and x <= 2) or (self.direction == "<=" and x >= 2)
            return 0.0 if typical else float(rates.eval_I_hat(x))
        if self.direction == ">=":
            return rates.rate_up_Wn(x).value if x >= 2 else 0.0
        if x < 1:
            return math.inf
        if x >= 2:
            return 0.0
        if x == 1:
            return math.nan
        return rates.eval_I_tilde(x).value

    # -- sampling ---------------------------------------------------------

    def _draws_per_trial(self) -> int:
        if self.statistic == "Wn":
            return int(self.size_param)
        n = self._tail_level()
        if n is None:
            return 1
        return max(4 * (n + 1), 256) - n

    def _tail_level(self):
        """Index n with the event expressed through T_n (None if trivial)."""
        if self.statistic == "nTn":
            return int(self.size_param)
        ratio = self.threshold / self.size_param
        if self.direction == ">=":
            m = math.ceil(ratio - 1e-9)
            # {N_eps >= m} = {T_{m-1} >= eps}
            return m - 1 if m >= 2 else None
        m = math.floor(ratio + 1e-9)
        # {N_eps <= m} = {T_m < eps}
        return m if m >= 1 else None

    def block_size(self) -> int:
        return int(np.clip(TARGET_DRAWS_PER_BLOCK // max(self._draws_per_trial(), 1), 256, 65536))

    def count_hits(self, size: int, stream: RngStream) -> int:
        gen = stream.generator()
        x = self.threshold
        if self.statistic == "Wn":
            w = sample_Wn(int(self.size_param), "direct", gen, size=size)
            return int(np.count_nonzero(w >= x if self.direction == ">=" else w <= x))
        n = self._tail_level()
        if self.statistic == "nTn":
            v = n * sample_Tn(n, size, gen)
            return int(np.count_nonzero(v >= x if self.direction == ">=" else v <= x))
        eps = self.size_param
        if n is None:
            # >= with m <= 1 always holds; <= with m < 1 never does
            return size if self.direction == ">=" else 0
        t = sample_Tn(n, size, gen)
        return int(np.count_nonzero(t >= eps if self.direction == ">=" else t < eps))


@dataclass(frozen=True)
class MCEstimate:
    trials: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    scale_value: float
    rate_hat: float
    rate_ci: tuple
    lower_bound_only: bool = False
    seed: int | None = field(default=None, compare=False)


def wilson_interval(hits: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = hits / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    if hits == 0:
        lo = 0.0
    if hits == trials:
        hi = 1.0
    return lo, hi


def _neg_log_over(p: float, s: float) -> float:
    return math.inf if p <= 0.0 else -math.log(p) / s


def _run_blocks(event: EventSpec, trials: int, seed: int, threads: int) -> int:
    bsize = event.block_size()
    nblocks = -(-trials // bsize)
    sizes = [bsize] * (nblocks - 1) + [trials - bsize * (nblocks - 1)]

    def job(b):
        return event.count_hits(sizes[b], RngStream(seed, b))

    if threads <= 1 or nblocks == 1:
        return sum(job(b) for b in range(nblocks))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(job, range(nblocks)))


def estimate(
    event: EventSpec,
    trials: int,
    rng_seed: int,
    threads: int | None = None,
) -> MCEstimate:
    """Crude Monte Carlo estimate of P(event) and the implied rate.

    With zero hits the interval is the one-sided 95% Wilson bound and the
    rate is only a lower bound.
    """
    trials = int(trials)
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    threads = default_threads() if threads is None else int(threads)
    hits = _run_blocks(event, trials, int(rng_seed), threads)
    s = event.scale_value
    p_hat = hits / trials
    if hits == 0:
        lo, hi = wilson_interval(0, trials, Z95_ONE_SIDED)
    else:
        lo, hi = wilson_interval(hits, trials)
    rate_ci = (_neg_log_over(hi, s), _neg_log_over(lo, s))
    if hits == 0:
        rate_hat = rate_ci[0]
    else:
        rate_hat = _neg_log_over(p_hat, s)
    return MCEstimate(
        trials=trials,
        hits=hits,
        p_hat=p_hat,
        ci_low=lo,
        ci_high=hi,
        scale_value=s,
        rate_hat=rate_hat,
        rate_ci=rate_ci,
        lower_bound_only=hits == 0,
        seed=int(rng_seed),
    )


def auto_trials(event: EventSpec, cap: int = TRIAL_CAP) -> int:
    """min(cap, 200 exp(scale * rate)), at least MIN_TRIALS."""
    rate = event.analytic_rate()
    if not math.isfinite(rate):
        return int(cap) if rate == math.inf else MIN_TRIALS
    expo = event.scale_value * rate
    if expo > math.log(cap / 200.0):
        return int(cap)
    return int(min(cap, max(MIN_TRIALS, math.ceil(200.0 * math.exp(expo)))))


def within_policy(est: MCEstimate, analytic: float) -> bool:
    """Is ``analytic`` inside the rate CI widened by the slack factor 1 + 4/scale?

    A zero-hit estimate only bounds the rate from below and never passes.
    """
    if est.lower_bound_only:
        return False
    kappa = 1.0 + 4.0 / est.scale_value
    lo, hi = est.rate_ci
    return lo / kappa <= analytic <= hi * kappa


@dataclass
class RateCurve:
    statistic: str
    direction: str
    threshold: float
    analytic: float
    rows: list  # (size_param, rate_hat, rate_ci, MCEstimate)
    kendall_tau: float
    monotone: bool
    final_within: bool

    @property
    def distances(self):
        return [abs(r[1] - self.analytic) for r in self.rows]


def point_seed(rng_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(rng_seed), int(index)]).generate_state(1, np.uint64)[0])


def empirical_rate_curve(
    statistic: str,
    direction: str,
    threshold: float,
    size_grid,
    trials_per_point="auto",
    rng_seed: int = 0,
    threads: int | None = None,
    cap: int = TRIAL_CAP,
) -> RateCurve:
    """Empirical rates along ``size_grid``, ordered by increasing scale.

    The trend toward the analytic rate is summarised by Kendall's tau
    between the scale and |rate_hat - analytic| (negative means approaching).
    """
    events = [EventSpec(statistic, direction, threshold, s) for s in size_grid]
    events.sort(key=lambda e: e.scale_value)
    analytic = events[0].analytic_rate()
    rows = []
    for i, ev in enumerate(events):
        trials = auto_trials(ev, cap) if trials_per_point == "auto" else int(trials_per_point)
        est = estimate(ev, trials, point_seed(rng_seed, i), threads)
        rows.append((ev.size_param, est.rate_hat, est.rate_ci, est))
    dist = [abs(r[1] - analytic) for r in rows]
    if len(rows) > 1:
        tau = float(stats.kendalltau([e.scale_value for e in events], dist).statistic)
    else:
        tau = math.nan
    monotone = all(b < a for a, b in zip(dist, dist[1:]))
    final_within = within_policy(rows[-1][3], analytic)
    return RateCurve(statistic, direction, threshold, analytic, rows, tau, monotone, final_within)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sided two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n, m = a.size, b.size
    if n < 100 or m < 100:
        raise ValueError("both samples need at least 100 points")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n
    cdf_b = np.searchsorted(b, grid, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n * m / (n + m))
    return d, float(special.kolmogorov(en * d))


# ---------------------------------------------------------------------------
# Cramer self-check on means of Exp(1) variables


@dataclass(frozen=True)
class _MeanEvent:
    n: int
    direction: str
    threshold: float

    @property
    def scale_value(self) -> float:
        return float(self.n)

    def block_size(self) -> int:
        return 65536

    def count_hits(self, size: int, stream: RngStream) -> int:
        # the sum of n Exp(1) variables is Gamma(n, 1)
        m = stream.generator().gamma(self.n, size=size) / self.n
        return int(np.count_nonzero(m >= self.threshold if self.direction == ">=" else m <= self.threshold))


@dataclass
class CramerReport:
    threshold: float
    direction: str
    analytic: float
    rows: list  # (n, MCEstimate, exact_finite_n_rate, within)
    monotone: bool

    @property
    def final_within(self) -> bool:
        return bool(self.rows[-1][3])


def cramer_selfcheck(
    threshold: float,
    n_grid,
    trials="auto",
    rng_seed: int = 0,
    threads: int | None = None,
    cap: int = TRIAL_CAP,
) -> CramerReport:
    """Empirical -(1/n) log P(mean of n Exp(1) beyond threshold) vs y - 1 - log y.

    Each row also carries the exact finite-n rate from the Gamma CDF.
    """
    threshold = float(threshold)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    direction = "<=" if threshold <= 1.0 else ">="
    analytic = rates.cramer_exp_rate(threshold)
    threads = default_threads() if threads is None else int(threads)
    rows = []
    for i, n in enumerate(sorted(int(v) for v in n_grid)):
        ev = _MeanEvent(n, direction, threshold)
        if trials == "auto":
            expo = n * analytic
            t = cap if expo > math.log(cap / 200.0) else max(MIN_TRIALS, math.ceil(200 * math.exp(expo)))
            t = int(min(cap, t))
        else:
            t = int(trials)
        seed = point_seed(rng_seed, i)
        hits = _run_blocks(ev, t, seed, threads)
        if hits == 0:
            lo, hi = wilson_interval(0, t, Z95_ONE_SIDED)
        else:
            lo, hi = wilson_interval(hits, t)
        rate_ci = (_neg_log_over(hi, n), _neg_log_over(lo, n))
        p_hat = hits / t
        est = MCEstimate(
            trials=t,
            hits=hits,
            p_hat=p_hat,
            ci_low=lo,
            ci_high=hi,
            scale_value=float(n),
            rate_hat=rate_ci[0] if hits == 0 else _neg_log_over(p_hat, n),
            rate_ci=rate_ci,
            lower_bound_only=hits == 0,
            seed=seed,
        )
        if direction == "<=":
            exact_p = float(special.gammainc(n, n * threshold))
        else:
            exact_p = float(special.gammaincc(n, n * threshold))
        rows.append((n, est, _neg_log_over(exact_p, n), within_policy(est, analytic)))
    dist = [abs(r[1].rate_hat - analytic) for r in rows]
    monotone = all(b < a for a, b in zip(dist, dist[1:]))
    return CramerReport(threshold, direction, analytic, rows, monotone)


# ---------------------------------------------------------------------------
# Raw samples

SAMPLE_BLOCK = 4096


def simulate_statistic(
    statistic: str,
    size_param: float,
    trials: int,
    rng_seed: int,
    threads: int | None = None,
) -> tuple[np.ndarray, dict]:
    """Raw draws of n*T_n, N_eps or W_n with truncation metadata.

    Block ``b`` of ``SAMPLE_BLOCK`` draws uses ``RngStream(rng_seed, b)``.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be positive")
    if statistic == "nTn":
        n = int(size_param)
        if n != size_param or n < 1:
            raise ValueError("n must be a positive integer")
        K = max(4 * (n + 1), 256)

        def draw(size, gen):
            return n * sample_Tn(n, size, gen, K=K)

    elif statistic == "epsNeps":
        eps = float(size_param)
        if not eps > 0:
            raise ValueError("eps must be positive")
        K = line_count_cutoff(eps)

        def draw(size, gen):
            return sample_line_counts(eps, size, gen, K=K).astype(float)

    elif statistic == "Wn":
        n = int(size_param)
        if n != size_param or n < 1:
            raise ValueError("n must be a positive integer")
        K = None

        def draw(size, gen):
            return sample_Wn(n, "direct", gen, size=size)

    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    threads = default_threads() if threads is None else int(threads)
    nblocks = -(-trials // SAMPLE_BLOCK)
    sizes = [SAMPLE_BLOCK] * (nblocks - 1) + [trials - SAMPLE_BLOCK * (nblocks - 1)]

    def job(b):
        return draw(sizes[b], RngStream(int(rng_seed), b).generator())

    if threads <= 1 or nblocks == 1:
        parts = [job(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(nblocks)))
    meta = {
        "statistic": statistic,
        "size_param": size_param,
        "trials": trials,
        "seed": int(rng_seed),
        "truncation_K": K,
        "bias_bound": None if K is None else 2.0 / K,
        "remainder": None if K is None else "gamma",
    }
    return np.concatenate(parts), meta
