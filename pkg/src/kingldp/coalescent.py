"""Samplers for the tree-top of Kingman's coalescent.

The tree is generated from the root outwards: while there are k lines the
tree waits S_k / C(k, 2) with S_k ~ Exp(1), so the time spent above the
n-line level is T_n = sum_{k > n} S_k / C(k, 2).  Sums are truncated at a
cutoff K; the remainder sum_{k > K} is either dropped or replaced by a
moment-matched Gamma draw.

Randomness comes from :class:`RngStream` values.  A stream is a Philox key,
so a given (seed, stream_id) always replays the same draws.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "RngStream",
    "CoalescentTailPath",
    "FamilyPartition",
    "TruncationWarning",
    "as_generator",
    "choose_cutoff",
    "tail_remainder_moments",
    "sample_tail_path",
    "sample_Tn",
    "count_lines_at",
    "count_lines",
    "sample_line_counts",
    "line_count_cutoff",
    "sample_families",
    "sample_Wn",
    "sample_Wn_tilted",
    "wn_direct",
    "wn_ordered",
]

_MASK64 = (1 << 64) - 1


class TruncationWarning(RuntimeWarning):
    """The truncated remainder is large enough to change a line count."""


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = (int(self.seed) & _MASK64) | ((int(self.stream_id) & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def choose_cutoff(n_max: int, bias: float = 1e-6) -> int:
    """Cutoff K with mean truncation bias 2/K at most ``bias``."""
    return max(int(n_max) + 1, math.ceil(2.0 / bias))


@functools.lru_cache(maxsize=256)
def tail_remainder_moments(K: int) -> tuple[float, float]:
    """Mean and variance of sum_{k > K} S_k / C(k, 2)."""
    K = int(K)
    mean = 2.0 / K
    stop = K + 200_000
    k = np.arange(stop, K, -1, dtype=float)
    head = float(np.sum((2.0 / (k * (k - 1.0))) ** 2))
    # sum_{k > stop} 4 / k^4 to leading orders
    tail = 4.0 / (3.0 * stop**3) + 2.0 / stop**4
    return mean, head + tail


def _remainder_draw(K: int, gen: np.random.Generator, size=None):
    mean, var = tail_remainder_moments(K)
    shape = mean * mean / var
    return gen.gamma(shape, var / mean, size=size)


@dataclass(frozen=True)
class CoalescentTailPath:
    """Times T_1 > T_2 > ... > T_{K-1} of one tree-top realisation.

    ``bias_bound`` is 2/K, the mean of the part of the series beyond the
    cutoff.  With ``remainder == "drop"`` that part is missing from every
    ``times`` entry; with ``"gamma"`` it was replaced by a Gamma draw with
    the same mean and variance and stored in ``remainder_value``.
    """

    cutoff_K: int
    times: np.ndarray
    bias_bound: float
    remainder: str = "drop"
    remainder_value: float = 0.0

    def T(self, n: int) -> float:
        if not 1 <= n < self.cutoff_K:
            raise IndexError(f"T_{n} not resolved by a path with cutoff K={self.cutoff_K}")
        return float(self.times[n - 1])


def _check_remainder(remainder: str):
    if remainder not in ("drop", "gamma"):
        raise ValueError("remainder must be 'drop' or 'gamma'")


def sample_tail_path(K: int, rng: RngLike, remainder: str = "drop") -> CoalescentTailPath:
    """Draw S_2..S_K (in that order) and return the truncated T_n, n < K."""
    K = int(K)
    if K < 2:
        raise ValueError("cutoff K must be >= 2")
    _check_remainder(remainder)
    gen = as_generator(rng)
    k = np.arange(2, K + 1, dtype=float)
    holding = gen.standard_exponential(K - 1) * (2.0 / (k * (k - 1.0)))
    rest = float(_remainder_draw(K, gen)) if remainder == "gamma" else 0.0
    # T_n = rest + sum_{k=n+1}^K holding_k, for n = 1..K-1
    times = np.cumsum(holding[::-1])[::-1] + rest
    return CoalescentTailPath(K, times, 2.0 / K, remainder, rest)


def sample_Tn(
    n: int,
    size: int,
    rng: RngLike,
    K: int | None = None,
    remainder: str = "gamma",
) -> np.ndarray:
    """``size`` independent copies of T_n using only S_{n+1}, ..., S_K."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_remainder(remainder)
    if K is None:
        K = max(4 * (n + 1), 256)
    if K <= n:
        raise ValueError("cutoff K must exceed n")
    gen = as_generator(rng)
    k = np.arange(n + 1, K + 1, dtype=float)
    weights = 2.0 / (k * (k - 1.0))
    out = gen.standard_exponential((size, k.size)) @ weights
    if remainder == "gamma":
        out += _remainder_draw(K, gen, size=size)
    return out


def count_lines(times: np.ndarray, eps: float) -> np.ndarray:
    """N_eps = inf{n : T_n < eps} for each row of a (paths, n) array of times.

    Column j holds T_{j+1}.  Rows where every resolved T_n >= eps get
    ``times.shape[1] + 1``.
    """
    times = np.atleast_2d(times)
    below = times < eps
    first = np.argmax(below, axis=1) + 1
    return np.where(below.any(axis=1), first, times.shape[1] + 1)


def count_lines_at(path: CoalescentTailPath, eps: float) -> int:
    """Number of lines N_eps = inf{n : T_n < eps} on a sampled path.

    Note that {T_n >= eps} coincides with {N_eps >= n + 1} path by path.
    """
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if eps < 10.0 * path.bias_bound:
        warnings.warn(
            f"eps={eps!r} is within 10x the truncation bias {path.bias_bound!r}; "
            "the line count may be affected by the cutoff",
            TruncationWarning,
            stacklevel=2,
        )
    below = np.flatnonzero(path.times < eps)
    if below.size:
        return int(below[0]) + 1
    if path.remainder == "drop":
        # T_K is the empty sum
        return path.cutoff_K
    raise ValueError(
        f"N_eps exceeds the cutoff K={path.cutoff_K}; resample with a larger K"
    )


def line_count_cutoff(eps: float) -> int:
    """Cutoff large enough that N_eps < K except with negligible probability."""
    return max(256, math.ceil(16.0 / eps))


def sample_line_counts(eps: float, size: int, rng: RngLike, K: int | None = None) -> np.ndarray:
    """``size`` independent copies of N_eps from tail paths with a Gamma remainder."""
    eps = float(eps)
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    K = line_count_cutoff(eps) if K is None else int(K)
    gen = as_generator(rng)
    k = np.arange(2, K + 1, dtype=float)
    holding = gen.standard_exponential((int(size), K - 1)) * (2.0 / (k * (k - 1.0)))
    rest = _remainder_draw(K, gen, size=int(size))
    times = np.cumsum(holding[:, ::-1], axis=1)[:, ::-1] + rest[:, None]
    counts = count_lines(times, eps)
    if np.any(counts >= K):
        raise ValueError(f"N_eps reached the cutoff K={K}; pass a larger K")
    return counts


@dataclass(frozen=True)
class FamilyPartition:
    n: int
    freqs: np.ndarray

    def homozygosity(self) -> float:
        return float(self.n * np.sum(self.freqs**2))


def sample_families(n: int, method: str, rng: RngLike) -> FamilyPartition:
    """Family frequencies at the n-line level.

    ``"spacings"`` uses the gaps between n-1 sorted uniforms,
    ``"normalized_exponentials"`` uses R_k / sum R_j.  Both have the flat
    Dirichlet law.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = as_generator(rng)
    if method == "spacings":
        if n == 1:
            return FamilyPartition(1, np.ones(1))
        u = np.sort(gen.random(n - 1))
        freqs = np.diff(np.concatenate(([0.0], u, [1.0])))
    elif method == "normalized_exponentials":
        r = gen.standard_exponential(n)
        freqs = r / r.sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    return FamilyPartition(n, freqs)


def wn_direct(r: np.ndarray) -> np.ndarray:
    """n sum R^2 / (sum R)^2 along the last axis."""
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    return n * np.sum(r * r, axis=-1) / np.sum(r, axis=-1) ** 2


def wn_ordered(r: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """The order-statistics form of W_n along the last axis.

    (1/n)(2 sum_l R_l P_l / l - sum_k R_k^2 / k) / ((1/n) sum R)^2 with
    prefix sums P_l = R_1 + ... + R_l, in one pass.  ``shift`` adds n*shift
    to R_n, which raises every order statistic by ``shift``.
    """
    r = np.array(r, dtype=float, copy=True)
    n = r.shape[-1]
    if shift:
        r[..., -1] += n * shift
    k = np.arange(1, n + 1, dtype=float)
    prefix = np.cumsum(r, axis=-1)
    num = (2.0 * np.sum(r * prefix / k, axis=-1) - np.sum(r * r / k, axis=-1)) / n
    mean = prefix[..., -1] / n
    return num / (mean * mean)


def sample_Wn(n: int, method: str, rng: RngLike, size: int | None = None):
    """n times the homozygosity by descent at the n-line level.

    ``"direct"`` evaluates n sum R^2 / (sum R)^2; ``"ordered"`` evaluates the
    representation built from ordered exponentials.  Returns a float, or an
    array when ``size`` is given.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if method not in ("direct", "ordered"):
        raise ValueError(f"unknown method {method!r}")
    gen = as_generator(rng)
    shape = (1 if size is None else int(size), n)
    if n == 1:
        w = np.ones(shape[0])
    else:
        r = gen.standard_exponential(shape)
        w = wn_direct(r) if method == "direct" else wn_ordered(r)
    return float(w[0]) if size is None else w


def sample_Wn_tilted(n: int, y: float, rng: RngLike, size: int | None = None):
    """Ordered-representation W_n with every order statistic pushed above y.

    R_n is replaced by n*y + R_n, i.e. drawn from its law conditioned on
    R_n > n*y.  The returned log-weight is log P(R_n > n*y) = -n*y, so
    ``mean(exp(log_weight) * g(w))`` estimates E[g(W_n); R_{(1)} > y], a
    lower bound on E[g(W_n)] for nonnegative g.
    """
    n = int(n)
    y = float(y)
    if n < 1:
        raise ValueError("n must be >= 1")
    if y < 0.0:
        raise ValueError("y must be nonnegative")
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    if n == 1:
        w = np.ones(m)
    else:
        w = wn_ordered(gen.standard_exponential((m, n)), shift=y)
    log_weight = -n * y
    if size is None:
        return float(w[0]), log_weight
    return w, np.full(m, log_weight)
