"""Replicable independence tester for distributions on ``[n1] x [n2]``.

The core statistic flattens the samples on both axes, truncates to
Poisson-sized subsets, and evaluates a marked closeness statistic
between samples from the unknown distribution ``p`` and samples from
the product of its marginals (simulated by splicing coordinates of two
independent ``p`` samples). Because the statistic is randomized, the
tester works with its average over the internal randomness, estimated
by rerunning the statistic many times on fixed sample sets. A pre-test
on the averaged non-singleton count keeps the variance of the averaged
statistic in check before the main threshold comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flattening import non_singleton_count, pack_keys, subbin_indices
from .measures import NonNegativeMeasure
from .rng import RngStream
from .sampling import IndexSampler, measure_sampler
from .verdict import TesterVerdict

# Desk-scale defaults; `replitest calibrate independence` regenerates them.
DEFAULT_C_N = 4.0
DEFAULT_C_I1 = 1.0
DEFAULT_C_I2 = 4.0
DEFAULT_K_AVG = 200
DEFAULT_MEDIAN_REPS = 1


def independence_sample_size(
    n1: int, n2: int, epsilon: float, rho: float, m_scale: float = 1.0
) -> int:
    """Sample budget ``m`` for the independence tester.

    ``m = ceil(m_scale * max(log(n1 n2), 1)
             * (n1^{2/3} n2^{1/3} rho^{-2/3} eps^{-4/3}
                + sqrt(n1 n2) rho^{-1} eps^{-2} + eps^{-2} rho^{-2}))``

    The log factor is clamped below at 1 so degenerate domains keep a
    positive budget.
    """
    if n1 < n2 or n2 < 1:
        raise ValueError("need n1 >= n2 >= 1")
    if not (0 < epsilon < 1 and 0 < rho < 1):
        raise ValueError("epsilon and rho must lie in (0, 1)")
    if m_scale <= 0:
        raise ValueError("m_scale must be positive")
    term1 = n1 ** (2.0 / 3.0) * n2 ** (1.0 / 3.0) * rho ** (-2.0 / 3.0) * epsilon ** (-4.0 / 3.0)
    term2 = math.sqrt(n1 * n2) * rho**-1 * epsilon**-2
    term3 = epsilon**-2 * rho**-2
    m = m_scale * max(math.log(n1 * n2), 1.0) * (term1 + term2 + term3)
    if not math.isfinite(m) or m > 2**62:
        raise OverflowError("sample size overflows for these parameters")
    return math.ceil(m)


def independence_gap(m: int, n1: int, n2: int, epsilon: float) -> float:
    """Expectation-gap scale ``min(eps m, m^2 eps^2 / (n1 n2), m^{3/2} eps^2 / sqrt(n1 n2))``."""
    return min(
        epsilon * m,
        m**2 * epsilon**2 / (n1 * n2),
        m**1.5 * epsilon**2 / math.sqrt(n1 * n2),
    )


def stage1_scale(m: int, n1: int, n2: int) -> float:
    """Pre-test scale ``max(m^2 / (n1 n2), m / n2)`` for the non-singleton count."""
    return max(m**2 / (n1 * n2), m / n2)


@dataclass(frozen=True)
class IndependenceConfig:
    """Parameters of the independence tester.

    ``epsilon`` and ``rho`` are nominally in (0, 1/4); desk-scale
    experiments also run above that range, so only (0, 1) is enforced.
    """

    n1: int
    n2: int
    epsilon: float
    rho: float
    c_n: float = DEFAULT_C_N
    c_i1: float = DEFAULT_C_I1
    c_i2: float = DEFAULT_C_I2
    k_avg: int = DEFAULT_K_AVG
    median_reps: int = DEFAULT_MEDIAN_REPS
    m_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n1 < self.n2 or self.n2 < 1:
            raise ValueError("need n1 >= n2 >= 1")
        if not self.c_i1 < self.c_i2:
            raise ValueError("need C_I1 < C_I2")
        if self.c_n <= 0:
            raise ValueError("C_N must be positive")
        if self.k_avg < 1:
            raise ValueError("K_avg must be >= 1")
        if self.median_reps < 1 or self.median_reps % 2 == 0:
            raise ValueError("median_reps must be odd and >= 1")

    def sample_size(self) -> int:
        return independence_sample_size(self.n1, self.n2, self.epsilon, self.rho, self.m_scale)

    def alpha(self, m: int) -> float:
        return min(self.n1 / (100.0 * m), 0.01)

    def beta(self, m: int) -> float:
        # Clipped only to stay a valid Bernoulli rate.
        return min(self.n2 / (100.0 * m), 1.0)


def product_of_marginals_sample(
    sampler_p: IndexSampler, shape: tuple[int, int], rng: RngStream
) -> tuple[int, int]:
    """One sample from the product of marginals of ``p``.

    Draws two independent samples from ``p`` and combines the row of
    the first with the column of the second.
    """
    gen = rng.generator()
    flat = sampler_p(2, gen)
    _, n2 = shape
    return int(flat[0] // n2), int(flat[1] % n2)


def product_of_marginals_sampler(sampler_p: IndexSampler, shape: tuple[int, int]) -> IndexSampler:
    """Batch sampler over flat codes for the product of marginals of ``p``."""
    _, n2 = shape

    def draw(k: int, gen: np.random.Generator) -> np.ndarray:
        flat = sampler_p(2 * k, gen)
        rows = flat[:k] // n2
        cols = flat[k:] % n2
        return rows * n2 + cols

    return draw


def closeness_stat_marked(sp_keys: np.ndarray, sq_keys: np.ndarray, rng: RngStream) -> int:
    """Marked closeness statistic between two bags of hashable keys.

    Every sample is marked independently with probability 1/2; per
    element the statistic adds
    ``|Tp0-Tq0| + |Tp1-Tq1| - |Tp0-Tp1| - |Tq0-Tq1|``
    where 0/1 split counts by mark. Singleton elements contribute 0.
    """
    sp_keys = np.asarray(sp_keys, dtype=np.int64)
    sq_keys = np.asarray(sq_keys, dtype=np.int64)
    total = sp_keys.size + sq_keys.size
    if total == 0:
        return 0
    keys = np.concatenate([sp_keys, sq_keys])
    marked = rng.generator().random(total) < 0.5
    uniq, inverse = np.unique(keys, return_inverse=True)
    k = uniq.size
    from_p = np.zeros(total, dtype=bool)
    from_p[: sp_keys.size] = True

    def bucket(mask: np.ndarray) -> np.ndarray:
        return np.bincount(inverse[mask], minlength=k)

    tp0 = bucket(from_p & marked)
    tp1 = bucket(from_p & ~marked)
    tq0 = bucket(~from_p & marked)
    tq1 = bucket(~from_p & ~marked)
    z = (
        np.abs(tp0 - tq0)
        + np.abs(tp1 - tq1)
        - np.abs(tp0 - tp1)
        - np.abs(tq0 - tq1)
    )
    return int(z.sum())


def _stat_run(
    sp_pairs: np.ndarray,
    sq_pairs: np.ndarray,
    alpha: float,
    beta: float,
    poisson_mean: float,
    abort_excess_p: float,
    abort_excess_q: float,
    rng: RngStream,
) -> tuple[int, int]:
    """One randomized evaluation; returns ``(Z, N)`` of the truncated flattened sets.

    Aborted runs (too many samples consumed by flattening, or a Poisson
    size exceeding a flattened set) contribute ``(0, 0)``, matching the
    convention that the flattened sets are empty on abort.

    Sub-bin tags are computed on the truncated samples plus the
    flattening samples only. Relative orders of a subset under a
    uniform permutation are themselves uniform, so tagging the subset
    with fresh uniform priorities reproduces the full-set flattening
    law exactly while skipping the untagged remainder.
    """
    k_p = sp_pairs.shape[0]
    k_q = sq_pairs.shape[0]
    total = k_p + k_q
    gen_flat = rng.substream("flatten").generator()
    fx = gen_flat.random(total) < alpha
    fy = gen_flat.random(total) < beta
    keep = ~fx & ~fy
    kept_p = int(np.count_nonzero(keep[:k_p]))
    kept_q = int(np.count_nonzero(keep[k_p:]))
    if k_p - kept_p > abort_excess_p or k_q - kept_q > abort_excess_q:
        return 0, 0
    gen_poi = rng.substream("poisson").generator()
    ell_p = int(gen_poi.poisson(poisson_mean))
    ell_q = int(gen_poi.poisson(poisson_mean))
    if ell_p > kept_p or ell_q > kept_q:
        return 0, 0

    p_idx = np.flatnonzero(keep[:k_p])[:ell_p]
    q_idx = k_p + np.flatnonzero(keep[k_p:])[:ell_q]
    divider_idx = np.flatnonzero(fx | fy)
    subset = np.concatenate([p_idx, q_idx, divider_idx])
    rows = np.concatenate([sp_pairs[:, 0], sq_pairs[:, 0]])[subset]
    cols = np.concatenate([sp_pairs[:, 1], sq_pairs[:, 1]])[subset]
    fx_sub = fx[subset].astype(np.int8)
    fy_sub = fy[subset].astype(np.int8)
    rank_x = _priority_ranks(gen_flat.random(subset.size))
    rank_y = _priority_ranks(gen_flat.random(subset.size))
    row_subs = subbin_indices(rows, fx_sub, rank_x)
    col_subs = subbin_indices(cols, fy_sub, rank_y)

    kept = ell_p + ell_q
    keys = pack_keys(rows[:kept], row_subs[:kept], cols[:kept], col_subs[:kept])
    z = closeness_stat_marked(keys[:ell_p], keys[ell_p:], rng.substream("marking"))
    n = non_singleton_count(keys)
    return z, n


def _priority_ranks(priorities: np.ndarray) -> np.ndarray:
    ranks = np.empty(priorities.size, dtype=np.int64)
    ranks[np.argsort(priorities)] = np.arange(priorities.size)
    return ranks


def _resolve_run_params(
    sp_pairs: np.ndarray,
    sq_pairs: np.ndarray,
    config: IndependenceConfig,
    alpha: float | None,
    beta: float | None,
    poisson_mean: float | None,
    strict_size: bool,
) -> tuple[float, float, float]:
    m = config.sample_size()
    if strict_size and (sp_pairs.shape[0] != 100 * m or sq_pairs.shape[0] != 100 * m):
        raise ValueError(
            f"expected |S_p| = |S_q| = 100 m = {100 * m}; "
            f"got {sp_pairs.shape[0]} and {sq_pairs.shape[0]}"
        )
    return (
        config.alpha(m) if alpha is None else alpha,
        config.beta(m) if beta is None else beta,
        float(m) if poisson_mean is None else poisson_mean,
    )


def independence_stats(
    sp_pairs: np.ndarray,
    sq_pairs: np.ndarray,
    config: IndependenceConfig,
    rng: RngStream,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    poisson_mean: float | None = None,
    strict_size: bool = True,
) -> int:
    """One randomized independence statistic ``Z`` on fixed sample sets.

    The keyword overrides exist for enumeration-scale tests; defaults
    follow the configuration (``alpha = min(n1/(100m), 1/100)``,
    ``beta = n2/(100m)``, truncation sizes ``~ Poi(m)``).
    """
    sp_pairs = np.asarray(sp_pairs, dtype=np.int64)
    sq_pairs = np.asarray(sq_pairs, dtype=np.int64)
    a, b, mean = _resolve_run_params(
        sp_pairs, sq_pairs, config, alpha, beta, poisson_mean, strict_size
    )
    z, _ = _stat_run(
        sp_pairs, sq_pairs, a, b, mean, 10.0 * config.n1, 10.0 * config.n2, rng
    )
    return z


def _averaged_stats(
    sp_pairs: np.ndarray,
    sq_pairs: np.ndarray,
    config: IndependenceConfig,
    rng: RngStream,
    k_avg: int,
    alpha: float | None,
    beta: float | None,
    poisson_mean: float | None,
    strict_size: bool,
) -> tuple[float, float]:
    sp_pairs = np.asarray(sp_pairs, dtype=np.int64)
    sq_pairs = np.asarray(sq_pairs, dtype=np.int64)
    a, b, mean = _resolve_run_params(
        sp_pairs, sq_pairs, config, alpha, beta, poisson_mean, strict_size
    )
    z_sum = 0.0
    n_sum = 0.0
    for j in range(k_avg):
        z, n = _stat_run(
            sp_pairs, sq_pairs, a, b, mean,
            10.0 * config.n1, 10.0 * config.n2, rng.substream("avg", j),
        )
        z_sum += z
        n_sum += n
    return z_sum / k_avg, n_sum / k_avg


def estimate_z_a(
    sp_pairs, sq_pairs, config: IndependenceConfig, rng: RngStream, *,
    k_avg: int | None = None, alpha: float | None = None,
    beta: float | None = None, poisson_mean: float | None = None,
    strict_size: bool = True,
) -> float:
    """Monte Carlo estimate of the averaged statistic ``Z_a`` on fixed sets."""
    k = config.k_avg if k_avg is None else k_avg
    z_a, _ = _averaged_stats(
        sp_pairs, sq_pairs, config, rng, k, alpha, beta, poisson_mean, strict_size
    )
    return z_a


def estimate_n_a(
    sp_pairs, sq_pairs, config: IndependenceConfig, rng: RngStream, *,
    k_avg: int | None = None, alpha: float | None = None,
    beta: float | None = None, poisson_mean: float | None = None,
    strict_size: bool = True,
) -> float:
    """Monte Carlo estimate of the averaged non-singleton count ``N_a``."""
    k = config.k_avg if k_avg is None else k_avg
    _, n_a = _averaged_stats(
        sp_pairs, sq_pairs, config, rng, k, alpha, beta, poisson_mean, strict_size
    )
    return n_a


def _draw_pair_sets(
    sampler_p: IndexSampler,
    shape: tuple[int, int],
    size: int,
    rng: RngStream,
) -> tuple[np.ndarray, np.ndarray]:
    n2 = shape[1]
    gen_p = rng.substream("sample-1").generator()
    gen_q = rng.substream("sample-2").generator()
    sampler_q = product_of_marginals_sampler(sampler_p, shape)
    flat_p = sampler_p(size, gen_p)
    flat_q = sampler_q(size, gen_q)
    sp = np.stack([flat_p // n2, flat_p % n2], axis=1)
    sq = np.stack([flat_q // n2, flat_q % n2], axis=1)
    return sp, sq


def rep_independence_test(
    sampler_p: IndexSampler | NonNegativeMeasure,
    config: IndependenceConfig,
    rng: RngStream,
    *,
    sample_rng: RngStream | None = None,
) -> TesterVerdict:
    """Two-stage replicable independence test.

    Stage 1 estimates the averaged non-singleton count on fresh sample
    sets and rejects when it exceeds a random multiple (uniform on
    ``[2 C_N, 100 C_N]``) of ``max(m^2/(n1 n2), m/n2)``. Stage 2
    estimates the averaged statistic on fresh sets and rejects when it
    exceeds a random multiple (uniform on ``[C_I1, C_I2]``) of the
    expectation-gap scale. Each stage computes ``median_reps``
    estimates on independent sample sets and compares their median to
    the stage's single shared threshold.
    """
    if isinstance(sampler_p, NonNegativeMeasure):
        if sampler_p.ndim != 2:
            raise ValueError("independence testing needs a 2D measure")
        shape = sampler_p.shape
        sampler_p = measure_sampler(sampler_p)
    else:
        shape = (config.n1, config.n2)
    if shape != (config.n1, config.n2):
        raise ValueError(f"measure shape {shape} != configured {(config.n1, config.n2)}")
    if sample_rng is None:
        sample_rng = rng.substream("samples")

    internal = rng.substream("internal")
    m = config.sample_size()

    def stage_estimates(stage: str) -> list[tuple[float, float]]:
        out = []
        for rep in range(config.median_reps):
            sp, sq = _draw_pair_sets(
                sampler_p, (config.n1, config.n2), 100 * m,
                sample_rng.substream(stage, rep),
            )
            out.append(
                _averaged_stats(
                    sp, sq, config, internal.substream(stage, rep),
                    config.k_avg, None, None, None, True,
                )
            )
        return out

    n_threshold = float(
        internal.substream("threshold-N").generator().uniform(2 * config.c_n, 100 * config.c_n)
    ) * stage1_scale(m, config.n1, config.n2)
    n_hat = float(np.median([n for _, n in stage_estimates("stage1")]))
    if n_hat > n_threshold:
        return TesterVerdict(
            accept=False, statistic=n_hat, threshold=n_threshold,
            detail={"stage": 1, "m": m},
        )

    z_threshold = float(
        internal.substream("threshold-Z").generator().uniform(config.c_i1, config.c_i2)
    ) * independence_gap(m, config.n1, config.n2, config.epsilon)
    z_hat = float(np.median([z for z, _ in stage_estimates("stage2")]))
    return TesterVerdict(
        accept=z_hat <= z_threshold, statistic=z_hat, threshold=z_threshold,
        detail={"stage": 2, "m": m, "stage1_statistic": n_hat, "stage1_threshold": n_threshold},
    )
