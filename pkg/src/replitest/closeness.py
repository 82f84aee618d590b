"""Replicable closeness tester for distributions on ``[n]``.

The tester draws four sample batches whose sizes come from an even
multinomial split of ``4m``, computes the signed coincidence statistic

    Z = sum_i |X_i - Y_i| + |X'_i - Y'_i| - |X_i - X'_i| - |Y_i - Y'_i|,

and accepts iff ``Z <= r`` for a threshold ``r`` drawn uniformly from
the middle half of the gap between the completeness ceiling
``C1 * sqrt(m)`` and the soundness floor ``R``. Because Z concentrates
in an interval much narrower than the gap, two runs on fresh samples
but a shared internal string rarely straddle the same threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import NonNegativeMeasure
from .rng import RngStream
from .sampling import IndexSampler, counts_from_indices, measure_sampler, multinomial_split
from .verdict import CalibrationError, TesterVerdict

# Desk-scale defaults; `replitest calibrate closeness` regenerates them.
DEFAULT_C1 = 2.0
DEFAULT_C2 = 3.0


def closeness_sample_size(n: int, epsilon: float, rho: float, m_scale: float = 1.0) -> int:
    """Per-batch sample budget ``m`` for the closeness tester.

    ``m = ceil(m_scale * (n^{2/3} rho^{-2/3} eps^{-4/3}
                + sqrt(n) eps^{-2} rho^{-1} + rho^{-2} eps^{-2}))``
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 < epsilon < 1 and 0 < rho < 1):
        raise ValueError("epsilon and rho must lie in (0, 1)")
    if m_scale <= 0:
        raise ValueError("m_scale must be positive")
    term1 = n ** (2.0 / 3.0) * rho ** (-2.0 / 3.0) * epsilon ** (-4.0 / 3.0)
    term2 = math.sqrt(n) * epsilon**-2 * rho**-1
    term3 = rho**-2 * epsilon**-2
    m = m_scale * (term1 + term2 + term3)
    if not math.isfinite(m) or m > 2**62:
        raise OverflowError("sample size overflows for these parameters")
    return math.ceil(m)


def soundness_floor(m: int, n: int, epsilon: float, c2: float) -> float:
    """Far-case statistic floor ``R = C2 * min(eps m, m^2 eps^2 / n, m^{3/2} eps^2 / sqrt(n))``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return c2 * min(
        epsilon * m,
        m**2 * epsilon**2 / n,
        m**1.5 * epsilon**2 / math.sqrt(n),
    )


def closeness_statistic(x, x_prime, y, y_prime) -> int:
    """The four-batch statistic ``Z``; exact integer."""
    arrays = [np.asarray(a, dtype=np.int64) for a in (x, x_prime, y, y_prime)]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("count vectors must have equal length")
    x, x_prime, y, y_prime = arrays
    z = (
        np.abs(x - y)
        + np.abs(x_prime - y_prime)
        - np.abs(x - x_prime)
        - np.abs(y - y_prime)
    )
    return int(z.sum())


def draw_threshold(m: int, floor: float, c1: float, rng: RngStream) -> float:
    """Threshold ``r = C1 sqrt(m) + r0 (R - C1 sqrt(m))`` with ``r0 ~ U(1/4, 3/4)``."""
    ceiling = c1 * math.sqrt(m)
    if floor <= ceiling:
        raise CalibrationError(
            f"soundness floor {floor:.3g} does not clear the completeness "
            f"ceiling {ceiling:.3g}; increase C2 or the sample budget"
        )
    r0 = rng.generator().uniform(0.25, 0.75)
    return ceiling + r0 * (floor - ceiling)


@dataclass(frozen=True)
class ClosenessConfig:
    """Parameters of the closeness tester.

    ``epsilon`` and ``rho`` are nominally in (0, 1/4); the desk-scale
    experiments also run slightly above that range, so only (0, 1) is
    enforced. Construction verifies the gap condition
    ``R >= 8 * C1 * sqrt(m)`` at the configured sample size.
    """

    n: int
    epsilon: float
    rho: float
    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2
    m_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("C1 and C2 must be positive")
        m = self.sample_size()
        floor = soundness_floor(m, self.n, self.epsilon, self.c2)
        if floor < 8.0 * self.c1 * math.sqrt(m):
            raise CalibrationError(
                f"R = {floor:.3g} < 8*C1*sqrt(m) = {8 * self.c1 * math.sqrt(m):.3g} "
                f"at m = {m}; increase C2"
            )

    def sample_size(self) -> int:
        return closeness_sample_size(self.n, self.epsilon, self.rho, self.m_scale)


def rep_closeness_test(
    sampler_p: IndexSampler | NonNegativeMeasure,
    sampler_q: IndexSampler | NonNegativeMeasure,
    config: ClosenessConfig,
    rng: RngStream,
    *,
    sample_rng: RngStream | None = None,
) -> TesterVerdict:
    """One full run: split, sample, statistic, random threshold, verdict.

    The multinomial split and the threshold are drawn from ``rng``'s
    internal lineage; the four sample batches come from ``sample_rng``
    (default ``rng.substream("samples")``). Passing the same ``rng``
    with fresh ``sample_rng`` values reruns the tester with shared
    internal randomness, which is the pairing used to measure
    replicability.
    """
    if isinstance(sampler_p, NonNegativeMeasure):
        sampler_p = measure_sampler(sampler_p)
    if isinstance(sampler_q, NonNegativeMeasure):
        sampler_q = measure_sampler(sampler_q)
    if sample_rng is None:
        sample_rng = rng.substream("samples")

    m = config.sample_size()
    internal = rng.substream("internal")
    sizes = multinomial_split(4 * m, 4, internal.substream("split"))

    gen_p = sample_rng.substream("sample-1").generator()
    gen_q = sample_rng.substream("sample-2").generator()
    x = counts_from_indices(sampler_p(int(sizes[0]), gen_p), config.n)
    x_prime = counts_from_indices(sampler_p(int(sizes[1]), gen_p), config.n)
    y = counts_from_indices(sampler_q(int(sizes[2]), gen_q), config.n)
    y_prime = counts_from_indices(sampler_q(int(sizes[3]), gen_q), config.n)

    z = closeness_statistic(x, x_prime, y, y_prime)
    floor = soundness_floor(m, config.n, config.epsilon, config.c2)
    r = draw_threshold(m, floor, config.c1, internal.substream("threshold"))
    return TesterVerdict(
        accept=z <= r,
        statistic=float(z),
        threshold=float(r),
        detail={"m": m, "split": sizes.tolist(), "floor": floor},
    )
