"""Exact kernels and simulators for the hard-instance sample random walks.

One step of the walk re-samples a coordinate's count through the
posterior over the hidden per-bucket branch: given the current count,
infer which mixture branch generated it, then draw a fresh Poisson
count from that branch. The resulting transition kernels have closed
forms, computed here in log-space, together with their stationary
distributions, total-variation mixing curves, and spectral-gap
estimates on truncated state spaces.

The mixing-time convention follows the unhalved l1 metric
``sum_j |P^t(i, j) - pi(j)| < delta`` (twice the total variation
distance).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .measures import NonNegativeMeasure
from .rng import RngStream
from .sampling import CountVector, sample_counts_poissonized

ROW_SUM_TOL = 1e-9


class TruncationError(RuntimeError):
    """Raised when the truncated state space loses too much mass."""


def log_poisson_pmf(k, rate: float) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if rate == 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    return -rate + xlogy(k, rate) - gammaln(k + 1.0)


def _default_a_max(rate: float) -> int:
    # Poisson mass beyond 12 standard deviations is < 1e-30.
    return math.ceil(rate + 12.0 * math.sqrt(max(rate, 1.0)) + 30.0)


@dataclass(frozen=True)
class CoordKernel:
    """Single-coordinate walk for the uniformity hard instance.

    The coordinate count is a two-branch Poisson mixture with rates
    ``m(1 +/- xi)/n``; a step conditions on the branch posterior and
    redraws the count.
    """

    m: int
    n: int
    xi: float
    a_max: int = -1

    def __post_init__(self) -> None:
        if not 0 <= self.xi < 1:
            raise ValueError("xi must lie in [0, 1)")
        if self.a_max < 0:
            object.__setattr__(self, "a_max", _default_a_max(self.rate * (1 + self.xi)))

    @property
    def rate(self) -> float:
        return self.m / self.n

    def _log_branch_weights(self, a) -> np.ndarray:
        """Unnormalized log posterior weights (heavy, light) given count ``a``."""
        a = np.asarray(a, dtype=np.float64)
        lam = self.rate
        heavy = -self.xi * lam + a * np.log1p(self.xi)
        light = self.xi * lam + a * np.log1p(-self.xi)
        return np.stack([heavy, light], axis=-1)

    def log_transition(self, a, b) -> np.ndarray:
        """``log P(a, b)`` for scalar or broadcastable integer states."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        lam = self.rate
        s = a + b
        numer = logsumexp(
            np.stack(
                [-2 * self.xi * lam + s * np.log1p(self.xi),
                 2 * self.xi * lam + s * np.log1p(-self.xi)],
                axis=-1,
            ),
            axis=-1,
        )
        denom = logsumexp(self._log_branch_weights(a), axis=-1)
        return log_poisson_pmf(b, lam) + numer - denom

    def transition(self, a, b) -> np.ndarray:
        return np.exp(self.log_transition(a, b))

    def log_stationary(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        return math.log(0.5) + log_poisson_pmf(a, self.rate) + logsumexp(
            self._log_branch_weights(a), axis=-1
        )

    def stationary(self, a) -> np.ndarray:
        return np.exp(self.log_stationary(a))

    def posterior_heavy(self, a) -> np.ndarray:
        """``Pr(branch = heavy | count = a)``."""
        w = self._log_branch_weights(a)
        return np.exp(w[..., 0] - logsumexp(w, axis=-1))

    def branch_rates(self) -> tuple[float, float]:
        return self.rate * (1 + self.xi), self.rate * (1 - self.xi)

    def step(self, a, rng: RngStream) -> np.ndarray:
        """One walk step from state(s) ``a``: posterior branch, fresh Poisson."""
        gen = rng.generator()
        a = np.atleast_1d(np.asarray(a))
        heavy = gen.random(a.shape) < self.posterior_heavy(a)
        hi, lo = self.branch_rates()
        out = gen.poisson(np.where(heavy, hi, lo))
        return out if out.size > 1 else out[0]

    def transition_matrix(self, a_max: int | None = None) -> np.ndarray:
        a_max = self.a_max if a_max is None else a_max
        states = np.arange(a_max + 1)
        matrix = self.transition(states[:, None], states[None, :])
        _check_rows(matrix)
        return matrix

    def stationary_vector(self, a_max: int | None = None) -> np.ndarray:
        a_max = self.a_max if a_max is None else a_max
        pi = self.stationary(np.arange(a_max + 1))
        if pi.sum() < 1.0 - ROW_SUM_TOL:
            raise TruncationError(f"stationary mass {pi.sum()} below tolerance")
        return pi

    def initial_distributions(self, a_max: int | None = None) -> dict[str, np.ndarray]:
        """The two admissible Poisson initial distributions, truncated."""
        a_max = self.a_max if a_max is None else a_max
        states = np.arange(a_max + 1)
        hi, lo = self.branch_rates()
        return {
            "poisson-heavy": np.exp(log_poisson_pmf(states, hi)),
            "poisson-light": np.exp(log_poisson_pmf(states, lo)),
        }


def coord_transition(a, b, kernel: CoordKernel) -> np.ndarray:
    """Transition probability of the coordinate walk (functional form)."""
    return kernel.transition(a, b)


def coord_stationary(a, kernel: CoordKernel) -> np.ndarray:
    """Stationary probability of the coordinate walk (functional form)."""
    return kernel.stationary(a)


def coord_rw_step(a, kernel: CoordKernel, rng: RngStream):
    """One coordinate-walk step (functional form)."""
    return kernel.step(a, rng)


def closeness_pair_transition(
    state: tuple[int, int], next_state: tuple[int, int], kernel: ClosenessPairKernel
) -> float:
    """Transition probability of the pair walk (functional form)."""
    return kernel.transition(state, next_state)


def sample_rw_step(counts: CountVector, kernel: CoordKernel, rng: RngStream) -> CountVector:
    """One step of the full product walk: the coordinate step applied per bucket."""
    return np.asarray(kernel.step(np.asarray(counts, dtype=np.int64), rng), dtype=np.int64)


def stationary_counts(kernel: CoordKernel, n_coords: int, rng: RngStream) -> CountVector:
    """Exact draw from the product stationary distribution."""
    gen = rng.generator()
    hi, lo = kernel.branch_rates()
    heavy = gen.random(n_coords) < 0.5
    return gen.poisson(np.where(heavy, hi, lo)).astype(np.int64)


@dataclass(frozen=True)
class ClosenessPairKernel:
    """Per-bucket pair walk for the closeness hard instance.

    States are count pairs ``(a, c)``; the generating mixture has a
    heavy branch (rate ``1 - eps`` on both sides, weight ``m/n``) and
    two swapped light branches (rates ``m(2 eps +/- xi)/(2(n-m))``,
    weight ``(n-m)/2n`` each).
    """

    n: int
    m: int
    epsilon: float
    xi: float
    a_max: int = -1

    def __post_init__(self) -> None:
        if not self.m < self.n / 2:
            raise ValueError("pair kernel requires m < n/2")
        if self.a_max < 0:
            top = max(r for pair in self.branch_rates() for r in pair)
            object.__setattr__(self, "a_max", _default_a_max(max(top, 1.0 - self.epsilon)))

    def branch_rates(self) -> list[tuple[float, float]]:
        heavy = 1.0 - self.epsilon
        hi = self.m * (2 * self.epsilon + self.xi) / (2.0 * (self.n - self.m))
        lo = self.m * (2 * self.epsilon - self.xi) / (2.0 * (self.n - self.m))
        return [(heavy, heavy), (hi, lo), (lo, hi)]

    def log_branch_weights(self) -> np.ndarray:
        light = (self.n - self.m) / (2.0 * self.n)
        return np.log(np.array([self.m / self.n, light, light]))

    def _log_branch_joint(self, a, c) -> np.ndarray:
        """``log(w_br * Poi(a; r1) * Poi(c; r2))`` stacked over branches."""
        a = np.asarray(a, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        parts = [
            w + log_poisson_pmf(a, r1) + log_poisson_pmf(c, r2)
            for w, (r1, r2) in zip(self.log_branch_weights(), self.branch_rates())
        ]
        return np.stack(parts, axis=-1)

    def log_stationary(self, a, c) -> np.ndarray:
        return logsumexp(self._log_branch_joint(a, c), axis=-1)

    def stationary(self, a, c) -> np.ndarray:
        return np.exp(self.log_stationary(a, c))

    def posterior(self, a, c) -> np.ndarray:
        terms = self._log_branch_joint(a, c)
        return np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))

    def transition(self, state: tuple[int, int], next_state: tuple[int, int]) -> float:
        a, c = state
        b, d = next_state
        post = self.posterior(a, c)
        total = 0.0
        for k, (r1, r2) in enumerate(self.branch_rates()):
            total += post[k] * math.exp(
                log_poisson_pmf(np.float64(b), r1) + log_poisson_pmf(np.float64(d), r2)
            )
        return float(total)

    def step(self, state: tuple[int, int], rng: RngStream) -> tuple[int, int]:
        gen = rng.generator()
        post = self.posterior(*state)
        branch = gen.choice(3, p=post / post.sum())
        r1, r2 = self.branch_rates()[branch]
        return int(gen.poisson(r1)), int(gen.poisson(r2))

    def _flat_states(self, a_max: int) -> tuple[np.ndarray, np.ndarray]:
        grid = np.arange(a_max + 1)
        aa, cc = np.meshgrid(grid, grid, indexing="ij")
        return aa.reshape(-1), cc.reshape(-1)

    def transition_matrix(self, a_max: int | None = None) -> np.ndarray:
        a_max = self.a_max if a_max is None else a_max
        aa, cc = self._flat_states(a_max)
        post = self.posterior(aa, cc)  # (#states, 3)
        grid = np.arange(a_max + 1, dtype=np.float64)
        matrix = np.zeros((aa.size, aa.size))
        for k, (r1, r2) in enumerate(self.branch_rates()):
            pb = np.exp(log_poisson_pmf(grid, r1))
            pd = np.exp(log_poisson_pmf(grid, r2))
            matrix += post[:, k : k + 1] * np.outer(np.ones(aa.size), np.kron(pb, pd))
        _check_rows(matrix)
        return matrix

    def stationary_vector(self, a_max: int | None = None) -> np.ndarray:
        a_max = self.a_max if a_max is None else a_max
        aa, cc = self._flat_states(a_max)
        pi = self.stationary(aa, cc)
        if pi.sum() < 1.0 - ROW_SUM_TOL:
            raise TruncationError(f"stationary mass {pi.sum()} below tolerance")
        return pi

    def initial_distributions(self, a_max: int | None = None) -> dict[str, np.ndarray]:
        a_max = self.a_max if a_max is None else a_max
        grid = np.arange(a_max + 1, dtype=np.float64)
        out = {}
        for name, (r1, r2) in zip(("heavy", "light-plus", "light-minus"), self.branch_rates()):
            out[name] = np.kron(
                np.exp(log_poisson_pmf(grid, r1)), np.exp(log_poisson_pmf(grid, r2))
            )
        return out


def _check_rows(matrix: np.ndarray) -> None:
    sums = matrix.sum(axis=1)
    if np.any(sums < 1.0 - ROW_SUM_TOL):
        raise TruncationError(
            f"truncated kernel loses mass: min row sum {sums.min():.3e}"
        )
    if np.any(sums > 1.0 + ROW_SUM_TOL):
        raise TruncationError("kernel row sums exceed 1")


@dataclass
class MixingReport:
    """l1-to-stationary curve, mixing time, and spectral-gap estimate."""

    delta: float
    tau_delta: int
    gap_estimate: float
    tv_curve: list[tuple[int, float]]
    initial: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "tau_delta": self.tau_delta,
            "gap_estimate": self.gap_estimate,
            "initial": self.initial,
            "params": self.params,
            "tv_curve": [[t, tv] for t, tv in self.tv_curve],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_rows(self) -> list[tuple[int, float]]:
        return list(self.tv_curve)


def _curve_tau(curve: Sequence[float], delta: float) -> int:
    # Definition requires the distance to stay below delta forever after.
    tau = len(curve)
    for t in range(len(curve) - 1, -1, -1):
        if curve[t] >= delta:
            return t + 1
        tau = t
    return tau


def estimate_mixing(
    kernel,
    delta: float,
    a_max: int | None = None,
    *,
    initial: str = "all",
    max_steps: int = 64,
) -> MixingReport:
    """Exact matrix-power mixing measurement on the truncated kernel.

    ``initial`` selects the starting family: ``"poisson"`` for the
    kernel's admissible mixture components, ``"point"`` for the worst
    point mass within the truncation, ``"all"`` for both.
    """
    if initial not in ("all", "poisson", "point"):
        raise ValueError("initial must be 'all', 'poisson' or 'point'")
    matrix = kernel.transition_matrix(a_max)
    pi = kernel.stationary_vector(a_max)

    rows = []
    if initial in ("all", "poisson"):
        rows.extend(kernel.initial_distributions(a_max).values())
    dists = np.stack(rows) if rows else np.zeros((0, pi.size))
    use_points = initial in ("all", "point")

    powers = np.eye(pi.size)
    curve: list[float] = []
    for _ in range(max_steps + 1):
        worst = 0.0
        if dists.size:
            worst = max(worst, float(np.abs(dists - pi).sum(axis=1).max()))
        if use_points:
            worst = max(worst, float(np.abs(powers - pi).sum(axis=1).max()))
        curve.append(worst)
        if worst < delta / 10.0 and len(curve) > 1:
            break
        dists = dists @ matrix if dists.size else dists
        powers = powers @ matrix
    if curve[-1] >= delta:
        raise RuntimeError(
            f"walk did not mix below delta={delta} within {max_steps} steps "
            f"(final distance {curve[-1]:.3g}); raise max_steps"
        )

    eigenvalues = np.sort(np.abs(np.linalg.eigvals(matrix)))[::-1]
    lambda_star = float(eigenvalues[1]) if eigenvalues.size > 1 else 0.0
    return MixingReport(
        delta=delta,
        tau_delta=_curve_tau(curve, delta),
        gap_estimate=1.0 - lambda_star,
        tv_curve=list(enumerate(curve)),
        initial=initial,
        params=dict(getattr(kernel, "__dict__", {})),
    )


def product_walk_tau(
    matrices: Sequence[np.ndarray],
    stationaries: Sequence[np.ndarray],
    delta: float,
    max_steps: int = 64,
) -> int:
    """Mixing time of a product walk by exact tensor-product powers.

    Worst case over all product point-mass initial states; intended for
    small per-coordinate truncations.
    """
    powers = [np.eye(m.shape[0]) for m in matrices]
    pi_full = stationaries[0]
    for pi in stationaries[1:]:
        pi_full = np.kron(pi_full, pi)
    curve = []
    for _ in range(max_steps + 1):
        full = powers[0]
        for p in powers[1:]:
            full = np.kron(full, p)
        curve.append(float(np.abs(full - pi_full).sum(axis=1).max()))
        if curve[-1] < delta / 10.0 and len(curve) > 1:
            break
        powers = [p @ m for p, m in zip(powers, matrices)]
    return _curve_tau(curve, delta)


def acceptance_probability(
    decide: Callable[[CountVector], bool],
    p: NonNegativeMeasure,
    m: int,
    trials: int,
    rng: RngStream,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``Pr[decide(T) = accept]`` for ``T ~ PoiS(m, p)``.

    ``decide`` must have its internal randomness fixed externally so it
    is a deterministic function of the count vector.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    hits = 0
    for t in range(trials):
        counts = sample_counts_poissonized(p, m, rng.substream("trial", t))
        hits += bool(decide(counts))
    acc = hits / trials
    stderr = math.sqrt(max(acc * (1 - acc), 1e-12) / trials)
    return acc, stderr


def concentration_experiment(
    decide: Callable[[CountVector], bool],
    n: int,
    epsilon: float,
    m: int,
    xi_grid: Sequence[float],
    draws_per_xi: int,
    trials: int,
    rng: RngStream,
) -> list[dict]:
    """Dispersion of acceptance probabilities across instances at each xi.

    For each xi, draws instances with i.i.d. per-bucket masses
    ``(1 +/- xi)/n``, estimates the acceptance probability of the fixed
    tester on each, and reports the mean together with the fraction of
    instances deviating from it by more than 1/4.
    """
    from .hard_instances import UniformityHardParams, draw_uniformity_hard

    results = []
    for i, xi in enumerate(xi_grid):
        accs = []
        for j in range(draws_per_xi):
            params = UniformityHardParams(n, max(epsilon, 1e-12), min(xi, epsilon))
            p = draw_uniformity_hard(params, rng.substream("instance", i, j))
            acc, _ = acceptance_probability(
                decide, p, m, trials, rng.substream("acc", i, j)
            )
            accs.append(acc)
        accs_arr = np.asarray(accs)
        mean = float(accs_arr.mean())
        results.append(
            {
                "xi": float(xi),
                "mean_acceptance": mean,
                "deviation_fraction": float((np.abs(accs_arr - mean) > 0.25).mean()),
                "draws": draws_per_xi,
                "trials": trials,
            }
        )
    return results
