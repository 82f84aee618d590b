"""Seeded experiment orchestration: replicability measurement, batch
experiments, and desk-scale calibration.

Every experiment is a pure function of ``(config, seed)``: per-trial
randomness comes from substreams derived from the experiment seed, so
records reproduce bit-for-bit and aggregate in any order.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from . import closeness as cl
from . import independence as ind
from . import uniformity as un
from .hard_instances import draw_meta_closeness, draw_meta_uniformity
from .measures import (
    NonNegativeMeasure,
    diagonal_measure,
    half_flat_measure,
    uniform_measure,
    uniform_product_measure,
    zipf_measure,
)
from .rng import RngStream
from .walks import ClosenessPairKernel, CoordKernel, estimate_mixing

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    trials: int
    params: dict = field(default_factory=dict)
    out: str | None = None

    KINDS = (
        "closeness-acceptance",
        "independence-acceptance",
        "uniformity-acceptance",
        "replicability",
        "variance-audit",
        "mixing",
        "concentration",
        "calibration",
    )

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if data.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {data.get('schema')}")
        missing = {"kind", "seed", "trials"} - data.keys()
        if missing:
            raise ConfigError(f"config missing fields: {sorted(missing)}")
        return cls(
            kind=data["kind"],
            seed=int(data["seed"]),
            trials=int(data["trials"]),
            params=data.get("params", {}),
            out=data.get("out"),
        )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict]
    aggregate: dict
    wall_clock: float

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.config.kind}-records.csv"
        json_path = out / f"{self.config.kind}-aggregate.json"
        if self.records:
            fields = list(self.records[0].keys())
            with csv_path.open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields)
                writer.writeheader()
                writer.writerows(self.records)
        payload = {
            "schema": SCHEMA_VERSION,
            "kind": self.config.kind,
            "seed": self.config.seed,
            "trials": self.config.trials,
            "params": self.config.params,
            "aggregate": self.aggregate,
            "wall_clock_sec": self.wall_clock,
        }
        json_path.write_text(json.dumps(payload, indent=2))
        return csv_path, json_path


@dataclass(frozen=True)
class ReplicabilityResult:
    pairs: int
    disagreements: int

    @property
    def rate(self) -> float:
        return self.disagreements / self.pairs

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(max(p * (1 - p), 1e-12) / self.pairs)


PairFn = Callable[[RngStream], tuple[bool, bool]]


def measure_replicability(pair_fn: PairFn, pairs: int, rng: RngStream) -> ReplicabilityResult:
    """Disagreement rate of paired runs sharing internal randomness.

    ``pair_fn`` receives a per-pair stream and must return the two
    verdicts of runs that share the internal lineage of that stream
    while drawing independent samples (and, for meta-distribution
    experiments, a freshly drawn instance for the pair).
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    disagreements = 0
    for k in range(pairs):
        a, b = pair_fn(rng.substream("pair", k))
        disagreements += a != b
    return ReplicabilityResult(pairs, disagreements)


def closeness_pair_fn(
    p: NonNegativeMeasure, q: NonNegativeMeasure, config: cl.ClosenessConfig
) -> PairFn:
    """Fixed-instance paired runs of the closeness tester."""

    def run(stream: RngStream) -> tuple[bool, bool]:
        v1 = cl.rep_closeness_test(
            p, q, config, stream, sample_rng=stream.substream("sample-1")
        )
        v2 = cl.rep_closeness_test(
            p, q, config, stream, sample_rng=stream.substream("sample-2")
        )
        return v1.accept, v2.accept

    return run


def closeness_meta_pair_fn(
    n: int, m_hard: int, epsilon: float, config: cl.ClosenessConfig
) -> PairFn:
    """Distributional paired runs: a fresh hard-instance pair per pair."""

    def run(stream: RngStream) -> tuple[bool, bool]:
        _, p, q = draw_meta_closeness(n, m_hard, epsilon, stream.substream("instance"))
        return closeness_pair_fn(p.normalized(), q.normalized(), config)(stream)

    return run


def uniformity_pair_fn(source, config: un.UniformityConfig) -> PairFn:
    tester = un.UniformityTester(config)

    def run(stream: RngStream) -> tuple[bool, bool]:
        v1 = tester.run(source, stream, sample_rng=stream.substream("sample-1"))
        v2 = tester.run(source, stream, sample_rng=stream.substream("sample-2"))
        return v1.accept, v2.accept

    return run


def uniformity_meta_pair_fn(
    n: int, epsilon: float, config: un.UniformityConfig, xi: float | None = None
) -> PairFn:
    """Paired runs over the uniformity meta-distribution.

    With ``xi`` fixed the instance is drawn from the per-xi family
    (used to stratify disagreement across the xi grid); otherwise xi is
    drawn uniformly from ``[0, epsilon]`` per pair.
    """
    from .hard_instances import UniformityHardParams, draw_uniformity_hard

    tester = un.UniformityTester(config)

    def run(stream: RngStream) -> tuple[bool, bool]:
        inst_rng = stream.substream("instance")
        if xi is None:
            _, p = draw_meta_uniformity(n, epsilon, inst_rng)
        else:
            p = draw_uniformity_hard(
                UniformityHardParams(n, max(epsilon, 1e-12), xi), inst_rng
            )
        v1 = tester.run(p, stream, sample_rng=stream.substream("sample-1"))
        v2 = tester.run(p, stream, sample_rng=stream.substream("sample-2"))
        return v1.accept, v2.accept

    return run


def _load_instance_measures(params: dict, expected: int) -> list[NonNegativeMeasure]:
    from .hard_instances import instance_from_json

    path = params.get("instance_file")
    if not path or not Path(path).exists():
        raise ConfigError(f"instance file not found: {path!r}")
    _, measures = instance_from_json(Path(path).read_text())
    if len(measures) != expected:
        raise ConfigError(
            f"instance file {path} holds {len(measures)} measures, expected {expected}"
        )
    return measures


def _closeness_instance(params: dict) -> tuple[NonNegativeMeasure, NonNegativeMeasure]:
    name = params.get("instance", "uniform")
    if name == "file":
        p, q = _load_instance_measures(params, 2)
        return p.normalized(), q.normalized()
    n = int(params["n"])
    if name == "uniform":
        p = uniform_measure(n)
        return p, p
    if name == "zipf":
        p = zipf_measure(n)
        return p, p
    if name == "uniform-vs-half-flat":
        return uniform_measure(n), half_flat_measure(n)
    raise ConfigError(f"unknown closeness instance {name!r}")


def _closeness_config(params: dict) -> cl.ClosenessConfig:
    return cl.ClosenessConfig(
        n=int(params["n"]),
        epsilon=float(params["epsilon"]),
        rho=float(params["rho"]),
        c1=float(params.get("c1", cl.DEFAULT_C1)),
        c2=float(params.get("c2", cl.DEFAULT_C2)),
        m_scale=float(params.get("m_scale", 1.0)),
    )


def _uniformity_config(params: dict) -> un.UniformityConfig:
    return un.UniformityConfig(
        n=int(params["n"]),
        epsilon=float(params["epsilon"]),
        rho=float(params["rho"]),
        c1_u=float(params.get("c1_u", un.DEFAULT_C1_U)),
        c2_u=float(params.get("c2_u", un.DEFAULT_C2_U)),
        m_scale=float(params.get("m_scale", 1.0)),
    )


def _independence_config(params: dict) -> ind.IndependenceConfig:
    return ind.IndependenceConfig(
        n1=int(params["n1"]),
        n2=int(params["n2"]),
        epsilon=float(params["epsilon"]),
        rho=float(params["rho"]),
        c_n=float(params.get("c_n", ind.DEFAULT_C_N)),
        c_i1=float(params.get("c_i1", ind.DEFAULT_C_I1)),
        c_i2=float(params.get("c_i2", ind.DEFAULT_C_I2)),
        k_avg=int(params.get("k_avg", ind.DEFAULT_K_AVG)),
        median_reps=int(params.get("median_reps", ind.DEFAULT_MEDIAN_REPS)),
        m_scale=float(params.get("m_scale", 1.0)),
    )


def _closeness_trial(params: dict, seed: int, t: int) -> dict:
    tester_config = _closeness_config(params)
    p, q = _closeness_instance(params)
    stream = RngStream(seed, "closeness-acceptance").substream("trial", t)
    verdict = cl.rep_closeness_test(p, q, tester_config, stream)
    return {"trial": t, "accept": int(verdict.accept),
            "statistic": verdict.statistic, "threshold": verdict.threshold}


def _uniformity_trial(params: dict, seed: int, t: int) -> dict:
    tester_config = _uniformity_config(params)
    name = params.get("instance", "uniform")
    trial = RngStream(seed, "uniformity-acceptance").substream("trial", t)
    if name == "uniform":
        p = uniform_measure(tester_config.n)
    elif name == "file":
        p = _load_instance_measures(params, 1)[0]
    elif name == "meta-epsilon":
        from .hard_instances import UniformityHardParams, draw_uniformity_hard

        p = draw_uniformity_hard(
            UniformityHardParams(
                tester_config.n, tester_config.epsilon, tester_config.epsilon
            ),
            trial.substream("instance"),
        ).normalized()
    else:
        raise ConfigError(f"unknown uniformity instance {name!r}")
    verdict = un.rep_uniformity_test(p, tester_config, trial)
    return {"trial": t, "accept": int(verdict.accept),
            "statistic": verdict.statistic, "threshold": verdict.threshold}


def _independence_trial(params: dict, seed: int, t: int) -> dict:
    tester_config = _independence_config(params)
    name = params.get("instance", "product-uniform")
    if name == "product-uniform":
        p = uniform_product_measure(tester_config.n1, tester_config.n2)
    elif name == "diagonal":
        if tester_config.n1 != tester_config.n2:
            raise ConfigError("diagonal instance needs n1 == n2")
        p = diagonal_measure(tester_config.n1)
    else:
        raise ConfigError(f"unknown independence instance {name!r}")
    stream = RngStream(seed, "independence-acceptance").substream("trial", t)
    verdict = ind.rep_independence_test(p, tester_config, stream)
    return {"trial": t, "accept": int(verdict.accept),
            "statistic": verdict.statistic, "threshold": verdict.threshold,
            "stage": verdict.detail.get("stage", 2)}


def _replicability_pair_fn(params: dict) -> PairFn:
    tester = params.get("tester", "closeness")
    if tester == "closeness":
        tester_config = _closeness_config(params)
        if params.get("instance") == "hard-meta":
            return closeness_meta_pair_fn(
                int(params["n"]), int(params["hard_m"]), float(params["epsilon"]),
                tester_config,
            )
        p, q = _closeness_instance(params)
        return closeness_pair_fn(p, q, tester_config)
    if tester == "uniformity":
        tester_config = _uniformity_config(params)
        if params.get("instance") == "hard-meta":
            return uniformity_meta_pair_fn(
                int(params["n"]), float(params["epsilon"]), tester_config,
                params.get("xi"),
            )
        return uniformity_pair_fn(uniform_measure(tester_config.n), tester_config)
    raise ConfigError(f"unknown tester {tester!r}")


def _replicability_trial(params: dict, seed: int, t: int) -> dict:
    pair_fn = _replicability_pair_fn(params)
    a, b = pair_fn(RngStream(seed, "replicability").substream("pair", t))
    return {"trial": t, "verdict_1": int(a), "verdict_2": int(b)}


def _variance_trial(params: dict, seed: int, t: int) -> dict:
    from .sampling import counts_from_indices, measure_sampler, multinomial_split

    tester_config = _closeness_config(params)
    p, q = _closeness_instance(params)
    sampler_p = measure_sampler(p)
    sampler_q = measure_sampler(q)
    m = tester_config.sample_size()
    trial = RngStream(seed, "variance-audit").substream("trial", t)
    sizes = multinomial_split(4 * m, 4, trial.substream("split"))
    gen_p = trial.substream("sample-1").generator()
    gen_q = trial.substream("sample-2").generator()
    z = cl.closeness_statistic(
        counts_from_indices(sampler_p(int(sizes[0]), gen_p), tester_config.n),
        counts_from_indices(sampler_p(int(sizes[1]), gen_p), tester_config.n),
        counts_from_indices(sampler_q(int(sizes[2]), gen_q), tester_config.n),
        counts_from_indices(sampler_q(int(sizes[3]), gen_q), tester_config.n),
    )
    return {"trial": t, "statistic": z}


def _replicability_aggregate(records: list[dict], params: dict) -> dict:
    disagreements = sum(r["verdict_1"] != r["verdict_2"] for r in records)
    result = ReplicabilityResult(len(records), disagreements)
    return {"pairs": result.pairs, "disagreement_rate": result.rate,
            "stderr": result.stderr}


def _variance_aggregate(records: list[dict], params: dict) -> dict:
    m = _closeness_config(params).sample_size()
    stats = np.array([r["statistic"] for r in records], dtype=float)
    return {
        "m": m,
        "mean": float(stats.mean()),
        "variance": float(stats.var(ddof=1)),
        "variance_per_m": float(stats.var(ddof=1) / m),
    }


def _run_mixing(config: ExperimentConfig) -> tuple[list[dict], dict]:
    params = config.params
    kind = params.get("kernel", "coordinate")
    delta = float(params.get("delta", 0.04))
    if kind == "coordinate":
        kernel = CoordKernel(
            m=int(params["m"]), n=int(params["n"]), xi=float(params["xi"]),
            a_max=int(params.get("a_max", -1)),
        )
    elif kind == "closeness-pair":
        kernel = ClosenessPairKernel(
            n=int(params["n"]), m=int(params["m"]),
            epsilon=float(params["epsilon"]), xi=float(params["xi"]),
            a_max=int(params.get("a_max", -1)),
        )
    else:
        raise ConfigError(f"unknown kernel {kind!r}")
    report = estimate_mixing(kernel, delta, initial=params.get("initial", "all"))
    records = [{"t": t, "l1_to_stationary": tv} for t, tv in report.tv_curve]
    return records, {
        "tau_delta": report.tau_delta,
        "delta": report.delta,
        "gap_estimate": report.gap_estimate,
        "initial": report.initial,
    }


def _run_concentration(config: ExperimentConfig) -> tuple[list[dict], dict]:
    from .walks import concentration_experiment

    params = config.params
    tester_config = _uniformity_config(params)
    tester = un.UniformityTester(tester_config)
    internal = RngStream(config.seed, "concentration-internal")
    verdict_cache = tester.decide_counts

    def decide(counts) -> bool:
        return verdict_cache(counts, internal).accept

    xi_grid = [float(x) for x in params.get("xi_grid", [0.0, 0.1, 0.2])]
    rows = concentration_experiment(
        decide,
        tester_config.n,
        tester_config.epsilon,
        tester.m,
        xi_grid,
        int(params.get("draws_per_xi", 20)),
        config.trials,
        RngStream(config.seed, "concentration"),
    )
    worst = max(r["deviation_fraction"] for r in rows)
    return rows, {"max_deviation_fraction": worst, "xi_grid": xi_grid}


def _rate_aggregate(records: list[dict]) -> dict:
    accepts = np.array([r["accept"] for r in records], dtype=float)
    rate = float(accepts.mean())
    return {
        "trials": len(records),
        "accept_rate": rate,
        "reject_rate": 1.0 - rate,
        "stderr": float(math.sqrt(max(rate * (1 - rate), 1e-12) / len(records))),
    }


def _rate_aggregate_with_params(records: list[dict], params: dict) -> dict:
    return _rate_aggregate(records)


# kinds whose trials are independent pure functions of (params, seed, index)
_TRIAL_FUNCS = {
    "closeness-acceptance": (_closeness_trial, _rate_aggregate_with_params),
    "uniformity-acceptance": (_uniformity_trial, _rate_aggregate_with_params),
    "independence-acceptance": (_independence_trial, _rate_aggregate_with_params),
    "replicability": (_replicability_trial, _replicability_aggregate),
    "variance-audit": (_variance_trial, _variance_aggregate),
}

# whole-run kinds (matrix computations, grids)
_RUNNERS = {
    "mixing": _run_mixing,
    "concentration": _run_concentration,
}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Execute one experiment; deterministic given ``(config, seed)``.

    ``threads > 1`` runs independent trials in a process pool; per-trial
    streams are derived from the trial index, so records are identical
    to a sequential run and are written in trial order.
    """
    if config.kind == "calibration":
        raise ConfigError("use calibrate() for calibration runs")
    start = time.perf_counter()
    if config.kind in _TRIAL_FUNCS:
        trial_fn, aggregate_fn = _TRIAL_FUNCS[config.kind]
        worker = partial(trial_fn, config.params, config.seed)
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                records = list(
                    pool.map(worker, range(config.trials),
                             chunksize=max(1, config.trials // (4 * threads)))
                )
        else:
            records = [worker(t) for t in range(config.trials)]
        aggregate = aggregate_fn(records, config.params)
    else:
        records, aggregate = _RUNNERS[config.kind](config)
    result = ExperimentResult(config, records, aggregate, time.perf_counter() - start)
    if config.out:
        result.write(config.out)
    return result


def recompute_aggregate(kind: str, records: list[dict]) -> dict:
    """Rebuild the aggregate from per-trial records (the `report` command)."""
    if kind in ("closeness-acceptance", "uniformity-acceptance", "independence-acceptance"):
        return _rate_aggregate(records)
    if kind == "replicability":
        disagreements = sum(r["verdict_1"] != r["verdict_2"] for r in records)
        result = ReplicabilityResult(len(records), disagreements)
        return {"pairs": result.pairs, "disagreement_rate": result.rate,
                "stderr": result.stderr}
    if kind == "variance-audit":
        stats = np.array([r["statistic"] for r in records], dtype=float)
        return {"mean": float(stats.mean()), "variance": float(stats.var(ddof=1))}
    raise ConfigError(f"no aggregate recomputation for kind {kind!r}")


def calibrate(kind: str, params: dict, seed: int = 7) -> dict:
    """Desk-scale calibration; returns the constants dict it would write.

    Verifies that the packaged default constants satisfy the gap
    conditions and the target acceptance/rejection rates at the given
    parameters, adjusting the margins when needed. The output feeds the
    ``--constants`` flag of the CLI and the tester config constructors.
    """
    if kind == "closeness":
        config = _closeness_config(params)
        trials = int(params.get("calibration_trials", 50))
        p_u = uniform_measure(config.n)
        far_q = half_flat_measure(config.n)
        root = RngStream(seed, "calibrate-closeness")
        accepts = [
            cl.rep_closeness_test(p_u, p_u, config, root.substream("c", t)).accept
            for t in range(trials)
        ]
        rejects = [
            not cl.rep_closeness_test(p_u, far_q, config, root.substream("s", t)).accept
            for t in range(trials)
        ]
        return {
            "kind": kind, "c1": config.c1, "c2": config.c2,
            "m": config.sample_size(),
            "complete_accept_rate": sum(accepts) / trials,
            "far_reject_rate": sum(rejects) / trials,
        }
    if kind == "uniformity":
        config = _uniformity_config(params)
        m = config.sample_size()
        return {
            "kind": kind, "c1_u": config.c1_u, "c2_u": config.c2_u, "m": m,
            "calibrated_gap": config.is_calibrated(m),
            "ceiling": config.completeness_ceiling(m),
            "floor": config.soundness_floor(m),
        }
    if kind == "independence":
        config = _independence_config(params)
        m = config.sample_size()
        trials = int(params.get("calibration_trials", 20))
        root = RngStream(seed, "calibrate-independence")
        p = uniform_product_measure(config.n1, config.n2)
        from .sampling import measure_sampler

        sampler = measure_sampler(p)
        n_hats, z_hats = [], []
        for t in range(trials):
            sp, sq = ind._draw_pair_sets(
                sampler, (config.n1, config.n2), 100 * m, root.substream("sets", t)
            )
            z_a, n_a = ind._averaged_stats(
                sp, sq, config, root.substream("avg", t),
                min(config.k_avg, 50), None, None, None, True,
            )
            n_hats.append(n_a)
            z_hats.append(z_a)
        scale = ind.stage1_scale(m, config.n1, config.n2)
        gap = ind.independence_gap(m, config.n1, config.n2, config.epsilon)
        return {
            "kind": kind, "m": m,
            "c_n": config.c_n, "c_i1": config.c_i1, "c_i2": config.c_i2,
            "k_avg": config.k_avg, "median_reps": config.median_reps,
            "m_scale": config.m_scale,
            "mean_n_a": float(np.mean(n_hats)),
            "n_a_over_scale": float(np.mean(n_hats) / scale),
            "sd_z_a": float(np.std(z_hats, ddof=1)),
            "gap_scale": gap,
        }
    raise ConfigError(f"unknown calibration kind {kind!r}")
