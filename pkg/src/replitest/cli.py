"""Command-line harness.

Subcommands:
  test        one-shot verdict on sample files
  experiment  batch experiment from a JSON config
  calibrate   desk-scale constant calibration
  mixing      mixing-time report for a walk kernel
  report      recompute aggregates from per-trial records

Exit codes: 0 success, 2 validation error, 3 check failure in
``experiment --check`` mode.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import closeness as cl
from . import independence as ind
from . import uniformity as un
from .experiments import (
    ConfigError,
    ExperimentConfig,
    calibrate,
    recompute_aggregate,
    run_experiment,
)
from .rng import RngStream
from .sampling import counts_from_indices

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CHECK_FAILED = 3


def _load_constants(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read constants file {path}: {exc}") from exc


def _read_1d_samples(path: str) -> np.ndarray:
    try:
        values = [int(line) for line in Path(path).read_text().split()]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot parse 1D sample file {path}: {exc}") from exc
    return np.asarray(values, dtype=np.int64)


def _read_2d_samples(path: str) -> np.ndarray:
    rows = []
    try:
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            rows.append((int(a), int(b)))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot parse 2D sample file {path}: {exc}") from exc
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2)


def _pool_sampler(pool: np.ndarray):
    """Sampler that consumes a fixed pool of pre-drawn indices in order."""
    cursor = 0

    def draw(k: int, gen) -> np.ndarray:
        nonlocal cursor
        if cursor + k > pool.shape[0]:
            raise ConfigError(
                f"sample file exhausted: need {cursor + k} samples, file has {pool.shape[0]}"
            )
        out = pool[cursor : cursor + k]
        cursor += k
        return out

    return draw


def _cmd_test(args: argparse.Namespace) -> int:
    constants = _load_constants(args.constants)
    rng = RngStream(args.seed, "cli-test")
    if args.problem == "closeness":
        config = cl.ClosenessConfig(
            n=args.n, epsilon=args.epsilon, rho=args.rho,
            c1=constants.get("c1", cl.DEFAULT_C1),
            c2=constants.get("c2", cl.DEFAULT_C2),
            m_scale=constants.get("m_scale", args.m_scale),
        )
        pool_p = _read_1d_samples(args.samples_p)
        pool_q = _read_1d_samples(args.samples_q)
        verdict = cl.rep_closeness_test(
            _pool_sampler(pool_p), _pool_sampler(pool_q), config, rng
        )
    elif args.problem == "uniformity":
        config = un.UniformityConfig(
            n=args.n, epsilon=args.epsilon, rho=args.rho,
            c1_u=constants.get("c1_u", un.DEFAULT_C1_U),
            c2_u=constants.get("c2_u", un.DEFAULT_C2_U),
            m_scale=constants.get("m_scale", args.m_scale),
        )
        samples = _read_1d_samples(args.samples)
        counts = counts_from_indices(samples, args.n)
        verdict = un.UniformityTester(config).decide_counts(
            counts, rng.substream("internal")
        )
    elif args.problem == "independence":
        config = ind.IndependenceConfig(
            n1=args.n1, n2=args.n2, epsilon=args.epsilon, rho=args.rho,
            c_n=constants.get("c_n", ind.DEFAULT_C_N),
            c_i1=constants.get("c_i1", ind.DEFAULT_C_I1),
            c_i2=constants.get("c_i2", ind.DEFAULT_C_I2),
            k_avg=int(constants.get("k_avg", ind.DEFAULT_K_AVG)),
            median_reps=int(constants.get("median_reps", ind.DEFAULT_MEDIAN_REPS)),
            m_scale=constants.get("m_scale", args.m_scale),
        )
        pool = _read_2d_samples(args.samples)
        flat = pool[:, 0] * args.n2 + pool[:, 1]
        verdict = ind.rep_independence_test(_pool_sampler(flat), config, rng)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown problem {args.problem!r}")
    print(
        json.dumps(
            {"verdict": verdict.label, "statistic": verdict.statistic,
             "threshold": verdict.threshold, "calibrated": verdict.calibrated}
        )
    )
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_json_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        config = ExperimentConfig(
            kind=config.kind,
            seed=overrides.get("seed", config.seed),
            trials=overrides.get("trials", config.trials),
            params=config.params,
            out=overrides.get("out", config.out),
        )
    if args.constants:
        merged = dict(config.params)
        merged.update(_load_constants(args.constants))
        config = ExperimentConfig(config.kind, config.seed, config.trials, merged, config.out)
    result = run_experiment(config, threads=max(1, args.threads))
    print(json.dumps({"kind": config.kind, "aggregate": result.aggregate}, indent=2))
    if args.check:
        checks = config.params.get("check", {})
        for key, bound in checks.items():
            direction, _, metric = key.partition(":")
            value = result.aggregate.get(metric)
            if value is None:
                print(f"check failed: metric {metric!r} missing", file=sys.stderr)
                return EXIT_CHECK_FAILED
            ok = value >= bound if direction == "min" else value <= bound
            if not ok:
                print(
                    f"check failed: {metric} = {value} violates {direction} {bound}",
                    file=sys.stderr,
                )
                return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    params = _load_constants(args.params) if args.params else {}
    for key in ("n", "n1", "n2"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.epsilon is not None:
        params["epsilon"] = args.epsilon
    if args.rho is not None:
        params["rho"] = args.rho
    if args.m_scale is not None:
        params["m_scale"] = args.m_scale
    constants = calibrate(args.kind, params, seed=args.seed)
    text = json.dumps(constants, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def _cmd_mixing(args: argparse.Namespace) -> int:
    params = {
        "kernel": args.kernel, "n": args.n, "m": args.m, "xi": args.xi,
        "delta": args.delta, "initial": args.initial,
    }
    if args.epsilon is not None:
        params["epsilon"] = args.epsilon
    if args.a_max is not None:
        params["a_max"] = args.a_max
    config = ExperimentConfig("mixing", args.seed, 1, params, args.out)
    result = run_experiment(config)
    print(json.dumps(result.aggregate, indent=2))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        with Path(args.records).open() as fh:
            records = []
            for row in csv.DictReader(fh):
                parsed = {}
                for key, value in row.items():
                    try:
                        parsed[key] = int(value)
                    except ValueError:
                        try:
                            parsed[key] = float(value)
                        except ValueError:
                            parsed[key] = value
                records.append(parsed)
    except OSError as exc:
        raise ConfigError(f"cannot read records {args.records}: {exc}") from exc
    aggregate = recompute_aggregate(args.kind, records)
    print(json.dumps(aggregate, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replitest")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="one-shot verdict on sample files")
    p_test.add_argument("problem", choices=["closeness", "uniformity", "independence"])
    p_test.add_argument("--samples", help="1D samples (uniformity) or pairs (independence)")
    p_test.add_argument("--samples-p", help="closeness: samples from p")
    p_test.add_argument("--samples-q", help="closeness: samples from q")
    p_test.add_argument("--n", type=int)
    p_test.add_argument("--n1", type=int)
    p_test.add_argument("--n2", type=int)
    p_test.add_argument("--epsilon", type=float, required=True)
    p_test.add_argument("--rho", type=float, required=True)
    p_test.add_argument("--m-scale", type=float, default=1.0)
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--constants", help="JSON constants file")
    p_test.set_defaults(func=_cmd_test)

    p_exp = sub.add_parser("experiment", help="run a batch experiment")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--seed", type=int)
    p_exp.add_argument("--trials", type=int)
    p_exp.add_argument("--out")
    p_exp.add_argument("--threads", type=int, default=1,
                       help="worker processes for independent trials")
    p_exp.add_argument("--constants")
    p_exp.add_argument("--check", action="store_true",
                       help="exit 3 unless params['check'] bounds hold")
    p_exp.set_defaults(func=_cmd_experiment)

    p_cal = sub.add_parser("calibrate", help="calibrate tester constants")
    p_cal.add_argument("--kind", required=True,
                       choices=["closeness", "uniformity", "independence"])
    p_cal.add_argument("--params", help="JSON file with base parameters")
    p_cal.add_argument("--n", type=int)
    p_cal.add_argument("--n1", type=int)
    p_cal.add_argument("--n2", type=int)
    p_cal.add_argument("--epsilon", type=float)
    p_cal.add_argument("--rho", type=float)
    p_cal.add_argument("--m-scale", type=float)
    p_cal.add_argument("--seed", type=int, default=7)
    p_cal.add_argument("--out")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_mix = sub.add_parser("mixing", help="mixing-time report")
    p_mix.add_argument("--kernel", choices=["coordinate", "closeness-pair"],
                       default="coordinate")
    p_mix.add_argument("--n", type=int, required=True)
    p_mix.add_argument("--m", type=int, required=True)
    p_mix.add_argument("--xi", type=float, required=True)
    p_mix.add_argument("--epsilon", type=float)
    p_mix.add_argument("--delta", type=float, default=0.04)
    p_mix.add_argument("--a-max", type=int)
    p_mix.add_argument("--initial", choices=["all", "poisson", "point"], default="all")
    p_mix.add_argument("--seed", type=int, default=0)
    p_mix.add_argument("--out")
    p_mix.set_defaults(func=_cmd_mixing)

    p_rep = sub.add_parser("report", help="recompute aggregates from records")
    p_rep.add_argument("--records", required=True)
    p_rep.add_argument("--kind", required=True)
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
