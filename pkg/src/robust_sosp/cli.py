"""Command-line interface.

Subcommands: generate (write a dataset), corrupt (rewrite a dataset with an
adversarial fraction replaced), recover (run recovery on a dataset), run
(full pipeline from a JSON config), sweep (grid over eps/sigma).

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .corruption import CorruptionPlan, GroundTruth, corrupt, generate_ground_truth, sample_clean
from .errors import ConfigInvalid, EpsOutOfRange, RobustSospError
from .harness import (
    ExperimentConfig,
    read_dataset,
    run_experiment,
    sweep,
    thread_cap,
    write_dataset,
)
from .sensing import ProblemSpec, recover


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-sosp")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a clean dataset file")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--spectrum", type=str, required=True,
                   help="comma-separated singular values of the target")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", type=str, required=True)

    c = sub.add_parser("corrupt", help="replace an eps-fraction of a dataset")
    c.add_argument("--input", type=str, required=True)
    c.add_argument("--output", type=str, required=True)
    c.add_argument("--strategy", type=str, required=True)
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--spectrum", type=str, required=True,
                   help="ground-truth spectrum (needed to scale outliers); "
                        "must match the generating seed")
    c.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("recover", help="run recovery on a dataset file")
    r.add_argument("--input", type=str, required=True)
    r.add_argument("--eps", type=float, required=True)
    r.add_argument("--d", type=int, required=True)
    r.add_argument("--r", type=int, required=True)
    r.add_argument("--Gamma", type=float, required=True)
    r.add_argument("--sigma-r-star", type=float, required=True)
    r.add_argument("--iota", type=float, default=1e-6)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--output", type=str, required=True, help="summary JSON path")

    ru = sub.add_parser("run", help="full pipeline from a JSON config")
    ru.add_argument("--config", type=str, required=True)

    sw = sub.add_parser("sweep", help="grid of runs over eps (and sigma)")
    sw.add_argument("--config", type=str, required=True)
    sw.add_argument("--eps", type=str, required=True, help="comma-separated list")
    sw.add_argument("--sigma", type=str, default=None, help="comma-separated list")
    sw.add_argument("--output", type=str, required=True, help="sweep CSV path")
    return p


def _floats(csv_arg: str) -> list[float]:
    try:
        return [float(x) for x in csv_arg.split(",") if x.strip() != ""]
    except ValueError as e:
        raise ConfigInvalid(f"bad numeric list {csv_arg!r}") from e


def _generate(args) -> None:
    spectrum = _floats(args.spectrum)
    ss = np.random.SeedSequence(args.seed)
    truth_ss, data_ss = ss.spawn(2)
    truth = generate_ground_truth(args.d, spectrum, np.random.default_rng(truth_ss))
    samples = sample_clean(truth, args.n, args.sigma, np.random.default_rng(data_ss))
    write_dataset(args.output, samples, args.sigma, r=len(spectrum))


def _corrupt(args) -> None:
    samples, r, sigma = read_dataset(args.input)
    spectrum = _floats(args.spectrum)
    ss = np.random.SeedSequence(args.seed)
    truth_ss, _, corrupt_ss = ss.spawn(3)
    truth = generate_ground_truth(args.d, spectrum, np.random.default_rng(truth_ss))
    plan = CorruptionPlan(strategy=args.strategy, eps=args.eps)
    out, _, _ = corrupt(samples, plan, truth, np.random.default_rng(corrupt_ss), sigma=sigma)
    write_dataset(args.output, out, sigma, r=r)


def _recover(args) -> None:
    samples, _, sigma = read_dataset(args.input)
    spec = ProblemSpec(d=args.d, r=args.r, Gamma=args.Gamma,
                       sigma_r_star=args.sigma_r_star, eps=args.eps, sigma=sigma)
    result = recover(samples, spec, seed=args.seed, iota=args.iota)
    with open(args.output, "w") as f:
        json.dump({
            "branch": result.branch,
            "robust_rounds": result.robust_rounds,
            "M_hat": result.M_hat.tolist(),
        }, f, indent=2)
        f.write("\n")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        thread_cap()
        if args.command == "generate":
            _generate(args)
        elif args.command == "corrupt":
            _corrupt(args)
        elif args.command == "recover":
            _recover(args)
        elif args.command == "run":
            config = ExperimentConfig.from_json(args.config)
            run_experiment(config)
        elif args.command == "sweep":
            config = ExperimentConfig.from_json(args.config)
            sigmas = _floats(args.sigma) if args.sigma else None
            sweep(config, _floats(args.eps), sigma_values=sigmas, out_csv=args.output)
        return 0
    except (ConfigInvalid, EpsOutOfRange, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: no such file: {e.filename}", file=sys.stderr)
        return 2
    except (RobustSospError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
