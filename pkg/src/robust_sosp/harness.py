"""Experiment pipeline: generate, corrupt, recover, report.

File formats are bit-specified for reproducibility.  Datasets are binary,
little-endian: magic "RLRMS1\\0", u32 d, u32 r (0 when unknown), u64 n,
f64 sigma, then n records of (d*d f64 row-major design matrix, f64 response).
Configs are JSON; unknown keys are rejected.  Trace CSVs have the fixed
columns iter, phase, grad_norm, min_eig, opnorm_U, dist_opt, elapsed_ms.

Determinism contract: (config, seed) fully determines the dataset, the trace
CSV, and every summary field except wall-clock timing, which therefore lives
only in the summary JSON (under "timing") and in the CSV summary row, never
in per-iteration rows.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corruption import (
    STRATEGIES,
    CorruptionPlan,
    GroundTruth,
    corrupt,
    generate_ground_truth,
    sample_clean,
)
from .errors import ConfigInvalid, NonFinite
from .sensing import (
    ProblemSpec,
    RecoveryResult,
    SensingSample,
    dist_to_solution_set,
    recover,
)

MAGIC = b"RLRMS1\0"
CSV_COLUMNS = ("iter", "phase", "grad_norm", "min_eig", "opnorm_U", "dist_opt", "elapsed_ms")

_CONFIG_KEYS = {
    "d", "r", "n", "spectrum", "sigma", "eps", "strategy", "seed", "iota",
    "Gamma", "dataset_out", "trace_csv", "summary_json",
}


def thread_cap() -> int:
    """Value of ROBUST_SOSP_THREADS (0 = auto). Evaluation is serial either
    way; the cap is honored as an upper bound, not a demand."""
    raw = os.environ.get("ROBUST_SOSP_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        raise ConfigInvalid(f"ROBUST_SOSP_THREADS must be an integer, got {raw!r}")
    if val < 0:
        raise ConfigInvalid("ROBUST_SOSP_THREADS must be >= 0")
    return val


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    r: int
    n: int
    spectrum: tuple[float, ...]
    sigma: float
    eps: float
    strategy: str
    seed: int
    iota: float = 1e-6
    Gamma: Optional[float] = None
    dataset_out: Optional[str] = None
    trace_csv: Optional[str] = None
    summary_json: Optional[str] = None

    def __post_init__(self):
        if len(self.spectrum) != self.r:
            raise ConfigInvalid("spectrum length must equal r")
        if self.n < 1:
            raise ConfigInvalid("n must be >= 1")
        if self.iota <= 0:
            raise ConfigInvalid("iota must be positive")
        try:
            CorruptionPlan(strategy=self.strategy, eps=self.eps)
            self.problem_spec()  # runs ProblemSpec validation
        except (ValueError, ConfigInvalid) as e:
            raise ConfigInvalid(str(e)) from e
        except Exception as e:  # EpsOutOfRange etc.
            raise ConfigInvalid(str(e)) from e

    def gamma(self) -> float:
        return self.Gamma if self.Gamma is not None else 36.0 * max(self.spectrum)

    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(
            d=self.d,
            r=self.r,
            Gamma=self.gamma(),
            sigma_r_star=min(self.spectrum),
            eps=max(self.eps, 1e-12),  # ProblemSpec requires eps > 0
            sigma=self.sigma,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        required = {"d", "r", "n", "spectrum", "sigma", "eps", "strategy", "seed"}
        missing = required - set(data)
        if missing:
            raise ConfigInvalid(f"missing config keys: {sorted(missing)}")
        try:
            return cls(
                d=int(data["d"]),
                r=int(data["r"]),
                n=int(data["n"]),
                spectrum=tuple(float(s) for s in data["spectrum"]),
                sigma=float(data["sigma"]),
                eps=float(data["eps"]),
                strategy=str(data["strategy"]),
                seed=int(data["seed"]),
                iota=float(data.get("iota", 1e-6)),
                Gamma=None if data.get("Gamma") is None else float(data["Gamma"]),
                dataset_out=data.get("dataset_out"),
                trace_csv=data.get("trace_csv"),
                summary_json=data.get("summary_json"),
            )
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(str(e)) from e

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"{path}: invalid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


def write_dataset(
    path: str | Path, samples: Sequence[SensingSample], sigma: float, r: int = 0
) -> None:
    """Serialize samples in the little-endian binary layout described above."""
    n = len(samples)
    d = samples[0].A.shape[0] if n else 0
    body = np.empty((n, d * d + 1), dtype="<f8")
    for i, s in enumerate(samples):
        body[i, : d * d] = np.ascontiguousarray(s.A, dtype=float).reshape(-1)
        body[i, d * d] = s.y
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQd", d, r, n, sigma))
        f.write(body.tobytes())


def read_dataset(path: str | Path) -> tuple[list[SensingSample], int, float]:
    """Inverse of write_dataset. Returns (samples, r, sigma)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ConfigInvalid(f"{path}: not a dataset file (bad magic)")
        d, r, n, sigma = struct.unpack("<IIQd", f.read(24))
        body = np.frombuffer(f.read(), dtype="<f8")
    if body.size != n * (d * d + 1):
        raise ConfigInvalid(f"{path}: truncated dataset")
    body = body.reshape(n, d * d + 1)
    samples = [
        SensingSample(A=body[i, : d * d].reshape(d, d).copy(), y=float(body[i, d * d]))
        for i in range(n)
    ]
    return samples, r, sigma


@dataclass(frozen=True)
class RunReport:
    rows: list[dict]
    frob_error: float
    branch: str
    robust_rounds: int
    iterations: int
    timing: dict
    result: RecoveryResult


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _trace_rows(result: RecoveryResult, U_star: Optional[np.ndarray]) -> list[dict]:
    rows = []

    def dist(U: np.ndarray) -> Optional[float]:
        return None if U_star is None else dist_to_solution_set(U, U_star)

    if result.global_trace is not None:
        d, r = U_star.shape if U_star is not None else (None, None)
        for rec in result.global_trace.records:
            U = rec.x.reshape(
                (rec.x.size // result.U_final.shape[1], result.U_final.shape[1]),
                order="F",
            )
            rows.append({
                "iter": rec.index,
                "phase": "global",
                "grad_norm": rec.grad_norm,
                "min_eig": rec.lambda_min,
                "opnorm_U": float(np.linalg.norm(U, 2)),
                "dist_opt": dist(U),
            })
    if result.refine_trace is not None:
        tr = result.refine_trace
        for i, U in enumerate(tr.iterates):
            rows.append({
                "iter": i,
                "phase": "refine",
                "grad_norm": tr.grad_norms[i] if i < len(tr.grad_norms) else None,
                "min_eig": None,
                "opnorm_U": float(np.linalg.norm(U, 2)),
                "dist_opt": dist(U),
            })
    return rows


def write_trace_csv(path: str | Path, rows: list[dict], timing_ms: float) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([
                row["iter"], row["phase"], _fmt(row["grad_norm"]),
                _fmt(row["min_eig"]), _fmt(row["opnorm_U"]),
                _fmt(row["dist_opt"]), "",
            ])
        last = rows[-1] if rows else {"grad_norm": None, "min_eig": None,
                                      "opnorm_U": None, "dist_opt": None}
        w.writerow([
            len(rows), "summary", _fmt(last["grad_norm"]), _fmt(last["min_eig"]),
            _fmt(last["opnorm_U"]), _fmt(last["dist_opt"]), _fmt(timing_ms),
        ])


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Full pipeline: ground truth, clean samples, corruption, recovery.

    Sub-seeds for each stage are spawned from SeedSequence(config.seed), so
    e.g. the ground truth does not change when the strategy does.
    """
    thread_cap()  # validate the env var up front
    ss = np.random.SeedSequence(config.seed)
    truth_ss, data_ss, corrupt_ss, solver_ss = ss.spawn(4)
    spec = config.problem_spec()

    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    truth = generate_ground_truth(config.d, config.spectrum, np.random.default_rng(truth_ss))
    clean = sample_clean(truth, config.n, config.sigma, np.random.default_rng(data_ss))
    plan = CorruptionPlan(strategy=config.strategy, eps=config.eps)
    samples, _, _ = corrupt(clean, plan, truth, np.random.default_rng(corrupt_ss),
                            sigma=config.sigma)
    timing["generate_ms"] = (time.perf_counter() - t0) * 1e3

    if config.dataset_out:
        write_dataset(config.dataset_out, samples, config.sigma, r=config.r)

    t1 = time.perf_counter()
    solver_seed = int(solver_ss.generate_state(1)[0])
    result = recover(samples, spec, seed=solver_seed, iota=config.iota,
                     M_star=truth.M_star)
    timing["recover_ms"] = (time.perf_counter() - t1) * 1e3
    timing["total_ms"] = (time.perf_counter() - t0) * 1e3

    rows = _trace_rows(result, truth.U_star)
    if config.trace_csv:
        write_trace_csv(config.trace_csv, rows, timing["total_ms"])

    report = RunReport(
        rows=rows,
        frob_error=result.frob_error,
        branch=result.branch,
        robust_rounds=result.robust_rounds,
        iterations=len(rows),
        timing=timing,
        result=result,
    )
    if config.summary_json:
        with open(config.summary_json, "w") as f:
            json.dump({
                "frob_error": report.frob_error,
                "branch": report.branch,
                "robust_rounds": report.robust_rounds,
                "iterations": report.iterations,
                "seed": config.seed,
                "strategy": config.strategy,
                "eps": config.eps,
                "sigma": config.sigma,
                "timing": timing,
            }, f, indent=2)
            f.write("\n")
    return report


def sweep(
    config: ExperimentConfig,
    eps_values: Sequence[float],
    sigma_values: Optional[Sequence[float]] = None,
    out_csv: Optional[str | Path] = None,
) -> list[dict]:
    """Grid over eps (and optionally sigma); one summary row per cell."""
    sigmas = list(sigma_values) if sigma_values else [config.sigma]
    rows = []
    for sigma in sigmas:
        for eps in eps_values:
            cfg = ExperimentConfig(
                d=config.d, r=config.r, n=config.n, spectrum=config.spectrum,
                sigma=sigma, eps=eps, strategy=config.strategy,
                seed=config.seed, iota=config.iota, Gamma=config.Gamma,
            )
            report = run_experiment(cfg)
            rows.append({
                "eps": eps, "sigma": sigma, "seed": config.seed,
                "strategy": config.strategy, "branch": report.branch,
                "frob_error": report.frob_error,
                "robust_rounds": report.robust_rounds,
                "iterations": report.iterations,
                "elapsed_ms": report.timing["total_ms"],
            })
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)
    return rows
