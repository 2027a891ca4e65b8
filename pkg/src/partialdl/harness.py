"""Monte Carlo orchestration: full init -> descent -> evaluation trials
over a (p, rho) grid, with deterministic per-trial seeding and CSV
emission.

Trial seeds are ``master_seed XOR blake2(p, rho, trial)`` so any grid
cell can be re-run in isolation.  Serial runs produce byte-identical
CSV output for a fixed master seed (the wall-time column is the one
inherently nondeterministic field).
"""

from __future__ import annotations

import hashlib
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .descent import (
    DescentConfig,
    DescentTrace,
    MODE_THRESHOLD,
    MODE_TOPK,
    RESAMPLE_FIXED_POOL,
    RESAMPLE_FRESH,
    ConfigurationError,
    default_eta,
    run_descent,
)
from .evaluation import hungarian_match, recovery_success
from .genmodel import ModelConfig, generate_batch, generate_code, generate_dictionary, sample_stream, synthesize_full
from .numerics import spectral_norm
from .spectral_init import C1_DEFAULT, C2_DEFAULT, InitConfig, InitIncomplete, run_init

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "SweepResult",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "TRIAL_CSV_HEADER",
    "AGGREGATE_CSV_HEADER",
]

TRIAL_CSV_HEADER = "p,rho,trial,success,frob_err,delta,seconds"
AGGREGATE_CSV_HEADER = "p,rho,recovery_rate,mean_frob_err"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; per-cell InitConfig/DescentConfig are
    derived from these knobs at trial time (eta and the init pool size
    depend on the cell's p and rho)."""

    n: int
    m: int
    k: int
    p_grid: tuple[int, ...]
    rho_grid: tuple[float, ...]
    trials: int
    tau: float
    master_seed: int
    holdout_size: int = 0  # 0 -> 20 * m
    code_dist: str = "rademacher"
    C: float = 1.0
    steps: int = 50
    encoder: str = MODE_TOPK
    resample: str = RESAMPLE_FIXED_POOL
    eta: float = 0.0  # 0 -> default_eta(n, m, k, rho) per cell
    samples_per_step: int = 0  # 0 -> the cell's p
    init_trials: int = 3000
    c1: float = C1_DEFAULT
    c2: float = C2_DEFAULT
    dedup_dist: float = 0.0  # 0 -> 1/ln(n)
    init_power_tol: float = 1e-6

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.p_grid or not self.rho_grid:
            raise ValueError("p_grid and rho_grid must be nonempty")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.encoder not in (MODE_TOPK, MODE_THRESHOLD):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.resample not in (RESAMPLE_FIXED_POOL, RESAMPLE_FRESH):
            raise ValueError(f"unknown resample mode {self.resample!r}")
        for rho in self.rho_grid:
            # the initialization guarantee is proven for 1/rho - 1 <= k;
            # outside that regime the algorithm may still work, so warn only
            if 1.0 / rho - 1.0 > self.k:
                warnings.warn(
                    f"rho={rho} with k={self.k} violates 1/rho - 1 <= k; "
                    "initialization runs outside its proven regime",
                    stacklevel=2,
                )

    def effective_holdout(self) -> int:
        return self.holdout_size if self.holdout_size > 0 else 20 * self.m


@dataclass(frozen=True)
class TrialRecord:
    p: int
    rho: float
    trial: int
    success: bool
    frob_err: float
    delta: float
    seconds: float
    reason: str = ""
    trace: DescentTrace | None = None

    def csv_row(self) -> str:
        return (
            f"{self.p},{float(self.rho)!r},{self.trial},{int(self.success)},"
            f"{float(self.frob_err)!r},{float(self.delta)!r},{float(self.seconds)!r}"
        )


@dataclass
class SweepResult:
    records: list[TrialRecord]
    aggregates: list[tuple[int, float, float, float]]  # (p, rho, rate, mean_frob)

    def aggregate_rows(self) -> list[str]:
        return [
            f"{p},{float(rho)!r},{float(rate)!r},{float(mean)!r}"
            for p, rho, rate, mean in self.aggregates
        ]


def trial_seed(master_seed: int, p: int, rho: float, trial: int) -> int:
    """Stable per-cell seed: master_seed XOR a keyed hash of (p, rho, trial)."""
    digest = hashlib.blake2b(
        f"{p}|{float(rho)!r}|{trial}".encode(), digest_size=8
    ).digest()
    return (int(master_seed) ^ int.from_bytes(digest, "little")) & ((1 << 63) - 1)


def run_trial(cfg: ExperimentConfig, p: int, rho: float, seed: int) -> TrialRecord:
    """One full pipeline run: generate, initialize, descend, evaluate.

    Initialization running out of pair trials is recorded as a failed
    trial (reason carries the partial candidate count); it never aborts
    a sweep.
    """
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    model = ModelConfig(n=cfg.n, m=cfg.m, k=cfg.k, rho=rho, code_dist=cfg.code_dist, C=cfg.C)
    a_star = generate_dictionary(model, rng)

    holdout = cfg.effective_holdout()
    fulls = np.stack(
        [synthesize_full(a_star, generate_code(model, rng)) for _ in range(holdout)], axis=1
    )
    pool = generate_batch(model, a_star, p, rng)

    icfg = InitConfig.for_model(
        cfg.n,
        cfg.m,
        cfg.k,
        p1=holdout,
        p2=p,
        max_pair_trials=cfg.init_trials,
        c1=cfg.c1,
        c2=cfg.c2,
        dedup_dist=cfg.dedup_dist if cfg.dedup_dist > 0 else None,
    )
    try:
        a0 = run_init(
            fulls,
            [item.sample for item in pool],
            icfg,
            rng,
            cfg.m,
            rho=rho,
            radius=2.0 * spectral_norm(a_star),
            power_tol=cfg.init_power_tol,
        )
    except InitIncomplete as err:
        return TrialRecord(
            p=p,
            rho=rho,
            trial=-1,
            success=False,
            frob_err=float("nan"),
            delta=float("nan"),
            seconds=time.perf_counter() - t0,
            reason=f"init_incomplete:{len(err.candidates)}/{cfg.m}",
        )

    eta = cfg.eta if cfg.eta > 0 else default_eta(cfg.n, cfg.m, cfg.k, rho)
    dcfg = DescentConfig(
        eta=eta,
        steps=cfg.steps,
        threshold_mode=cfg.encoder,
        samples_per_step=cfg.samples_per_step if cfg.samples_per_step > 0 else p,
        resample=cfg.resample,
    )
    data = pool if cfg.resample == RESAMPLE_FIXED_POOL else sample_stream(model, a_star, rng)
    a_hat, trace = run_descent(a0, dcfg, data, rho, cfg.k, cfg.C, rng=rng, a_star=a_star)

    if not np.all(np.isfinite(a_hat)):
        return TrialRecord(
            p=p,
            rho=rho,
            trial=-1,
            success=False,
            frob_err=float("nan"),
            delta=float("nan"),
            seconds=time.perf_counter() - t0,
            reason="diverged",
            trace=trace,
        )
    match = hungarian_match(a_hat, a_star)
    return TrialRecord(
        p=p,
        rho=rho,
        trial=-1,
        success=recovery_success(match, cfg.tau),
        frob_err=match.frob_err,
        delta=match.max_err,
        seconds=time.perf_counter() - t0,
        trace=trace,
    )


def _run_cell(args) -> TrialRecord:
    cfg, p, rho, trial = args
    rec = run_trial(cfg, p, rho, trial_seed(cfg.master_seed, p, rho, trial))
    return replace(rec, trial=trial)


def run_sweep(
    cfg: ExperimentConfig,
    out_dir=None,
    serial: bool = True,
    max_workers: int | None = None,
    write_traces: bool = True,
) -> SweepResult:
    """Run the full grid x trials and aggregate per-cell statistics.

    Results are collected in grid order regardless of scheduling, so a
    parallel run emits the same rows as a serial one (timings aside).
    """
    tasks = [
        (cfg, p, rho, t)
        for p in cfg.p_grid
        for rho in cfg.rho_grid
        for t in range(cfg.trials)
    ]
    if serial:
        records = [_run_cell(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(_run_cell, tasks, chunksize=1))

    aggregates = []
    i = 0
    for p in cfg.p_grid:
        for rho in cfg.rho_grid:
            cell = records[i : i + cfg.trials]
            i += cfg.trials
            rate = sum(1.0 for r in cell if r.success) / cfg.trials
            finite = [r.frob_err for r in cell if math.isfinite(r.frob_err)]
            mean = sum(finite) / len(finite) if finite else float("nan")
            aggregates.append((p, rho, rate, mean))

    result = SweepResult(records=records, aggregates=aggregates)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w") as fh:
            fh.write(TRIAL_CSV_HEADER + "\n")
            for rec in records:
                fh.write(rec.csv_row() + "\n")
        with open(out / "aggregate.csv", "w") as fh:
            fh.write(AGGREGATE_CSV_HEADER + "\n")
            for row in result.aggregate_rows():
                fh.write(row + "\n")
        if write_traces:
            for rec in records:
                if rec.trace is not None:
                    rec.trace.write_csv(out / f"trace_p{rec.p}_rho{rec.rho}_{rec.trial}.csv")
    return result
