"""Command-line entry points.

Subcommands cover the full reproduction pipeline on synthetic data:

    generate   write A*, a fully observed hold-out set and a partial pool
    init       spectral initialization from the generated files
    learn      descent refinement from A0 and the partial pool
    eval       score an estimate against the ground truth
    sweep      Monte Carlo recovery-rate sweep over a (p, rho) grid

Configuration is a flat ``key = value`` text file (``#`` starts a
comment); command-line flags override file values.  The recognized keys
are listed in ``CONFIG_KEYS``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import descent, genmodel, harness, spectral_init
from .evaluation import EVAL_CSV_HEADER, eval_csv_row
from .numerics import load_matrix, save_matrix
from .spectral_init import INIT_REPORT_HEADER

__all__ = ["main", "read_config", "build_experiment_config", "CONFIG_KEYS"]

A_STAR_FILE = "A_star.mat"
HOLDOUT_FILE = "holdout.ds"
PARTIALS_FILE = "partials.ds"
A0_FILE = "A0.mat"
LEARNED_FILE = "A.mat"
TRACE_FILE = "trace.csv"
INIT_REPORT_FILE = "init_report.csv"

CONFIG_KEYS = {
    # model
    "n": int,
    "m": int,
    "k": int,
    "rho": float,
    "code_dist": str,
    "C": float,
    # single-run sample count
    "p": int,
    # descent
    "eta": float,
    "steps": int,
    "encoder": str,  # topk | threshold
    "resample": str,  # fixed_pool | fresh
    "samples_per_step": int,
    # initialization
    "holdout_size": int,
    "init_trials": int,
    "c1": float,
    "c2": float,
    "dedup_dist": float,
    "init_power_tol": float,
    # sweep
    "p_grid": str,  # comma-separated ints
    "rho_grid": str,  # comma-separated floats
    "trials": int,
    "tau": float,
    "master_seed": int,
}


class UsageError(ValueError):
    pass


def read_config(path) -> dict:
    """Parse a flat key = value config file into typed values."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                out[key] = CONFIG_KEYS[key](value)
            except ValueError as err:
                raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {err}") from err
    return out


def _parse_grid(text: str, cast):
    items = [tok.strip() for tok in str(text).split(",") if tok.strip()]
    if not items:
        raise UsageError(f"empty grid: {text!r}")
    return tuple(cast(tok) for tok in items)


def build_experiment_config(conf: dict, args=None) -> harness.ExperimentConfig:
    """Merge config-file values and flag overrides into an ExperimentConfig."""
    merged = dict(conf)
    if args is not None:
        if getattr(args, "seed", None) is not None:
            merged["master_seed"] = args.seed
        if getattr(args, "trials", None) is not None:
            merged["trials"] = args.trials
        if getattr(args, "p", None) is not None:
            merged["p_grid"] = str(args.p)
        if getattr(args, "rho", None) is not None:
            merged["rho_grid"] = str(args.rho)
        if getattr(args, "encoder", None) is not None:
            merged["encoder"] = args.encoder
        if getattr(args, "resample", None) is not None:
            merged["resample"] = args.resample
    for key in ("n", "m", "k"):
        if key not in merged:
            raise UsageError(f"config is missing required key {key!r}")
    if "p_grid" not in merged and "p" in merged:
        merged["p_grid"] = str(merged["p"])
    if "rho_grid" not in merged and "rho" in merged:
        merged["rho_grid"] = str(merged["rho"])
    for key in ("p_grid", "rho_grid"):
        if key not in merged:
            raise UsageError(f"config is missing required key {key!r}")
    encoder_names = {"topk": descent.MODE_TOPK, "threshold": descent.MODE_THRESHOLD}
    encoder = merged.get("encoder", "topk")
    if encoder not in encoder_names:
        raise UsageError(f"encoder must be one of {sorted(encoder_names)}, got {encoder!r}")
    return harness.ExperimentConfig(
        n=merged["n"],
        m=merged["m"],
        k=merged["k"],
        p_grid=_parse_grid(merged["p_grid"], int),
        rho_grid=_parse_grid(merged["rho_grid"], float),
        trials=merged.get("trials", 1),
        tau=merged.get("tau", 6.0 * merged["n"] / 256.0),
        master_seed=merged.get("master_seed", 0),
        holdout_size=merged.get("holdout_size", 0),
        code_dist=merged.get("code_dist", "rademacher"),
        C=merged.get("C", 1.0),
        steps=merged.get("steps", 50),
        encoder=encoder_names[encoder],
        resample=merged.get("resample", descent.RESAMPLE_FIXED_POOL),
        eta=merged.get("eta", 0.0),
        samples_per_step=merged.get("samples_per_step", 0),
        init_trials=merged.get("init_trials", 3000),
        c1=merged.get("c1", spectral_init.C1_DEFAULT),
        c2=merged.get("c2", spectral_init.C2_DEFAULT),
        dedup_dist=merged.get("dedup_dist", 0.0),
        init_power_tol=merged.get("init_power_tol", 1e-6),
    )


def _require(conf: dict, args, key: str, flag_value=None):
    if flag_value is not None:
        return flag_value
    if key not in conf:
        raise UsageError(f"missing {key!r}: set it in the config file or pass the flag")
    return conf[key]


def _model_from_config(conf: dict, rho: float) -> genmodel.ModelConfig:
    return genmodel.ModelConfig(
        n=conf["n"],
        m=conf["m"],
        k=conf["k"],
        rho=rho,
        code_dist=conf.get("code_dist", "rademacher"),
        C=conf.get("C", 1.0),
    )


def _cmd_generate(args) -> int:
    conf = read_config(args.config)
    rho = float(_require(conf, args, "rho", args.rho))
    p = int(_require(conf, args, "p", args.p))
    seed = args.seed if args.seed is not None else conf.get("master_seed", 0)
    model = _model_from_config(conf, rho)
    rng = np.random.default_rng(seed)

    a_star = genmodel.generate_dictionary(model, rng)
    holdout = conf.get("holdout_size", 0) or 20 * model.m
    full_model = genmodel.ModelConfig(
        n=model.n, m=model.m, k=model.k, rho=1.0, code_dist=model.code_dist, C=model.C
    )
    fulls = []
    for _ in range(holdout):
        vec = genmodel.synthesize_full(a_star, genmodel.generate_code(model, rng))
        fulls.append(genmodel.PartialSample(observed=np.arange(model.n), values=vec))
    pool = genmodel.generate_batch(model, a_star, p, rng)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / A_STAR_FILE, a_star)
    genmodel.save_dataset(out / HOLDOUT_FILE, full_model, fulls)
    genmodel.save_dataset(out / PARTIALS_FILE, model, [item.sample for item in pool])
    print(f"wrote {A_STAR_FILE}, {HOLDOUT_FILE} (p1={holdout}), {PARTIALS_FILE} (p={p}) to {out}")
    return 0


def _cmd_init(args) -> int:
    conf = read_config(args.config)
    out = Path(args.out_dir)
    hold_meta, holdout = genmodel.load_dataset(out / HOLDOUT_FILE)
    part_meta, partials = genmodel.load_dataset(out / PARTIALS_FILE)
    seed = args.seed if args.seed is not None else conf.get("master_seed", 0)
    n, m, k = part_meta["n"], part_meta["m"], part_meta["k"]
    icfg = spectral_init.InitConfig.for_model(
        n,
        m,
        k,
        p1=hold_meta["p"],
        p2=part_meta["p"],
        max_pair_trials=conf.get("init_trials", 3000),
        c1=conf.get("c1", spectral_init.C1_DEFAULT),
        c2=conf.get("c2", spectral_init.C2_DEFAULT),
        dedup_dist=conf.get("dedup_dist") or None,
    )
    report: list = []
    try:
        a0 = spectral_init.run_init(
            [s.values for s in holdout],
            partials,
            icfg,
            np.random.default_rng(seed),
            m,
            rho=part_meta["rho"],
            report=report,
            power_tol=conf.get("init_power_tol", 1e-6),
        )
    except spectral_init.InitIncomplete as err:
        _write_init_report(out / INIT_REPORT_FILE, err.report)
        print(f"error: init_incomplete: {err}", file=sys.stderr)
        return 1
    _write_init_report(out / INIT_REPORT_FILE, report)
    save_matrix(out / A0_FILE, a0)
    print(f"wrote {A0_FILE} after {len(report)} pair trials; report in {INIT_REPORT_FILE}")
    return 0


def _write_init_report(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write(INIT_REPORT_HEADER + "\n")
        for trial, ui, vi, d1, d2, accepted, size in rows:
            fh.write(f"{trial},{ui},{vi},{float(d1)!r},{float(d2)!r},{int(accepted)},{size}\n")


def _cmd_learn(args) -> int:
    conf = read_config(args.config)
    out = Path(args.out_dir)
    meta, partials = genmodel.load_dataset(out / PARTIALS_FILE)
    a0 = load_matrix(out / A0_FILE)
    seed = args.seed if args.seed is not None else conf.get("master_seed", 0)
    rng = np.random.default_rng(seed)
    n, m, k, rho = meta["n"], meta["m"], meta["k"], meta["rho"]
    C = conf.get("C", 1.0)

    encoder = {"topk": descent.MODE_TOPK, "threshold": descent.MODE_THRESHOLD}[
        args.encoder or conf.get("encoder", "topk")
    ]
    resample = args.resample or conf.get("resample", descent.RESAMPLE_FIXED_POOL)
    eta = conf.get("eta", 0.0) or descent.default_eta(n, m, k, rho)
    dcfg = descent.DescentConfig(
        eta=eta,
        steps=conf.get("steps", 50),
        threshold_mode=encoder,
        samples_per_step=conf.get("samples_per_step", 0) or meta["p"],
        resample=resample,
    )
    if resample == descent.RESAMPLE_FRESH:
        # fresh sampling on synthetic data regenerates from the stored truth
        a_star = load_matrix(out / A_STAR_FILE)
        model = _model_from_config(conf, rho)
        data = genmodel.sample_stream(model, a_star, rng)
    else:
        data = partials
    a_hat, trace = descent.run_descent(a0, dcfg, data, rho, k, C, rng=rng)
    save_matrix(out / LEARNED_FILE, a_hat)
    trace.write_csv(out / TRACE_FILE)
    print(f"wrote {LEARNED_FILE} and {TRACE_FILE} after {dcfg.steps} steps")
    return 0


def _cmd_eval(args) -> int:
    a_hat = load_matrix(args.est)
    a_star = load_matrix(args.truth)
    print(EVAL_CSV_HEADER)
    print(eval_csv_row(a_hat, a_star, args.tau))
    return 0


def _cmd_sweep(args) -> int:
    conf = read_config(args.config)
    cfg = build_experiment_config(conf, args)
    result = harness.run_sweep(cfg, out_dir=args.out_dir, serial=args.serial)
    n_fail = sum(1 for r in result.records if r.reason)
    print(
        f"wrote sweep.csv and aggregate.csv to {args.out_dir} "
        f"({len(result.records)} trials, {n_fail} failed)"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partialdl",
        description="Dictionary learning from partially observed samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out-dir", default="out", help="artifact directory")
        p.add_argument("--p", type=int, default=None, help="partial sample count")
        p.add_argument("--rho", type=float, default=None, help="observation probability")

    gen = sub.add_parser("generate", help="synthesize A*, hold-out and partial datasets")
    common(gen)
    gen.set_defaults(func=_cmd_generate)

    ini = sub.add_parser("init", help="spectral initialization from generated datasets")
    common(ini)
    ini.set_defaults(func=_cmd_init)

    lrn = sub.add_parser("learn", help="descent refinement from A0")
    common(lrn)
    lrn.add_argument("--resample", choices=["fixed_pool", "fresh"], default=None)
    lrn.add_argument("--encoder", choices=["topk", "threshold"], default=None)
    lrn.set_defaults(func=_cmd_learn)

    ev = sub.add_parser("eval", help="score an estimate against the ground truth")
    ev.add_argument("--est", required=True, help="estimate matrix file")
    ev.add_argument("--truth", required=True, help="ground-truth matrix file")
    ev.add_argument("--tau", type=float, default=6.0, help="Frobenius recovery threshold")
    ev.set_defaults(func=_cmd_eval)

    sw = sub.add_parser("sweep", help="Monte Carlo sweep over the (p, rho) grid")
    common(sw)
    sw.add_argument("--trials", type=int, default=None)
    sw.add_argument("--serial", action="store_true", help="single-threaded, bit-reproducible")
    sw.add_argument("--resample", choices=["fixed_pool", "fresh"], default=None)
    sw.add_argument("--encoder", choices=["topk", "threshold"], default=None)
    sw.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:  # argparse exits 2 on usage errors already
        return int(err.code or 0)
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
