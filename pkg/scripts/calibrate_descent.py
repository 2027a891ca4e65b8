"""Calibration probe for the geometric-descent criterion: learning-rate
coefficient grid, encoder mode, per-step decay ratios and error floors."""

import sys

import numpy as np

from partialdl import ModelConfig, generate_dictionary
from partialdl.descent import (
    MODE_THRESHOLD,
    MODE_TOPK,
    RESAMPLE_FRESH,
    DescentConfig,
    run_descent,
)
from partialdl.genmodel import sample_stream


def perturb(a_star, delta, rng):
    n, m = a_star.shape
    theta = 2.0 * np.arcsin(delta / 2.0)
    g = rng.standard_normal((n, m))
    g -= a_star * np.sum(g * a_star, axis=0, keepdims=True)
    g /= np.linalg.norm(g, axis=0, keepdims=True)
    return np.cos(theta) * a_star + np.sin(theta) * g


def one_run(n, m, k, rho, delta0, coeff, mode, steps, p, seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(n=n, m=m, k=k, rho=rho)
    a_star = generate_dictionary(cfg, rng)
    a0 = perturb(a_star, delta0, rng)
    eta = coeff * m / (rho * k)
    dcfg = DescentConfig(
        eta=eta, steps=steps, threshold_mode=mode, samples_per_step=p, resample=RESAMPLE_FRESH
    )
    _, trace = run_descent(
        a0, dcfg, sample_stream(cfg, a_star, rng), rho, k, 1.0, rng=rng, a_star=a_star
    )
    errs = np.array([r.max_col_err for r in trace.rows])
    return errs, trace


def summarize(tag, errs_by_seed):
    errs = np.stack(errs_by_seed)  # (seeds, steps+1)
    final = errs[:, -1]
    floor = np.median(errs[:, -5:], axis=1)
    ratios = errs[:, 1:] / errs[:, :-1]
    med_ratio_early = float(np.median(ratios[:, :8]))
    dec1 = float(np.mean(errs[:, 1] < errs[:, 0]))
    print(
        f"  {tag}: final med={np.median(final):.4f} max={final.max():.4f} "
        f"floor med={np.median(floor):.4f} early-ratio med={med_ratio_early:.3f} "
        f"step1-decrease={dec1:.2f}"
    )
    return np.median(floor)


if __name__ == "__main__":
    seeds = list(range(8))
    steps, p = 25, 4096
    print("== eta coefficient grid at n=m=64 k=3 delta0=0.1 fresh p=4096 T=25 ==")
    for mode in (MODE_TOPK, MODE_THRESHOLD):
        for rho in (1.0, 0.8):
            for coeff in (0.125, 0.25, 0.5, 1.0):
                runs = [one_run(64, 64, 3, rho, 0.1, coeff, mode, steps, p, s)[0] for s in seeds]
                summarize(f"{mode} rho={rho} c={coeff}", runs)
    sys.stdout.flush()
    print("== floor scaling check: (k,n)=(3,64) vs (3,256), topk c=0.5, T=40 ==")
    for n in (64, 256):
        runs = [one_run(n, n, 3, 1.0, 0.1, 0.5, MODE_TOPK, 40, p, s)[0] for s in seeds[:5]]
        fl = summarize(f"n={n} rho=1.0", runs)
