"""Calibration probe for the spectral initialization: gap-test thresholds
(c1, c2) from labeled pairs, candidate-vector accuracy (dedup radius), and
end-to-end run_init success at the acceptance regime."""

import math
import time

import numpy as np

from partialdl import ModelConfig, generate_dictionary
from partialdl.genmodel import generate_batch, generate_code, synthesize_full
from partialdl.numerics import ConvergenceError, top_singular_pairs
from partialdl.spectral_init import InitConfig, InitIncomplete, run_init, weighted_covariance


def labeled_pairs(n, m, k, rho, p1, p2, n_pairs, seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(n=n, m=m, k=k, rho=rho)
    a_star = generate_dictionary(cfg, rng)
    hold_codes = [generate_code(cfg, rng) for _ in range(p1)]
    fulls = np.stack([synthesize_full(a_star, c) for c in hold_codes], axis=1)
    pool = generate_batch(cfg, a_star, p2, rng)
    y = np.stack([item.sample.values for item in pool], axis=1)

    rows = []
    for _ in range(n_pairs):
        ui, vi = rng.choice(p1, size=2, replace=False)
        su = set(hold_codes[ui].support.tolist())
        sv = set(hold_codes[vi].support.tolist())
        shared = sorted(su & sv)
        cov = weighted_covariance(fulls[:, ui], fulls[:, vi], y, rho)
        try:
            pairs = top_singular_pairs(cov, count=2, tol=1e-6, max_iters=5000, seed=7)
        except ConvergenceError:
            rows.append((len(shared), np.nan, np.nan, np.nan))
            continue
        d1, d2 = pairs[0].value, pairs[1].value
        if len(shared) == 1:
            atom = a_star[:, shared[0]]
            z = pairs[0].vector
            dist = min(np.linalg.norm(z - atom), np.linalg.norm(z + atom))
        else:
            dist = np.nan
        rows.append((len(shared), d1, d2, dist))
    return rows, a_star


def threshold_table(rows, n, m, k):
    rows = [r for r in rows if np.isfinite(r[1])]
    by = {}
    for ov, d1, d2, dist in rows:
        by.setdefault(min(ov, 2), []).append((d1, d2, dist))
    for ov in sorted(by):
        d1s = np.array([r[0] for r in by[ov]])
        d2s = np.array([r[1] for r in by[ov]])
        print(
            f"  overlap={ov}: count={len(d1s)} d1 q10/med/q90 = "
            f"{np.quantile(d1s, 0.1):.4f}/{np.median(d1s):.4f}/{np.quantile(d1s, 0.9):.4f}  "
            f"d2 = {np.quantile(d2s, 0.1):.4f}/{np.median(d2s):.4f}/{np.quantile(d2s, 0.9):.4f}"
        )
    dists = np.array([r[2] for r in by.get(1, []) if np.isfinite(r[2])])
    if dists.size:
        print(
            f"  shared-atom estimate dist: med={np.median(dists):.3f} "
            f"q90={np.quantile(dists, 0.9):.3f} max={dists.max():.3f}"
        )
    # grid-search thresholds in the spec parametrization
    logn = math.log(n)
    best = None
    for c1 in (0.2, 0.3, 0.4, 0.45, 0.5, 0.6, 0.8):
        for c2 in (0.5, 0.75, 1.0, 1.25, 1.5, 2.0):
            t1, t2 = c1 * k / m, c2 * k / (m * logn)
            if t1 <= t2:
                continue
            acc = [(ov, d1 >= t1 and d2 < t2) for ov, d1, d2, _ in rows]
            n_acc = sum(1 for _, a in acc if a)
            if n_acc == 0:
                continue
            false_acc = sum(1 for ov, a in acc if a and ov != 1) / n_acc
            true_rate = (
                sum(1 for ov, a in acc if a and ov == 1)
                / max(1, sum(1 for ov, _ in acc if ov == 1))
            )
            if false_acc < 0.05 and (best is None or true_rate > best[2]):
                best = (c1, c2, true_rate, false_acc)
    print(f"  best (c1, c2) = {best[:2]} true-accept={best[2]:.3f} false-accept={best[3]:.3f}")
    return best


def end_to_end(n, m, k, rho, p1, p2, max_trials, c1, c2, dedup, seeds):
    from partialdl.evaluation import hungarian_match
    from partialdl.numerics import spectral_norm

    ok = 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        cfg = ModelConfig(n=n, m=m, k=k, rho=rho)
        a_star = generate_dictionary(cfg, rng)
        fulls = np.stack(
            [synthesize_full(a_star, generate_code(cfg, rng)) for _ in range(p1)], axis=1
        )
        pool = generate_batch(cfg, a_star, p2, rng)
        icfg = InitConfig.for_model(
            n, m, k, p1=p1, p2=p2, max_pair_trials=max_trials, c1=c1, c2=c2, dedup_dist=dedup
        )
        report = []
        t0 = time.perf_counter()
        try:
            a0 = run_init(
                fulls,
                [item.sample for item in pool],
                icfg,
                rng,
                m,
                rho=rho,
                radius=2 * spectral_norm(a_star),
                report=report,
            )
        except InitIncomplete as err:
            print(
                f"  seed {seed}: INCOMPLETE {len(err.candidates)}/{m} "
                f"({time.perf_counter() - t0:.1f}s, {len(err.report)} trials)"
            )
            continue
        match = hungarian_match(a0, a_star)
        n_acc = sum(1 for r in report if r[5])
        good = match.max_err < 0.3
        ok += good
        print(
            f"  seed {seed}: trials={len(report)} accepted={n_acc} max_err={match.max_err:.3f} "
            f"med_err={np.median(match.per_column_err):.3f} ({time.perf_counter() - t0:.1f}s)"
            f" {'OK' if good else 'TOO FAR'}"
        )
    print(f"  success rate: {ok}/{len(seeds)}")


if __name__ == "__main__":
    print("== labeled pairs at acceptance regime n=m=64 k=3 rho=0.8 p1=1200 p2=3e4 ==")
    rows, _ = labeled_pairs(64, 64, 3, 0.8, 1200, 30_000, 1000, 0)
    best = threshold_table(rows, 64, 64, 3)
    print("== labeled pairs at rho=1.0 ==")
    rows1, _ = labeled_pairs(64, 64, 3, 1.0, 1200, 30_000, 1000, 1)
    threshold_table(rows1, 64, 64, 3)
    print(f"== end-to-end run_init, c1={best[0]} c2={best[1]}, dedup=0.6 ==")
    end_to_end(64, 64, 3, 0.8, 1200, 30_000, 3000, best[0], best[1], 0.6, range(6))
