"""Spectral initialization from a fully observed hold-out set.

Pairs (u, v) of hold-out samples re-weight the second moment of the
partial samples; when u and v share exactly one dictionary atom the top
singular vector of the re-weighted covariance isolates that atom, and a
large singular gap certifies the event.  Accepted vectors accumulate in
a sign-flip-aware deduplicated candidate list until one estimate per
atom has been collected, after which the assembled matrix is projected
to a spectral-norm ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .genmodel import PartialSample
from .numerics import ConvergenceError, SingularPair, spectral_norm, top_singular_pairs

__all__ = [
    "InitConfig",
    "CandidateList",
    "InitIncomplete",
    "weighted_covariance",
    "beta_estimate",
    "gap_test",
    "dedup_insert",
    "project_to_ball",
    "run_init",
    "INIT_REPORT_HEADER",
]

# Gap-test constants delta1_min = C1 * k/m and delta2_max = C2 * k/(m ln n),
# calibrated on labeled pairs with known shared-support size (see
# tests/test_spectral_init.py); at the calibrated values the false-accept
# rate of pairs not sharing exactly one atom stays below 5%.
C1_DEFAULT = 0.45
C2_DEFAULT = 1.0

# ||A*|| ~ A_NORM_COEFF * sqrt(m/n) for column-normalized Gaussian
# dictionaries (the Marchenko-Pastur edge gives 1 + sqrt(m/n), i.e. 2 in
# the square case); used when no ground-truth norm is available.
A_NORM_COEFF = 2.0

INIT_REPORT_HEADER = "trial,u_idx,v_idx,delta1,delta2,accepted,list_size"


@dataclass(frozen=True)
class InitConfig:
    p1: int  # hold-out (fully observed) sample count
    p2: int  # partial sample count, reused for every pair
    max_pair_trials: int
    delta1_min: float
    delta2_max: float
    dedup_dist: float

    def __post_init__(self):
        if self.p1 < 2:
            raise ValueError(f"p1 must be >= 2, got {self.p1}")
        if self.p2 < 1:
            raise ValueError(f"p2 must be >= 1, got {self.p2}")
        if self.max_pair_trials < 1:
            raise ValueError(f"max_pair_trials must be >= 1, got {self.max_pair_trials}")
        if not self.delta1_min > self.delta2_max > 0:
            raise ValueError(
                f"need delta1_min > delta2_max > 0, got {self.delta1_min}, {self.delta2_max}"
            )
        if not 0 < self.dedup_dist < 2:
            raise ValueError(f"dedup_dist must be in (0, 2), got {self.dedup_dist}")

    @classmethod
    def for_model(
        cls,
        n: int,
        m: int,
        k: int,
        *,
        p1: int,
        p2: int,
        max_pair_trials: int,
        c1: float = C1_DEFAULT,
        c2: float = C2_DEFAULT,
        dedup_dist: float | None = None,
    ) -> "InitConfig":
        """Thresholds from the model shape: c1*k/m and c2*k/(m ln n).

        The default dedup radius is 1/ln(n).
        """
        return cls(
            p1=p1,
            p2=p2,
            max_pair_trials=max_pair_trials,
            delta1_min=c1 * k / m,
            delta2_max=c2 * k / (m * math.log(n)),
            dedup_dist=dedup_dist if dedup_dist is not None else 1.0 / math.log(n),
        )


@dataclass
class CandidateList:
    """Unit vectors kept pairwise separated modulo sign flips."""

    vectors: list[np.ndarray] = field(default_factory=list)
    provenance: list[tuple[int, int, float, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.vectors)

    def matrix(self, n: int) -> np.ndarray:
        if not self.vectors:
            return np.zeros((n, 0))
        return np.stack(self.vectors, axis=1)


class InitIncomplete(RuntimeError):
    """The pair-trial budget ran out before one estimate per atom was found.

    Carries the partial candidate list and the per-trial report so the
    caller can retry with a larger budget or looser thresholds.
    """

    def __init__(self, message: str, candidates: CandidateList, report: list[tuple]):
        super().__init__(message)
        self.candidates = candidates
        self.report = report


def _columns(vectors, name: str) -> np.ndarray:
    """Accept a list of 1-d vectors or an (n, p) array; return (n, p)."""
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return np.asarray(vectors, dtype=float)
    cols = [np.asarray(v, dtype=float) for v in vectors]
    if not cols:
        raise ValueError(f"{name} is empty")
    return np.stack(cols, axis=1)


def _partial_values(partials) -> np.ndarray:
    if isinstance(partials, np.ndarray) and partials.ndim == 2:
        return np.asarray(partials, dtype=float)
    vals = []
    for s in partials:
        vals.append(s.values if isinstance(s, PartialSample) else np.asarray(s, dtype=float))
    if not vals:
        raise ValueError("empty partial-sample pool")
    return np.stack(vals, axis=1)


def weighted_covariance(u: np.ndarray, v: np.ndarray, partials, rho: float) -> np.ndarray:
    """The empirical re-weighted covariance
    ``(1/(p rho^4)) sum <y,u><y,v> y y^T``, exactly symmetric."""
    y = _partial_values(partials)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (y.shape[0],) or v.shape != (y.shape[0],):
        raise ValueError(f"u, v must have length {y.shape[0]}")
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    w = (y.T @ u) * (y.T @ v)
    m = (y * w) @ y.T / (y.shape[1] * rho**4)
    return (m + m.T) / 2.0


def beta_estimate(u: np.ndarray, a_star: np.ndarray, gamma: np.ndarray, rho: float) -> np.ndarray:
    """Crude code estimate ``(1/rho) (A*_Gamma)^T u`` used by the oracle tests."""
    a_star = np.asarray(a_star, dtype=float)
    u = np.asarray(u, dtype=float)
    masked = np.zeros_like(a_star)
    gamma = np.asarray(gamma, dtype=np.intp)
    masked[gamma] = a_star[gamma]
    return masked.T @ u / rho


def gap_test(pairs: list[SingularPair], cfg: InitConfig) -> bool:
    """True iff delta1 clears the floor and delta2 stays under the cap."""
    if len(pairs) < 2:
        raise ValueError("gap test needs the top two singular pairs")
    return pairs[0].value >= cfg.delta1_min and pairs[1].value < cfg.delta2_max


def dedup_insert(candidates: CandidateList, z: np.ndarray, dist: float) -> bool:
    """Insert z unless it is within ``dist`` of a kept vector, up to sign."""
    z = np.asarray(z, dtype=float)
    nrm = np.linalg.norm(z)
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError(f"candidate must be unit norm, got ||z|| = {nrm}")
    for other in candidates.vectors:
        if min(np.linalg.norm(z - other), np.linalg.norm(z + other)) < dist:
            return False
    candidates.vectors.append(z)
    return True


def project_to_ball(a: np.ndarray, radius: float, tol: float = 1e-8) -> np.ndarray:
    """Scale ``a`` down onto the spectral-norm ball of the given radius."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    a = np.asarray(a, dtype=float)
    norm = spectral_norm(a, tol=tol) if a.any() else 0.0
    if norm <= radius:
        return a
    return a * (radius / norm)


def run_init(
    fulls,
    partials,
    cfg: InitConfig,
    rng: np.random.Generator,
    m: int,
    *,
    rho: float,
    radius: float | None = None,
    report: list | None = None,
    power_tol: float = 1e-6,
    power_max_iters: int = 5000,
) -> np.ndarray:
    """Collect one spectral estimate per dictionary atom and assemble A0.

    Random hold-out pairs are tried until the candidate list holds ``m``
    vectors or ``cfg.max_pair_trials`` is exhausted (which raises
    :class:`InitIncomplete` carrying the partial list).  A pair whose
    covariance defeats the power iteration is simply rejected -- the gap
    test could not have certified it anyway.  ``radius`` defaults to the
    dictionary-norm bound ``2 * A_NORM_COEFF * sqrt(m/n)`` when no
    ground-truth spectral norm is supplied.  Appends
    ``(trial, u_idx, v_idx, delta1, delta2, accepted, list_size)`` rows
    to ``report`` when given.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    u_cols = _columns(fulls, "fulls")
    y = _partial_values(partials)
    n = y.shape[0]
    if u_cols.shape[0] != n:
        raise ValueError(f"hold-out samples have length {u_cols.shape[0]}, partials {n}")
    if u_cols.shape[1] != cfg.p1:
        raise ValueError(f"config says p1={cfg.p1} but {u_cols.shape[1]} fulls given")
    if y.shape[1] != cfg.p2:
        raise ValueError(f"config says p2={cfg.p2} but {y.shape[1]} partials given")

    if m == 0:
        return np.zeros((n, 0))

    power_seed = int(rng.integers(2**32))
    candidates = CandidateList()
    rows = report if report is not None else []
    scale = 1.0 / (y.shape[1] * rho**4)

    for trial in range(cfg.max_pair_trials):
        if len(candidates) >= m:
            break
        ui, vi = (int(i) for i in rng.choice(cfg.p1, size=2, replace=False))
        w = (y.T @ u_cols[:, ui]) * (y.T @ u_cols[:, vi])
        cov = (y * w) @ y.T * scale
        cov = (cov + cov.T) / 2.0
        try:
            pairs = top_singular_pairs(
                cov, count=2, tol=power_tol, max_iters=power_max_iters, seed=power_seed
            )
        except (ConvergenceError, ValueError):
            # degenerate or all-zero covariance: nothing certifiable here
            rows.append((trial, ui, vi, float("nan"), float("nan"), False, len(candidates)))
            continue
        accepted = gap_test(pairs, cfg)
        if accepted:
            z = pairs[0].vector / np.linalg.norm(pairs[0].vector)
            if dedup_insert(candidates, z, cfg.dedup_dist):
                candidates.provenance.append((ui, vi, pairs[0].value, pairs[1].value))
        rows.append((trial, ui, vi, pairs[0].value, pairs[1].value, accepted, len(candidates)))

    if len(candidates) < m:
        raise InitIncomplete(
            f"collected {len(candidates)}/{m} atoms in {cfg.max_pair_trials} pair trials",
            candidates,
            rows,
        )

    assembled = candidates.matrix(n)
    if radius is None:
        radius = 2.0 * A_NORM_COEFF * math.sqrt(m / n)
    return project_to_ball(assembled, radius)
