"""Ground-truth comparison and model-property audits.

Dictionary estimates are only identifiable up to a column permutation
and per-column sign flips, so all error metrics first solve a linear
assignment problem with cost ``min(||Ah_j - A*_i||^2, ||Ah_j + A*_i||^2)``.
Squared distances make the Frobenius criterion decompose exactly over
matched columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import spectral_norm

__all__ = [
    "MatchResult",
    "hungarian_match",
    "recovery_success",
    "incoherence",
    "democracy_check",
    "nearness",
    "EVAL_CSV_HEADER",
    "eval_csv_row",
]

EVAL_CSV_HEADER = "delta,kappa,frob_err,success,mu,democracy_mu"


@dataclass(frozen=True)
class MatchResult:
    """Optimal alignment of an estimate to the ground truth.

    ``permutation[i]`` is the estimate column matched to truth column i,
    ``signs[i]`` the sign applied to it.  ``frob_err`` is the Frobenius
    norm of the aligned difference and ``max_err`` the worst column.
    """

    permutation: np.ndarray
    signs: np.ndarray
    per_column_err: np.ndarray
    frob_err: float
    max_err: float

    def aligned(self, a_hat: np.ndarray) -> np.ndarray:
        """Apply the matched permutation and signs to the estimate."""
        return a_hat[:, self.permutation] * self.signs


def _solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square cost matrix.

    Shortest-augmenting-path algorithm with dual potentials, O(m^3).
    Returns ``col[i]`` = column assigned to row i.
    """
    n = cost.shape[0]
    u = np.zeros(n)  # row potentials
    v = np.zeros(n + 1)  # column potentials, incl. the virtual start column n
    assigned_row = np.full(n + 1, -1, dtype=np.intp)  # per column; -1 = free
    way = np.zeros(n, dtype=np.intp)  # predecessor column on the alternating path

    for i in range(n):
        assigned_row[n] = i
        j0 = n
        minv = np.full(n, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = assigned_row[j0]
            cur = cost[i0] - u[i0] - v[:n]
            better = ~used[:n] & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            reachable = np.where(used[:n], np.inf, minv)
            j1 = int(np.argmin(reachable))
            delta = reachable[j1]
            used_cols = np.flatnonzero(used)
            u[assigned_row[used_cols]] += delta
            v[used_cols] -= delta
            minv[~used[:n]] -= delta
            j0 = j1
            if assigned_row[j0] < 0:
                break
        while j0 != n:  # augment along the path back to the virtual column
            j1 = way[j0]
            assigned_row[j0] = assigned_row[j1]
            j0 = j1

    col_of_row = np.empty(n, dtype=np.intp)
    col_of_row[assigned_row[:n]] = np.arange(n)
    return col_of_row


def hungarian_match(a_hat: np.ndarray, a_star: np.ndarray) -> MatchResult:
    """Optimal column/sign matching between an estimate and the truth."""
    a_hat = np.asarray(a_hat, dtype=float)
    a_star = np.asarray(a_star, dtype=float)
    if a_hat.shape != a_star.shape:
        raise ValueError(f"shape mismatch: estimate {a_hat.shape} vs truth {a_star.shape}")
    if not (np.all(np.isfinite(a_hat)) and np.all(np.isfinite(a_star))):
        raise ValueError("matching needs finite matrices (did the iterate diverge?)")
    m = a_star.shape[1]

    # cost(i, j) = min over sign of ||Ah_j -+ A*_i||^2, via the Gram trick
    hh = np.sum(a_hat * a_hat, axis=0)
    ss = np.sum(a_star * a_star, axis=0)
    cross = a_star.T @ a_hat  # (truth i, estimate j)
    base = ss[:, None] + hh[None, :]
    cost = base - 2.0 * np.abs(cross)

    pi = _solve_assignment(cost)
    picked = cross[np.arange(m), pi]
    signs = np.where(picked >= 0.0, 1.0, -1.0)  # tie (zero cross term) goes to +1
    diff = a_hat[:, pi] * signs - a_star
    per_col = np.linalg.norm(diff, axis=0)
    return MatchResult(
        permutation=pi,
        signs=signs,
        per_column_err=per_col,
        frob_err=float(np.sqrt(np.sum(per_col**2))),
        max_err=float(per_col.max()),
    )


def recovery_success(match: MatchResult, tau: float) -> bool:
    """True iff the aligned Frobenius error is strictly below tau."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return match.frob_err < tau


def _coherence(a: np.ndarray) -> float:
    """Max normalized inner product over distinct column pairs."""
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise ValueError("matrix has a zero column")
    g = (a / norms).T @ (a / norms)
    np.fill_diagonal(g, 0.0)
    return float(np.abs(g).max()) if a.shape[1] > 1 else 0.0


def incoherence(a: np.ndarray) -> float:
    """The sqrt(n)-scaled coherence ``mu`` of the columns of ``a``."""
    a = np.asarray(a, dtype=float)
    return math.sqrt(a.shape[0]) * _coherence(a)


def democracy_check(
    a: np.ndarray, trials: int, gamma_size: int, rng: np.random.Generator
) -> float:
    """Worst incoherence over random row restrictions of the given size.

    A randomized audit of the democracy property -- exhaustive
    enumeration of row subsets is infeasible.  The scale factor stays
    sqrt(n) with the *ambient* n, matching how sub-dictionary coherence
    enters every bound downstream, so ``gamma_size == n`` reproduces
    :func:`incoherence` exactly.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if gamma_size * gamma_size < n or gamma_size > n:
        raise ValueError(f"gamma_size must lie in [sqrt(n), n], got {gamma_size} for n={n}")
    worst = 0.0
    for _ in range(trials):
        rows = rng.choice(n, size=gamma_size, replace=False)
        worst = max(worst, _coherence(a[rows]))
    return math.sqrt(n) * worst


def nearness(a: np.ndarray, a_star: np.ndarray) -> tuple[float, float]:
    """The (delta, kappa) pair: worst aligned column error and the
    spectral-norm ratio ||A_aligned - A*|| / ||A*||."""
    match = hungarian_match(a, a_star)
    diff = match.aligned(np.asarray(a, dtype=float)) - np.asarray(a_star, dtype=float)
    if not diff.any():
        return match.max_err, 0.0
    return match.max_err, spectral_norm(diff) / spectral_norm(np.asarray(a_star, dtype=float))


def eval_csv_row(
    a_hat: np.ndarray,
    a_star: np.ndarray,
    tau: float,
    democracy_trials: int = 200,
    rng: np.random.Generator | None = None,
) -> str:
    """One evaluation-report CSV row (see ``EVAL_CSV_HEADER``)."""
    match = hungarian_match(a_hat, a_star)
    delta, kappa = nearness(a_hat, a_star)
    mu = incoherence(a_hat)
    n = a_hat.shape[0]
    gamma = max(int(math.ceil(math.sqrt(n))), min(n, n // 2))
    rng = rng if rng is not None else np.random.default_rng(0)
    demo = democracy_check(a_hat, democracy_trials, gamma, rng)
    success = int(recovery_success(match, tau))
    fields = [delta, kappa, match.frob_err]
    return ",".join(repr(float(x)) for x in fields) + f",{success}," + ",".join(
        repr(float(x)) for x in (mu, demo)
    )
