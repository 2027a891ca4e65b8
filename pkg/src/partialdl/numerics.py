"""Dense linear algebra kernels shared by the whole package.

Matrices are plain 2-D float64 ``numpy`` arrays.  Singular pairs are
computed by power iteration on the Gram operator ``M M^T`` with a
deterministic start vector, which is all the rest of the package needs
(the initialization stage only ever looks at the top two singular
values).  The second pair is obtained by deflation, so its accuracy
degrades when the top two values are nearly equal; callers that gate on
a large singular gap are unaffected.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "SingularPair",
    "ConvergenceError",
    "matmul",
    "top_singular_pairs",
    "spectral_norm",
    "save_matrix",
    "load_matrix",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 5000


class SingularPair(NamedTuple):
    value: float
    vector: np.ndarray  # unit-norm left singular vector, length = rows


class ConvergenceError(RuntimeError):
    """Power iteration failed to converge within the iteration budget.

    Carries the last iterate (unit vector) and the last residual norm so
    callers can decide whether the partial answer is usable.
    """

    def __init__(self, message: str, iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D array with positive shape, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit dimension validation."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix product overflowed to non-finite values")
    return out


def _power_iterate(apply_op, start: np.ndarray, tol: float, max_iters: int, scale: float):
    """Dominant eigenpair of a PSD operator by plain power iteration.

    Stops when the residual ||Gv - lam v|| drops below ``tol * lam``, or
    when both the Rayleigh quotient and the residual are negligible
    relative to ``scale`` (the eigenvalue is numerically zero, e.g. after
    deflating a rank-1 matrix).
    """
    v = start / np.linalg.norm(start)
    zero_floor = 64.0 * start.size * np.finfo(float).eps * scale
    lam = 0.0
    res = np.inf
    for _ in range(max_iters):
        w = apply_op(v)
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        if lam > zero_floor and res <= tol * lam:
            return lam, v, res
        if lam <= zero_floor and res <= zero_floor:
            return max(lam, 0.0), v, res
        wn = float(np.linalg.norm(w))
        if wn == 0.0:  # exact kernel vector: (0, v) is an eigenpair of a PSD operator
            return 0.0, v, 0.0
        v = w / wn
    raise ConvergenceError(
        f"power iteration did not reach tol={tol} in {max_iters} iterations "
        f"(last residual {res:.3e})",
        iterate=v,
        residual=res,
    )


def top_singular_pairs(
    m: np.ndarray,
    count: int = 1,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
) -> list[SingularPair]:
    """Top ``count`` singular values of ``m`` with their left singular vectors.

    Power iteration runs on the symmetrized operator ``G = m m^T``; the
    second pair is found on the deflated operator ``G - lam1 z z^T``.
    The start vector is drawn from ``seed`` so repeated calls are
    bit-reproducible.  Raises :class:`ConvergenceError` if the residual
    tolerance is not met within ``max_iters``.
    """
    m = _as_matrix(m)
    if count not in (1, 2):
        raise ValueError(f"count must be 1 or 2, got {count}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not m.any():
        raise ValueError("matrix must be nonzero")

    gram = m @ m.T
    scale = float(np.linalg.norm(gram))  # Frobenius; >= top eigenvalue
    start = np.random.default_rng(seed).standard_normal(m.shape[0])

    lam1, z1, _ = _power_iterate(lambda v: gram @ v, start, tol, max_iters, scale)
    pairs = [SingularPair(float(np.sqrt(max(lam1, 0.0))), z1)]
    if count == 2:
        start2 = np.random.default_rng(seed + 1).standard_normal(m.shape[0])
        start2 -= z1 * (z1 @ start2)
        if not start2.any():  # pathological start exactly parallel to z1
            start2 = np.random.default_rng(seed + 2).standard_normal(m.shape[0])
        deflated = lambda v: gram @ v - lam1 * z1 * (z1 @ v)
        lam2, z2, _ = _power_iterate(deflated, start2, tol, max_iters, max(lam1, scale))
        pairs.append(SingularPair(float(np.sqrt(max(lam2, 0.0))), z2))
    return pairs


def spectral_norm(m: np.ndarray, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Largest singular value to relative ``tol``; 0.0 for the zero matrix."""
    m = _as_matrix(m)
    if not m.any():
        return 0.0
    return top_singular_pairs(m, count=1, tol=tol, max_iters=max_iters)[0].value


def save_matrix(path, a: np.ndarray) -> None:
    """Write a matrix in the package text format.

    First line is ``rows cols``; each following line is one row of
    whitespace-separated decimals with 17 significant digits (lossless
    for float64).
    """
    a = _as_matrix(a)
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed matrix header {header!r}")
        rows, cols = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (rows, cols):
        raise ValueError(f"{path}: header says {rows}x{cols}, body is {data.shape}")
    return _as_matrix(data)
