"""Synthetic generative model: dictionaries, sparse codes, masked samples.

Every sample is ``y = P_Gamma(A* x*)`` where ``x*`` is a k-sparse code
with uniform random support and ``P_Gamma`` keeps each coordinate
independently with probability ``rho``.  All randomness flows through an
explicit ``numpy.random.Generator`` so Monte Carlo runs are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "ModelConfig",
    "SparseCode",
    "PartialSample",
    "LabeledSample",
    "generate_dictionary",
    "generate_code",
    "synthesize_full",
    "subsample",
    "generate_batch",
    "sample_stream",
    "values_matrix",
    "mask_matrix",
    "save_dataset",
    "load_dataset",
]

CODE_RADEMACHER = "rademacher"
CODE_UNIFORM_GAP = "uniform_gap"


@dataclass(frozen=True)
class ModelConfig:
    """Knobs of the generative model.

    ``code_dist`` is ``rademacher`` (nonzeros are +-1, the experimental
    default) or ``uniform_gap`` (magnitudes uniform on [C, 2C] with
    random sign; per-entry second moment is then 7C^2/3, not 1 -- the
    magnitude floor takes precedence over unit variance).
    """

    n: int
    m: int
    k: int
    rho: float
    code_dist: str = CODE_RADEMACHER
    C: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"n and m must be >= 1, got n={self.n}, m={self.m}")
        if not 1 <= self.k <= self.m:
            raise ValueError(f"k must satisfy 1 <= k <= m, got k={self.k}, m={self.m}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.code_dist == CODE_RADEMACHER and self.C != 1.0:
            raise ValueError("rademacher codes imply C = 1")
        if self.code_dist not in (CODE_RADEMACHER, CODE_UNIFORM_GAP):
            raise ValueError(f"unknown code_dist {self.code_dist!r}")


@dataclass(frozen=True)
class SparseCode:
    """A k-sparse code: ``values`` has length m and vanishes off ``support``."""

    support: np.ndarray  # sorted indices, shape (k,)
    values: np.ndarray  # dense, shape (m,)

    def signs(self) -> np.ndarray:
        return np.sign(self.values)


@dataclass(frozen=True)
class PartialSample:
    """An observed vector plus its observed-index set Gamma.

    ``values`` has length n and is exactly zero off ``observed``.
    """

    observed: np.ndarray  # sorted indices into [n]
    values: np.ndarray  # dense, shape (n,)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.values.shape[0], dtype=bool)
        out[self.observed] = True
        return out


class LabeledSample(NamedTuple):
    """A partial sample bundled with its ground-truth code.

    ``truth_code`` exists only so evaluators can score support and sign
    recovery; learning code must never read it.
    """

    sample: PartialSample
    truth_code: SparseCode


def generate_dictionary(cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """n x m matrix of i.i.d. standard normals with unit-norm columns."""
    a = rng.standard_normal((cfg.n, cfg.m))
    a /= np.linalg.norm(a, axis=0, keepdims=True)
    return a


def generate_code(cfg: ModelConfig, rng: np.random.Generator) -> SparseCode:
    """Sparse code with a uniform k-subset support.

    rademacher: nonzeros are +-1 with equal probability.
    uniform_gap: |value| uniform on [C, 2C], sign uniform.
    """
    support = np.sort(rng.choice(cfg.m, size=cfg.k, replace=False))
    signs = rng.integers(0, 2, size=cfg.k) * 2.0 - 1.0
    if cfg.code_dist == CODE_RADEMACHER:
        nonzeros = signs
    else:
        nonzeros = signs * rng.uniform(cfg.C, 2.0 * cfg.C, size=cfg.k)
    values = np.zeros(cfg.m)
    values[support] = nonzeros
    return SparseCode(support=support, values=values)


def synthesize_full(a_star: np.ndarray, code: SparseCode) -> np.ndarray:
    """The noiseless full sample ``A* x*``."""
    a_star = np.asarray(a_star, dtype=float)
    if a_star.ndim != 2 or a_star.shape[1] != code.values.shape[0]:
        raise ValueError(
            f"dictionary is {a_star.shape}, code has length {code.values.shape[0]}"
        )
    # restrict to the support: k dominates m in every regime we run
    return a_star[:, code.support] @ code.values[code.support]


def subsample(full: np.ndarray, rho: float, rng: np.random.Generator) -> PartialSample:
    """Keep each coordinate independently with probability rho, zero the rest."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    full = np.asarray(full, dtype=float)
    keep = rng.random(full.shape[0]) < rho
    return PartialSample(observed=np.flatnonzero(keep), values=np.where(keep, full, 0.0))


def generate_batch(
    cfg: ModelConfig, a_star: np.ndarray, p: int, rng: np.random.Generator
) -> list[LabeledSample]:
    """p independent (partial sample, truth code) pairs.

    The codes ride along for evaluation only; learners consume just the
    ``sample`` field.
    """
    out = []
    for _ in range(p):
        code = generate_code(cfg, rng)
        full = synthesize_full(a_star, code)
        out.append(LabeledSample(subsample(full, cfg.rho, rng), code))
    return out


def sample_stream(
    cfg: ModelConfig, a_star: np.ndarray, rng: np.random.Generator
) -> Callable[[int], list[LabeledSample]]:
    """A fresh-batch generator, as required by theory-faithful descent."""

    def draw(size: int) -> list[LabeledSample]:
        return generate_batch(cfg, a_star, size, rng)

    return draw


def _samples_of(batch) -> list[PartialSample]:
    return [item.sample if isinstance(item, LabeledSample) else item for item in batch]


def values_matrix(batch: Sequence) -> np.ndarray:
    """Stack sample values into an (n, p) matrix, one column per sample."""
    samples = _samples_of(batch)
    if not samples:
        raise ValueError("empty batch")
    return np.stack([s.values for s in samples], axis=1)


def mask_matrix(batch: Sequence) -> np.ndarray:
    """Stack observation masks into an (n, p) boolean matrix."""
    samples = _samples_of(batch)
    if not samples:
        raise ValueError("empty batch")
    n = samples[0].values.shape[0]
    out = np.zeros((n, len(samples)), dtype=bool)
    for j, s in enumerate(samples):
        out[s.observed, j] = True
    return out


def save_dataset(path, cfg: ModelConfig, batch: Sequence) -> None:
    """Dump partial samples as text.

    Header line is ``n m k rho p``; each sample contributes one line of
    observed indices and one line of the observed values (same order).
    """
    samples = _samples_of(batch)
    with open(path, "w") as fh:
        fh.write(f"{cfg.n} {cfg.m} {cfg.k} {format(cfg.rho, '.17g')} {len(samples)}\n")
        for s in samples:
            fh.write(" ".join(str(i) for i in s.observed) + "\n")
            fh.write(" ".join(format(v, ".17g") for v in s.values[s.observed]) + "\n")


def load_dataset(path) -> tuple[dict, list[PartialSample]]:
    """Read a dataset written by :func:`save_dataset`."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 5:
            raise ValueError(f"{path}: malformed dataset header {head!r}")
        meta = {
            "n": int(head[0]),
            "m": int(head[1]),
            "k": int(head[2]),
            "rho": float(head[3]),
            "p": int(head[4]),
        }
        samples = []
        for _ in range(meta["p"]):
            idx_line = fh.readline()
            val_line = fh.readline()
            if idx_line == "" or val_line == "":
                raise ValueError(f"{path}: truncated dataset")
            observed = np.array([int(t) for t in idx_line.split()], dtype=np.intp)
            vals = np.array([float(t) for t in val_line.split()])
            if observed.shape != vals.shape:
                raise ValueError(f"{path}: index/value length mismatch")
            values = np.zeros(meta["n"])
            values[observed] = vals
            samples.append(PartialSample(observed=observed, values=values))
    return meta, samples
