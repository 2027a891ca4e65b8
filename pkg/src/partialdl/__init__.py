"""Dictionary learning from partially observed samples.

The package splits into: dense linear-algebra kernels (``numerics``),
the synthetic generative model (``genmodel``), the thresholding-encoder
descent refinement (``descent``), the hold-out-based spectral
initialization (``spectral_init``), permutation/sign-aware evaluation
(``evaluation``) and the Monte Carlo sweep harness (``harness``, with a
CLI in ``cli``).
"""

from .descent import (
    DescentConfig,
    DescentTrace,
    approx_gradient,
    default_eta,
    descent_step,
    encode,
    run_descent,
)
from .evaluation import (
    MatchResult,
    democracy_check,
    hungarian_match,
    incoherence,
    nearness,
    recovery_success,
)
from .genmodel import (
    LabeledSample,
    ModelConfig,
    PartialSample,
    SparseCode,
    generate_batch,
    generate_code,
    generate_dictionary,
    subsample,
    synthesize_full,
)
from .harness import ExperimentConfig, SweepResult, TrialRecord, run_sweep, run_trial, trial_seed
from .numerics import (
    ConvergenceError,
    SingularPair,
    load_matrix,
    matmul,
    save_matrix,
    spectral_norm,
    top_singular_pairs,
)
from .spectral_init import (
    CandidateList,
    InitConfig,
    InitIncomplete,
    beta_estimate,
    dedup_insert,
    gap_test,
    project_to_ball,
    run_init,
    weighted_covariance,
)

__version__ = "0.1.0"
