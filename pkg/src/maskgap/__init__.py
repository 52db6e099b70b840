"""Desk-scale laboratory for grammar-constrained speculative decoding.

Measures, samples from, and corrects the gap between the locally projected
law of mask-and-renormalize decoding and the true grammar-conditional law,
using exact future-validity dynamic programming as the oracle.
"""

from .errors import (
    ConstraintViolationError,
    CoverageError,
    DegenerateGrammarError,
    EnumerationLimitError,
    EstimatorDegeneracyError,
    HorizonTooShortError,
    LengthCapError,
    MaskgapError,
    NonDegeneracyError,
    StateGraphLimitError,
)
from .estimators import (
    ExactTable,
    GatedHybrid,
    MonteCarlo,
    OneStepCheap,
    OneStepTrue,
    Uniform,
    ValidityEstimate,
    additive_error,
    estimate_future_validity,
    scorer_for,
    variation_guard,
)
from .grammar import (
    BudgetGrammar,
    DyckGrammar,
    Grammar,
    TrieGrammar,
    grammar_from_config,
    grammar_to_config,
)
from .laws import (
    BudgetGapReport,
    FutureValidityTable,
    TerminalLaw,
    budget_grouped_tv,
    conditional_law,
    future_validity_table,
    projected_law,
    reweighted_law,
)
from .metrics import (
    BoundReport,
    CostModelParams,
    StructuralStats,
    bootstrap_tv_ci,
    cost_model,
    empirical_law,
    fidelity_bounds,
    histogram_kl,
    hoeffding_radius,
    kl_identity_check,
    structural_stats,
    tv,
)
from .samplers import (
    AcceptStats,
    SpecConfig,
    StepKernel,
    ancestral_sample,
    equality_verifier_marginal,
    equality_verifier_step,
    local_mask_kernel,
    rejection_step,
    reweighted_kernel,
    speculative_decode,
)
from .schemas import finite_schema, schema_names
from .toylm import (
    BernoulliLm,
    BigramCharLm,
    SeededLogitLm,
    ShiftedLm,
    ToyLm,
    Vocab,
    binary_vocab,
    lm_from_config,
    lm_to_config,
)

__version__ = "0.1.0"
