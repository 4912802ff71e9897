"""Divergence-based two-sample tests on finite alphabets."""
from __future__ import annotations

from .asymptotics import (
    KktSolution,
    Prediction,
    RoundedPair,
    bhattacharyya,
    ell_linear,
    ell_star_numeric,
    glrt_statistic,
    kkt_minimizer,
    kl_variance,
    nearest_type_pair,
    p_star,
    predict_neg_log_beta,
    prediction,
    robust_gof_numeric,
    robust_gof_statistic,
    threshold_asymptotic,
)
from .divergence import (
    CHI2,
    JS,
    KL,
    SQL2,
    DivergenceSpec,
    FGenerator,
    common_invariance_constant,
    evaluate,
    invariance_constant,
    local_eigenvalues,
    local_matrix,
    parse_divergence,
    sigma_matrix,
    weight_eigenvalues,
)
from .exact import (
    BudgetExceeded,
    ErrorReport,
    StatDistribution,
    calibrate_exact,
    error_report,
    exact_type1,
    exact_type2,
    lemma1_sup_gap_exact,
    statistic_distribution,
)
from .genchisq import (
    GenChiSq,
    chisq_inv_tail,
    chisq_tail,
    genchisq_cdf,
    genchisq_inv_tail,
    genchisq_sample,
    genchisq_tail,
)
from .montecarlo import McEstimate, mc_calibrate, mc_error, simulate_statistic, statistic_ecdf_gap
from .simplex import (
    Distribution,
    TypeDistribution,
    enumerate_types,
    log_type_class_prob,
    log_type_class_probs,
    make_distribution,
    num_types,
    read_sample,
    rng_stream,
    sample_iid,
    type_matrix,
    type_of_sample,
    write_sample,
)

__version__ = "0.1.0"
