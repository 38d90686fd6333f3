"""Differentially private causal skeleton discovery on categorical data."""

from .data import (
    BayesNetSpec,
    Blocks,
    DataError,
    Dataset,
    SubsampledDataset,
    builtin_network,
    forward_sample,
    load_csv,
    partition_blocks,
    random_network,
    subsample,
)
from .discovery import (
    DiscoveryConfig,
    RunReport,
    Skeleton,
    optimal_subsample_size,
    pc_skeleton,
    priv_pc,
    run_engine,
    svt_pc,
)
from .evaluation import MetricsRow, SweepSpec, bench, f1_score, run_sweep, verify_bounds
from .ledger import PrivacyLedger, advanced_composition
from .mechanisms import (
    AdmissibleNoise,
    SieveExamineConfig,
    amplified_epsilon,
    exponential_mechanism,
    monte_carlo_error_rates,
    one_off_sieve_and_examine,
    reconciled_test,
    sample_laplace,
    smooth_sensitivity_median,
    sparse_vector,
    type1_bound,
    type2_bound,
)
from .stats import (
    ScoreResult,
    SensitivityBound,
    TestKind,
    conditional_kendall_sensitivity,
    conditional_kendall_stat,
    conditional_spearman_sensitivity,
    conditional_spearman_stat,
    contingency_statistic,
    kendall_sensitivity_unconditional,
    kendall_tau,
    spearman_rho,
    spearman_sensitivity_unconditional,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleNoise",
    "BayesNetSpec",
    "Blocks",
    "DataError",
    "Dataset",
    "DiscoveryConfig",
    "MetricsRow",
    "PrivacyLedger",
    "RunReport",
    "ScoreResult",
    "SensitivityBound",
    "SieveExamineConfig",
    "Skeleton",
    "SubsampledDataset",
    "SweepSpec",
    "TestKind",
    "advanced_composition",
    "amplified_epsilon",
    "bench",
    "builtin_network",
    "conditional_kendall_sensitivity",
    "conditional_kendall_stat",
    "conditional_spearman_sensitivity",
    "conditional_spearman_stat",
    "contingency_statistic",
    "exponential_mechanism",
    "f1_score",
    "forward_sample",
    "kendall_sensitivity_unconditional",
    "kendall_tau",
    "load_csv",
    "monte_carlo_error_rates",
    "one_off_sieve_and_examine",
    "optimal_subsample_size",
    "partition_blocks",
    "pc_skeleton",
    "priv_pc",
    "random_network",
    "reconciled_test",
    "run_engine",
    "run_sweep",
    "sample_laplace",
    "smooth_sensitivity_median",
    "sparse_vector",
    "spearman_rho",
    "spearman_sensitivity_unconditional",
    "subsample",
    "svt_pc",
    "type1_bound",
    "type2_bound",
    "verify_bounds",
]
