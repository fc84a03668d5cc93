"""Toolkit for blind deterministic identification over block fading channels.

Receivers decide "was this message meant for me?" from a single received
block, with no channel state information: the identification codeword itself
doubles as the pilot.  The package provides QPSK codebook construction
(random and greedy Gilbert-Varshamov), the mse / two-look decoding metrics
with threshold calibration, analytical type-II error bounds from weight
spectra and noncentral chi-squared statistics, and a deterministic Monte
Carlo harness, plus a pilot-assisted-transmission composition with a
pluggable payload BLER model.
"""

from blindid.numerics import (
    QuadratureSpec,
    chi2_cdf,
    chi2_inv_cdf,
    noncentral_chi2_cdf,
    rayleigh_expectation,
    sample_complex_gaussian,
)
from blindid.codebook import (
    CodeConfig,
    Codebook,
    WeightSpectrum,
    ConstructionBudgetError,
    pair_level,
    normalized_pair_level,
    qpsk_to_complex,
    weight_spectrum,
    gv_level_cap,
    random_codebook,
    greedy_gv_codebook,
    check_pairwise,
)
from blindid.channel import (
    FadingModel,
    Rayleigh,
    FixedCoefficient,
    FixedMagnitudeUniformPhase,
    TruncatedRayleigh,
    ReceivedBlock,
    sample_fading,
    transmit,
)
from blindid.receiver import (
    ReceiverMetrics,
    DecodingRule,
    MseRule,
    TwoLookRule,
    CalibrationResult,
    CalibrationInfeasibleError,
    compute_metrics,
    compute_metrics_batch,
    mse_threshold,
    decide,
    calibrate_two_look,
)
from blindid.analysis import (
    ErrorBoundReport,
    fading_expectation,
    type2_rate_at_level,
    type2_rate_gv,
    type2_rate_spectrum_avg,
    pat_type1_bound,
    pat_type2_rate,
    build_error_report,
)
from blindid.montecarlo import (
    ExperimentPlan,
    RateEstimate,
    ErrorRates,
    confidence_interval,
    run_experiment,
    rates_csv_rows,
)
from blindid.pat import (
    BlerModel,
    TableBler,
    NormalApproxBler,
    ConstantBler,
    StepBler,
    PatResult,
    PatSweepPoint,
    bler_eval,
    load_bler_table,
    simulate_pat,
    pat_report,
)

__version__ = "0.1.0"

__all__ = [
    "QuadratureSpec",
    "chi2_cdf",
    "chi2_inv_cdf",
    "noncentral_chi2_cdf",
    "rayleigh_expectation",
    "sample_complex_gaussian",
    "CodeConfig",
    "Codebook",
    "WeightSpectrum",
    "ConstructionBudgetError",
    "pair_level",
    "normalized_pair_level",
    "qpsk_to_complex",
    "weight_spectrum",
    "gv_level_cap",
    "random_codebook",
    "greedy_gv_codebook",
    "check_pairwise",
    "FadingModel",
    "Rayleigh",
    "FixedCoefficient",
    "FixedMagnitudeUniformPhase",
    "TruncatedRayleigh",
    "ReceivedBlock",
    "sample_fading",
    "transmit",
    "ReceiverMetrics",
    "DecodingRule",
    "MseRule",
    "TwoLookRule",
    "CalibrationResult",
    "CalibrationInfeasibleError",
    "compute_metrics",
    "compute_metrics_batch",
    "mse_threshold",
    "decide",
    "calibrate_two_look",
    "ErrorBoundReport",
    "fading_expectation",
    "type2_rate_at_level",
    "type2_rate_gv",
    "type2_rate_spectrum_avg",
    "pat_type1_bound",
    "pat_type2_rate",
    "build_error_report",
    "ExperimentPlan",
    "RateEstimate",
    "ErrorRates",
    "confidence_interval",
    "run_experiment",
    "rates_csv_rows",
    "BlerModel",
    "TableBler",
    "NormalApproxBler",
    "ConstantBler",
    "StepBler",
    "PatResult",
    "PatSweepPoint",
    "bler_eval",
    "load_bler_table",
    "simulate_pat",
    "pat_report",
]
