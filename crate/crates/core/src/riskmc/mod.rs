//! Monte Carlo estimation of instability risk.

mod engine;
mod output;
mod sampler;
mod stats;

pub use engine::{
    evaluate_sample, run_monte_carlo, run_monte_carlo_with, Evaluation, McConfig, McResult, RiskMode, RiskSummary,
    SampleEvaluator, SampleRecord, SampleStatus,
};
pub use output::{summary_json, write_histogram_csv, write_samples_csv, SAMPLES_HEADER};
pub use sampler::{sample_fault, sample_rng, FaultDistributions, FaultSampler};
pub use stats::{convergence_check, fit_normal, histogram, Checkpoint, HistogramBin};
