//! Sample evaluation and the Monte Carlo driver.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{sample_rng, FaultDistributions, FaultSampler};
use super::stats::{convergence_check, fit_normal, Checkpoint};
use crate::dynsim::{init_dynamics, DynamicModel, FaultEvent, SimOptions};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_trajectory, MetricsConfig, Severities};
use crate::netmodel::PowerSystemCase;
use crate::powerflow::{solve_power_flow_with, PowerFlowOptions, PowerFlowSolution};

/// How per-sample severities enter the risk means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMode {
    /// Plain average: the sampler already draws faults by probability.
    #[default]
    Sampled,
    /// Each severity is multiplied by the probability of its fault.
    Weighted,
}

impl fmt::Display for RiskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskMode::Sampled => "sampled",
            RiskMode::Weighted => "weighted",
        })
    }
}

impl std::str::FromStr for RiskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(RiskMode::Sampled),
            "weighted" => Ok(RiskMode::Weighted),
            _ => Err(Error::InvalidArgument(format!("unknown risk mode '{s}' (expected sampled or weighted)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_max: usize,
    pub seed: u64,
    pub risk_mode: RiskMode,
    /// Samples between recorded checkpoints.
    pub checkpoint_interval: usize,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    /// Stop as soon as the convergence check passes.
    pub stop_on_convergence: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Largest tolerated fraction of failed samples.
    pub max_failure_rate: f64,
    pub sim: SimOptions,
    pub metrics: MetricsConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_max: 30_000,
            seed: 1,
            risk_mode: RiskMode::Sampled,
            checkpoint_interval: 1000,
            convergence_window: 5000,
            convergence_threshold: 0.005,
            stop_on_convergence: true,
            workers: 0,
            max_failure_rate: 0.001,
            sim: SimOptions::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStatus {
    Completed,
    Diverged,
    Failed,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Completed => "completed",
            SampleStatus::Diverged => "diverged",
            SampleStatus::Failed => "failed",
        }
    }
}

/// Outcome of simulating one fault.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub severities: Severities,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub fault: FaultEvent,
    pub sev_a: f64,
    pub sev_v: f64,
    pub sev_f: f64,
    pub g_sample: f64,
    pub pr_fault: f64,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SampleRecord {
    fn from_result(sample_id: u64, fault: FaultEvent, pr_fault: f64, result: Result<Evaluation>) -> Self {
        match result {
            Ok(e) => SampleRecord {
                sample_id,
                fault,
                sev_a: e.severities.sev_a,
                sev_v: e.severities.sev_v,
                sev_f: e.severities.sev_f,
                g_sample: e.severities.g(),
                pr_fault,
                status: if e.diverged { SampleStatus::Diverged } else { SampleStatus::Completed },
                failure: None,
            },
            Err(err) => SampleRecord {
                sample_id,
                fault,
                sev_a: 0.0,
                sev_v: 0.0,
                sev_f: 0.0,
                g_sample: 0.0,
                pr_fault,
                status: SampleStatus::Failed,
                failure: Some(err.to_string()),
            },
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == SampleStatus::Failed
    }
}

/// Simulates faults on one initialized operating point.
#[derive(Debug, Clone)]
pub struct SampleEvaluator {
    model: DynamicModel,
    pub sim: SimOptions,
    pub metrics: MetricsConfig,
}

impl SampleEvaluator {
    pub fn new(case: &PowerSystemCase, pf: &PowerFlowSolution, sim: SimOptions, metrics: MetricsConfig) -> Result<Self> {
        Ok(Self { model: init_dynamics(case, pf)?, sim, metrics })
    }

    pub fn model(&self) -> &DynamicModel {
        &self.model
    }

    pub fn evaluate(&self, fault: &FaultEvent) -> Result<Evaluation> {
        let tr = self.model.simulate(Some(fault), &self.sim)?;
        let m = evaluate_trajectory(&tr, &self.metrics)?;
        Ok(Evaluation { severities: m.severities(), diverged: tr.termination.is_diverged() })
    }
}

/// Simulates one fault with default settings and scores it.
pub fn evaluate_sample(case: &PowerSystemCase, pf: &PowerFlowSolution, fault: &FaultEvent) -> SampleRecord {
    let result = SampleEvaluator::new(case, pf, SimOptions::default(), MetricsConfig::default())
        .and_then(|ev| ev.evaluate(fault));
    let n_lines = case.fault_eligible_lines().len().max(1) as f64;
    let pr = 0.01 / n_lines * FaultDistributions::default().type_probability(fault.fault_type);
    SampleRecord::from_result(0, *fault, pr, result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    /// Samples entering the means.
    pub n: usize,
    pub n_attempted: usize,
    pub n_failed: usize,
    pub r_am: f64,
    pub r_vm: f64,
    pub r_fm: f64,
    /// Largest of the three means.
    pub g: f64,
    /// Normal fit of the per-sample global values.
    pub g_sample_mean: f64,
    pub g_sample_std: f64,
    pub converged: bool,
    pub history: Vec<Checkpoint>,
    pub seed: u64,
    pub risk_mode: RiskMode,
    pub n_max: usize,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub summary: RiskSummary,
    pub records: Vec<SampleRecord>,
}

/// Runs the Monte Carlo loop with an arbitrary severity function.
///
/// Sample `i` always uses stream `i` of the seed, and results are reduced
/// in index order, so output does not depend on the worker count.
pub fn run_monte_carlo_with<E>(sampler: &FaultSampler, cfg: &McConfig, evaluate: E) -> Result<McResult>
where
    E: Fn(&FaultEvent) -> Result<Evaluation> + Sync,
{
    if cfg.n_max == 0 {
        return Err(Error::InvalidArgument("sample budget must be positive".into()));
    }
    let interval = cfg.checkpoint_interval.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::MonteCarlo(format!("worker pool: {e}")))?;

    let mut records = Vec::with_capacity(cfg.n_max);
    let mut history = Vec::new();
    let (mut sa, mut sv, mut sf) = (0.0, 0.0, 0.0);
    let mut ok = 0usize;
    let mut converged = false;
    let mut start = 0;
    while start < cfg.n_max {
        let end = (start + interval).min(cfg.n_max);
        let batch: Vec<SampleRecord> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let fault = sampler.sample(&mut sample_rng(cfg.seed, i as u64));
                    let pr = sampler.probability(&fault);
                    SampleRecord::from_result(i as u64, fault, pr, evaluate(&fault))
                })
                .collect()
        });
        for r in batch {
            if r.is_failed() {
                log::warn!("sample {} failed: {}", r.sample_id, r.failure.as_deref().unwrap_or("unknown"));
            } else {
                let w = match cfg.risk_mode {
                    RiskMode::Sampled => 1.0,
                    RiskMode::Weighted => r.pr_fault,
                };
                sa += w * r.sev_a;
                sv += w * r.sev_v;
                sf += w * r.sev_f;
                ok += 1;
            }
            records.push(r);
        }
        let denom = ok.max(1) as f64;
        history.push(Checkpoint { n: end, r_am: sa / denom, r_vm: sv / denom, r_fm: sf / denom });
        log::info!("{end} samples: R_AM {:.4} R_VM {:.4} R_FM {:.4}", sa / denom, sv / denom, sf / denom);
        converged = convergence_check(&history, cfg.convergence_window, cfg.convergence_threshold);
        start = end;
        if converged && cfg.stop_on_convergence {
            break;
        }
    }

    let n_attempted = records.len();
    let n_failed = n_attempted - ok;
    if ok == 0 {
        return Err(Error::MonteCarlo(format!("all {n_attempted} samples failed")));
    }
    let rate = n_failed as f64 / n_attempted as f64;
    if rate > cfg.max_failure_rate {
        return Err(Error::MonteCarlo(format!(
            "{n_failed} of {n_attempted} samples failed ({:.3}%), above the {:.3}% limit",
            100.0 * rate,
            100.0 * cfg.max_failure_rate
        )));
    }
    let g_values: Vec<f64> = records.iter().filter(|r| !r.is_failed()).map(|r| r.g_sample).collect();
    let (g_sample_mean, g_sample_std) = if g_values.len() >= 2 {
        fit_normal(&g_values)?
    } else {
        (g_values[0], 0.0)
    };
    let n = ok as f64;
    let (r_am, r_vm, r_fm) = (sa / n, sv / n, sf / n);
    let summary = RiskSummary {
        n: ok,
        n_attempted,
        n_failed,
        r_am,
        r_vm,
        r_fm,
        g: r_am.max(r_vm).max(r_fm),
        g_sample_mean,
        g_sample_std,
        converged,
        history,
        seed: cfg.seed,
        risk_mode: cfg.risk_mode,
        n_max: cfg.n_max,
        convergence_window: cfg.convergence_window,
        convergence_threshold: cfg.convergence_threshold,
    };
    Ok(McResult { summary, records })
}

/// Solves the operating point of `case` and estimates its risk indices.
pub fn run_monte_carlo(case: &PowerSystemCase, dist: &FaultDistributions, cfg: &McConfig) -> Result<McResult> {
    let pf = solve_power_flow_with(case, &PowerFlowOptions::default())?;
    let evaluator = SampleEvaluator::new(case, &pf, cfg.sim.clone(), cfg.metrics.clone())?;
    let sampler = FaultSampler::for_case(case, dist.clone())?;
    run_monte_carlo_with(&sampler, cfg, |f| evaluator.evaluate(f))
}
