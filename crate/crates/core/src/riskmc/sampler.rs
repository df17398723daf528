//! Fault scenario sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynsim::{FaultEvent, FaultType};
use crate::error::{Error, Result};
use crate::netmodel::{BranchId, PowerSystemCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultDistributions {
    /// Probabilities of LLL, LLG, LL and LG, in that order.
    pub type_probabilities: [f64; 4],
    pub fct_mean_s: f64,
    pub fct_std_s: f64,
    /// Clearing times beyond this many standard deviations are redrawn.
    pub fct_truncation_sigma: f64,
    pub t_apply_s: f64,
    pub trip_line: bool,
}

impl Default for FaultDistributions {
    fn default() -> Self {
        Self {
            type_probabilities: [0.05, 0.10, 0.15, 0.70],
            fct_mean_s: 0.2,
            fct_std_s: 0.005,
            fct_truncation_sigma: 4.0,
            t_apply_s: 1.0,
            trip_line: true,
        }
    }
}

impl FaultDistributions {
    pub fn type_probability(&self, t: FaultType) -> f64 {
        self.type_probabilities[FaultType::ALL.iter().position(|x| *x == t).unwrap_or(0)]
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.type_probabilities;
        if p.iter().any(|x| x.is_nan() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "fault type probabilities must be non-negative and sum to 1, got {p:?}"
            )));
        }
        if [self.fct_std_s, self.fct_truncation_sigma].iter().any(|x| x.is_nan() || *x <= 0.0) {
            return Err(Error::InvalidArgument("clearing-time spread must be positive".into()));
        }
        if self.fct_mean_s - self.fct_truncation_sigma * self.fct_std_s <= 0.0 {
            return Err(Error::InvalidArgument(
                "clearing-time distribution must stay positive over its truncated support".into(),
            ));
        }
        if self.t_apply_s.is_nan() || self.t_apply_s < 0.0 {
            return Err(Error::InvalidArgument("fault application time must be non-negative".into()));
        }
        Ok(())
    }
}

/// Random stream of sample `index` under `seed`. Streams do not depend on
/// which worker draws them.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct FaultSampler {
    lines: Vec<BranchId>,
    dist: FaultDistributions,
    cumulative: [f64; 4],
    fct: Normal<f64>,
}

impl FaultSampler {
    pub fn new(lines: Vec<BranchId>, dist: FaultDistributions) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::InvalidArgument("no fault-eligible lines".into()));
        }
        dist.validate()?;
        let mut cumulative = [0.0; 4];
        let mut acc = 0.0;
        for (c, p) in cumulative.iter_mut().zip(dist.type_probabilities) {
            acc += p;
            *c = acc;
        }
        cumulative[3] = 1.0;
        let fct = Normal::new(dist.fct_mean_s, dist.fct_std_s)
            .map_err(|e| Error::InvalidArgument(format!("clearing-time distribution: {e}")))?;
        Ok(Self { lines, dist, cumulative, fct })
    }

    pub fn for_case(case: &PowerSystemCase, dist: FaultDistributions) -> Result<Self> {
        Self::new(case.fault_eligible_lines(), dist)
    }

    pub fn lines(&self) -> &[BranchId] {
        &self.lines
    }

    pub fn distributions(&self) -> &FaultDistributions {
        &self.dist
    }

    /// Draws line, location, type and clearing time, in that order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FaultEvent {
        let line = self.lines[rng.random_range(0..self.lines.len())];
        let location_pct: u8 = rng.random_range(1..=100);
        let u: f64 = rng.random();
        let k = self.cumulative.iter().position(|c| u < *c).unwrap_or(3);
        let fault_type = FaultType::ALL[k];
        let half_width = self.dist.fct_truncation_sigma * self.dist.fct_std_s;
        let fct = loop {
            let x = self.fct.sample(rng);
            if (x - self.dist.fct_mean_s).abs() <= half_width {
                break x;
            }
        };
        let t_apply = self.dist.t_apply_s;
        FaultEvent { line, location_pct, fault_type, t_apply, t_clear: t_apply + fct, trip_line: self.dist.trip_line }
    }

    /// Probability of the sampled outcome: uniform line, uniform location,
    /// and the type probability.
    pub fn probability(&self, fault: &FaultEvent) -> f64 {
        (1.0 / self.lines.len() as f64) * 0.01 * self.dist.type_probability(fault.fault_type)
    }
}

pub fn sample_fault<R: Rng + ?Sized>(rng: &mut R, case: &PowerSystemCase, dist: &FaultDistributions) -> Result<FaultEvent> {
    Ok(FaultSampler::for_case(case, dist.clone())?.sample(rng))
}
