//! Probabilistic transient-stability risk assessment.
//!
//! The crate runs RMS (phasor) time-domain simulations of a faulted power
//! system, turns each trajectory into angle, voltage and frequency severities,
//! and averages them over Monte Carlo-sampled faults into the angle, voltage
//! and frequency risk indices and the global instability risk index `G`.
//!
//! * [`netmodel`] – case data, Y-bus, fault-point line splitting
//! * [`powerflow`] – Newton-Raphson power flow
//! * [`dynsim`] – machine models, fault shunts, time-domain simulation
//! * [`metrics`] – TSI and severity functions
//! * [`riskmc`] – fault sampling, Monte Carlo engine, risk summaries
//! * [`scenario`] – wind-penetration and generation/load scaling transforms
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod dynsim;
pub mod error;
pub mod metrics;
pub mod netmodel;
pub mod powerflow;
pub mod riskmc;
pub mod scenario;

pub use error::{Error, Result};

// book chapters run as doctests, one module per chapter
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cases.md")]
    mod cases {}
    #[doc = include_str!("../../../book/src/powerflow.md")]
    mod powerflow {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
