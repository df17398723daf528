//! Shunt faults and their positive-sequence equivalents.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::BranchId;

/// Conductance used for a bolted three-phase fault (pu).
pub const BOLTED_FAULT_CONDUCTANCE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultType {
    #[serde(rename = "LLL")]
    Lll,
    #[serde(rename = "LLG")]
    Llg,
    #[serde(rename = "LL")]
    Ll,
    #[serde(rename = "LG")]
    Lg,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [FaultType::Lll, FaultType::Llg, FaultType::Ll, FaultType::Lg];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultType::Lll => "LLL",
            FaultType::Llg => "LLG",
            FaultType::Ll => "LL",
            FaultType::Lg => "LG",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LLL" => Ok(FaultType::Lll),
            "LLG" => Ok(FaultType::Llg),
            "LL" => Ok(FaultType::Ll),
            "LG" | "SLG" => Ok(FaultType::Lg),
            _ => Err(Error::InvalidArgument(format!("unknown fault type '{s}' (expected LLL, LLG, LL or LG)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub line: BranchId,
    /// Distance from the from-bus, percent of line length (1..=100).
    pub location_pct: u8,
    pub fault_type: FaultType,
    pub t_apply: f64,
    pub t_clear: f64,
    /// Open both line sections at clearing. When false the fault
    /// self-extinguishes and the line stays in service.
    pub trip_line: bool,
}

impl FaultEvent {
    pub fn clearing_time(&self) -> f64 {
        self.t_clear - self.t_apply
    }

    pub fn check(&self) -> Result<()> {
        if !(1..=100).contains(&self.location_pct) {
            return Err(Error::InvalidArgument(format!(
                "fault location {}% outside 1..=100",
                self.location_pct
            )));
        }
        if !(self.t_apply.is_finite() && self.t_clear.is_finite()) || self.t_apply < 0.0 {
            return Err(Error::InvalidArgument("fault times must be finite and non-negative".into()));
        }
        if self.t_clear <= self.t_apply {
            return Err(Error::InvalidArgument(format!(
                "fault clears at {} s, not after application at {} s",
                self.t_clear, self.t_apply
            )));
        }
        Ok(())
    }
}

/// Positive-sequence shunt admittance that represents an unbalanced fault
/// given the Thevenin impedances of the three sequence networks at the
/// fault point.
pub fn fault_shunt_admittance(kind: FaultType, z1: Complex64, z2: Complex64, z0: Complex64) -> Result<Complex64> {
    if kind == FaultType::Lll {
        return Ok(Complex64::new(BOLTED_FAULT_CONDUCTANCE, 0.0));
    }
    if z1.norm() == 0.0 {
        return Err(Error::DegenerateSequence("positive-sequence Thevenin impedance is zero".into()));
    }
    let inv = |z: Complex64, what: &str| {
        if z.norm() == 0.0 || !z.is_finite() {
            Err(Error::DegenerateSequence(format!("{what} is zero for a {kind} fault")))
        } else {
            Ok(1.0 / z)
        }
    };
    match kind {
        FaultType::Lg => inv(z2 + z0, "z2 + z0"),
        FaultType::Ll => inv(z2, "z2"),
        FaultType::Llg => {
            let sum = z2 + z0;
            if sum.norm() == 0.0 {
                return Err(Error::DegenerateSequence("z2 + z0 is zero for a LLG fault".into()));
            }
            inv(z2 * z0 / sum, "z2 || z0")
        }
        FaultType::Lll => unreachable!(),
    }
}
