//! Recorded simulation output.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::netmodel::BusId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Termination {
    Completed,
    Diverged { t: f64, cause: String },
}

impl Termination {
    pub fn is_diverged(&self) -> bool {
        matches!(self, Termination::Diverged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Diverged { .. } => "diverged",
        }
    }
}

/// Time series of one run. Channels are stored channel-major: `vmag[b][k]`
/// is bus `bus_ids[b]` at `time[k]`. Values at event instants are the
/// post-event ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub nominal_hz: f64,
    pub sg_ids: Vec<String>,
    pub delta_deg: Vec<Vec<f64>>,
    pub freq_hz: Vec<Vec<f64>>,
    pub bus_ids: Vec<BusId>,
    pub vmag: Vec<Vec<f64>>,
    pub dfig_ids: Vec<String>,
    pub dfig_omega_r: Vec<Vec<f64>>,
    /// Unit output on the system base (pu).
    pub dfig_p_w: Vec<Vec<f64>>,
    pub dfig_q_w: Vec<Vec<f64>>,
    pub t_apply: Option<f64>,
    pub t_clear: Option<f64>,
    pub t_end: f64,
    /// Bus created by splitting the faulted line.
    pub fault_bus: Option<BusId>,
    pub termination: Termination,
    /// Pairwise machine angle separation exceeded 360 degrees.
    pub lost_synchronism: bool,
    /// Largest nodal current mismatch over accepted steps (pu).
    pub max_network_residual: f64,
    /// Steps accepted without meeting the interface tolerance.
    pub unconverged_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Largest pairwise machine angle separation at sample `k` (degrees).
    pub fn angle_spread_deg(&self, k: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ch in &self.delta_deg {
            lo = lo.min(ch[k]);
            hi = hi.max(ch[k]);
        }
        hi - lo
    }

    pub fn bus_channel(&self, bus: BusId) -> Option<&[f64]> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.vmag[i].as_slice())
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("t_s");
        for id in &self.sg_ids {
            let _ = write!(h, ",delta_deg:{id}");
        }
        for id in &self.sg_ids {
            let _ = write!(h, ",freq_hz:{id}");
        }
        for b in &self.bus_ids {
            let _ = write!(h, ",vmag_pu:{b}");
        }
        for id in &self.dfig_ids {
            let _ = write!(h, ",omega_r_pu:{id},p_w_pu:{id},q_w_pu:{id}");
        }
        h
    }

    /// Writes one row per time step. Column order: time, machine angles,
    /// machine frequencies, bus voltages, then rotor speed, active and
    /// reactive output per wind unit.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut row = String::new();
        for k in 0..self.time.len() {
            row.clear();
            let _ = write!(row, "{}", self.time[k]);
            for ch in self.delta_deg.iter().chain(&self.freq_hz).chain(&self.vmag) {
                let _ = write!(row, ",{}", ch[k]);
            }
            for d in 0..self.dfig_ids.len() {
                let _ = write!(row, ",{},{},{}", self.dfig_omega_r[d][k], self.dfig_p_w[d][k], self.dfig_q_w[d][k]);
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}
