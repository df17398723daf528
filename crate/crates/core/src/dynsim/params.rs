//! Machine and controller parameter blocks as stored in case files.
//!
//! Synchronous-machine and controller quantities are per unit on the machine
//! MVA rating; time constants are in seconds.

use serde::{Deserialize, Serialize};

type Check = std::result::Result<(), String>;

fn positive(name: &str, v: f64) -> Check {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

fn ordered(lo_name: &str, lo: f64, hi_name: &str, hi: f64) -> Check {
    if lo < hi {
        Ok(())
    } else {
        Err(format!("limit pair out of order: {lo_name} = {lo} >= {hi_name} = {hi}"))
    }
}

/// Sixth-order synchronous machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMachineParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Mechanical starting time `2H` in seconds.
    pub t_j: f64,
    pub damping: f64,
    #[serde(default)]
    pub ra: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_t: f64,
    pub xq_t: f64,
    pub xd_st: f64,
    pub xq_st: f64,
    pub td0_t: f64,
    pub tq0_t: f64,
    pub td0_st: f64,
    pub tq0_st: f64,
}

impl SyncMachineParams {
    pub fn validate(&self) -> Check {
        positive("t_j", self.t_j)?;
        if self.damping < 0.0 {
            return Err(format!("damping must be non-negative, got {}", self.damping));
        }
        if self.ra < 0.0 {
            return Err(format!("ra must be non-negative, got {}", self.ra));
        }
        positive("xd_st", self.xd_st)?;
        positive("xq_st", self.xq_st)?;
        if !(self.xd >= self.xd_t && self.xd_t >= self.xd_st) {
            return Err("d-axis reactances must satisfy xd >= xd_t >= xd_st".into());
        }
        if !(self.xq >= self.xq_t && self.xq_t >= self.xq_st) {
            return Err("q-axis reactances must satisfy xq >= xq_t >= xq_st".into());
        }
        // The network interface treats the machine as a source behind one
        // subtransient reactance.
        if (self.xd_st - self.xq_st).abs() > 1e-12 {
            return Err("xd_st and xq_st must be equal".into());
        }
        for (n, v) in [
            ("td0_t", self.td0_t),
            ("tq0_t", self.tq0_t),
            ("td0_st", self.td0_st),
            ("tq0_st", self.tq0_st),
        ] {
            positive(n, v)?;
        }
        Ok(())
    }
}

/// TGOV1 steam turbine-governor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub droop: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl GovernorParams {
    pub fn validate(&self) -> Check {
        positive("governor droop", self.droop)?;
        positive("governor t1", self.t1)?;
        positive("governor t3", self.t3)?;
        if self.t2 < 0.0 {
            return Err("governor t2 must be non-negative".into());
        }
        ordered("p_min", self.p_min, "p_max", self.p_max)
    }
}

/// IEEEX1 (IEEE type DC1) exciter without saturation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExciterParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub ka: f64,
    pub ta: f64,
    pub ke: f64,
    pub te: f64,
    pub kf: f64,
    pub tf: f64,
    pub vr_min: f64,
    pub vr_max: f64,
}

impl ExciterParams {
    pub fn validate(&self) -> Check {
        positive("exciter ka", self.ka)?;
        positive("exciter ta", self.ta)?;
        positive("exciter te", self.te)?;
        positive("exciter tf", self.tf)?;
        if self.kf < 0.0 {
            return Err("exciter kf must be non-negative".into());
        }
        ordered("vr_min", self.vr_min, "vr_max", self.vr_max)
    }
}

/// STAB1 speed-input stabilizer: washout followed by two lead-lag stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub gain: f64,
    pub t_washout: f64,
    pub t1: f64,
    pub t3: f64,
    pub t2: f64,
    pub t4: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PssParams {
    pub fn validate(&self) -> Check {
        positive("pss t_washout", self.t_washout)?;
        positive("pss t3", self.t3)?;
        positive("pss t4", self.t4)?;
        if self.t1 < 0.0 || self.t2 < 0.0 {
            return Err("pss lead time constants must be non-negative".into());
        }
        ordered("pss v_min", self.v_min, "pss v_max", self.v_max)
    }
}

/// Third-order DFIG with a two-mass drive train and rotor-side converter
/// control. Per unit on the unit MVA rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfigParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Generator inertia constant (s).
    pub h_g: f64,
    /// Turbine inertia constant (s).
    pub h_t: f64,
    /// Open-circuit reactance `X = Ls + Lm`.
    pub x: f64,
    /// Short-circuit (transient) reactance `X' = Ls + Lm Lr / (Lm + Lr)`.
    pub x_t: f64,
    /// Transient open-circuit time constant (s).
    pub t0: f64,
    pub rs: f64,
    pub lm: f64,
    pub lr: f64,
    pub k_tw: f64,
    pub d_tw: f64,
    /// Rotor speed at the operating point (pu).
    pub omega_r0: f64,
    /// Converter current limit (pu).
    pub i_max: f64,
    /// Rotor voltage limit (pu).
    pub vr_max: f64,
    /// Current-control closed-loop time constant (s).
    pub t_current: f64,
    pub kp_speed: f64,
    pub ki_speed: f64,
    pub kp_volt: f64,
    pub ki_volt: f64,
    /// Crowbar engages when terminal voltage falls below this (pu).
    pub crowbar_on: f64,
    /// Crowbar releases when terminal voltage recovers above this (pu).
    pub crowbar_off: f64,
    /// Minimum crowbar conduction time (s).
    pub crowbar_min_time: f64,
}

impl DfigParams {
    /// Typical 2 MW-class machine constants, expressed on the unit rating.
    pub fn typical() -> Self {
        let (ls, lm, lr, rr) = (0.1, 3.5, 0.1, 0.01);
        let lrr = lm + lr;
        Self {
            source: Some("typical DFIG constants".into()),
            h_g: 0.5,
            h_t: 4.0,
            x: ls + lm,
            x_t: ls + lm * lr / lrr,
            t0: lrr / (2.0 * std::f64::consts::PI * 60.0 * rr),
            rs: 0.01,
            lm,
            lr,
            k_tw: 0.3,
            d_tw: 3.0,
            omega_r0: 1.2,
            i_max: 1.1,
            vr_max: 0.5,
            t_current: 0.02,
            kp_speed: 2.0,
            ki_speed: 1.0,
            kp_volt: 2.0,
            ki_volt: 10.0,
            crowbar_on: 0.2,
            crowbar_off: 0.5,
            crowbar_min_time: 0.1,
        }
    }

    pub fn validate(&self) -> Check {
        positive("dfig x_t", self.x_t)?;
        if self.x <= self.x_t {
            return Err(format!("dfig requires x > x_t (x = {}, x_t = {})", self.x, self.x_t));
        }
        positive("dfig t0", self.t0)?;
        positive("dfig h_g", self.h_g)?;
        positive("dfig h_t", self.h_t)?;
        positive("dfig lm", self.lm)?;
        positive("dfig k_tw", self.k_tw)?;
        positive("dfig omega_r0", self.omega_r0)?;
        positive("dfig i_max", self.i_max)?;
        positive("dfig vr_max", self.vr_max)?;
        positive("dfig t_current", self.t_current)?;
        if self.lr < 0.0 || self.rs < 0.0 || self.d_tw < 0.0 {
            return Err("dfig lr, rs and d_tw must be non-negative".into());
        }
        let implied = self.lm * self.lm / (self.lm + self.lr);
        if ((self.x - self.x_t) - implied).abs() > 1e-3 * implied.max(1.0) {
            return Err(format!(
                "dfig reactances inconsistent with inductances: x - x_t = {}, lm^2/(lm+lr) = {}",
                self.x - self.x_t,
                implied
            ));
        }
        ordered("crowbar_on", self.crowbar_on, "crowbar_off", self.crowbar_off)
    }

    /// `Lm / (Lm + Lr)`.
    pub fn coupling(&self) -> f64 {
        self.lm / (self.lm + self.lr)
    }
}
