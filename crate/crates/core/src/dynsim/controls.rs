//! TGOV1 governor, IEEEX1 exciter and STAB1 stabilizer.
//!
//! Limited integrators use a non-windup rule: a state sitting on a limit
//! keeps a zero derivative while the input pushes it further out.

use super::params::{ExciterParams, GovernorParams, PssParams};

pub(crate) fn windup(x: f64, dx: f64, lo: f64, hi: f64) -> f64 {
    if (x >= hi && dx > 0.0) || (x <= lo && dx < 0.0) {
        0.0
    } else {
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GovernorState {
    /// Valve position (limited).
    pub p1: f64,
    /// Reheater lag state.
    pub x2: f64,
}

impl GovernorParams {
    /// Mechanical power output.
    pub fn output(&self, s: &GovernorState) -> f64 {
        s.x2 + (self.t2 / self.t3) * (s.p1 - s.x2)
    }

    pub fn derivatives(&self, s: &GovernorState, p_ref: f64, omega: f64) -> GovernorState {
        let dp1 = (p_ref - (omega - 1.0) / self.droop - s.p1) / self.t1;
        GovernorState {
            p1: windup(s.p1, dp1, self.p_min, self.p_max),
            x2: (s.p1 - s.x2) / self.t3,
        }
    }

    pub fn clamp(&self, s: &mut GovernorState) {
        s.p1 = s.p1.clamp(self.p_min, self.p_max);
    }

    /// Steady state holding `p_m`; the reference equals the output at
    /// nominal speed.
    pub fn steady_state(&self, p_m: f64) -> Result<(GovernorState, f64), String> {
        if p_m < self.p_min - 1e-9 || p_m > self.p_max + 1e-9 {
            return Err(format!(
                "governor reference {p_m:.4} pu outside [{}, {}]",
                self.p_min, self.p_max
            ));
        }
        Ok((GovernorState { p1: p_m, x2: p_m }, p_m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExciterState {
    /// Regulator output (limited).
    pub vr: f64,
    pub efd: f64,
    /// Rate-feedback lag state.
    pub rf: f64,
}

impl ExciterParams {
    fn feedback(&self, s: &ExciterState) -> f64 {
        (self.kf / self.tf) * s.efd - s.rf
    }

    pub fn derivatives(&self, s: &ExciterState, v_ref: f64, v_t: f64, v_s: f64) -> ExciterState {
        let dvr = (self.ka * (v_ref - v_t + v_s - self.feedback(s)) - s.vr) / self.ta;
        ExciterState {
            vr: windup(s.vr, dvr, self.vr_min, self.vr_max),
            efd: (s.vr - self.ke * s.efd) / self.te,
            rf: ((self.kf / self.tf) * s.efd - s.rf) / self.tf,
        }
    }

    pub fn clamp(&self, s: &mut ExciterState) {
        s.vr = s.vr.clamp(self.vr_min, self.vr_max);
    }

    /// Steady state producing `efd` at terminal voltage `v_t`; returns the
    /// state and the voltage reference.
    pub fn steady_state(&self, efd: f64, v_t: f64) -> Result<(ExciterState, f64), String> {
        let vr = self.ke * efd;
        if vr < self.vr_min || vr > self.vr_max {
            return Err(format!(
                "exciter regulator output {vr:.4} pu outside [{}, {}]",
                self.vr_min, self.vr_max
            ));
        }
        let s = ExciterState { vr, efd, rf: (self.kf / self.tf) * efd };
        Ok((s, v_t + vr / self.ka))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PssState {
    pub washout: f64,
    pub lead1: f64,
    pub lead2: f64,
}

impl PssParams {
    fn stages(&self, s: &PssState, omega: f64) -> (f64, f64, f64, f64) {
        let u = omega - 1.0;
        let y1 = self.gain * (u - s.washout);
        let y2 = s.lead1 + (self.t1 / self.t3) * (y1 - s.lead1);
        let y3 = s.lead2 + (self.t2 / self.t4) * (y2 - s.lead2);
        (u, y1, y2, y3)
    }

    /// Limited stabilizing signal fed to the exciter summing junction.
    pub fn output(&self, s: &PssState, omega: f64) -> f64 {
        self.stages(s, omega).3.clamp(self.v_min, self.v_max)
    }

    pub fn derivatives(&self, s: &PssState, omega: f64) -> PssState {
        let (u, y1, y2, _) = self.stages(s, omega);
        PssState {
            washout: (u - s.washout) / self.t_washout,
            lead1: (y1 - s.lead1) / self.t3,
            lead2: (y2 - s.lead2) / self.t4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gov() -> GovernorParams {
        GovernorParams { source: None, droop: 0.05, t1: 0.5, t2: 1.0, t3: 5.0, p_min: 0.0, p_max: 1.05 }
    }

    fn exc() -> ExciterParams {
        ExciterParams {
            source: None,
            ka: 50.0,
            ta: 0.06,
            ke: 1.0,
            te: 0.46,
            kf: 0.06,
            tf: 1.0,
            vr_min: -6.0,
            vr_max: 6.0,
        }
    }

    fn pss() -> PssParams {
        PssParams {
            source: None,
            gain: 10.0,
            t_washout: 10.0,
            t1: 0.1,
            t3: 0.05,
            t2: 0.1,
            t4: 0.05,
            v_min: -0.1,
            v_max: 0.1,
        }
    }

    #[test]
    fn governor_steady_state() {
        let g = gov();
        let (s, p_ref) = g.steady_state(0.8).unwrap();
        let d = g.derivatives(&s, p_ref, 1.0);
        assert_eq!((d.p1, d.x2), (0.0, 0.0));
        assert!((g.output(&s) - 0.8).abs() < 1e-15);
        assert!(g.steady_state(1.2).is_err());
    }

    #[test]
    fn governor_droop_response_sign() {
        let g = gov();
        let (s, p_ref) = g.steady_state(0.5).unwrap();
        // overspeed closes the valve
        assert!(g.derivatives(&s, p_ref, 1.01).p1 < 0.0);
    }

    #[test]
    fn governor_holds_at_limit() {
        let g = gov();
        let s = GovernorState { p1: 1.05, x2: 1.0 };
        assert_eq!(g.derivatives(&s, 1.05, 0.98).p1, 0.0);
        assert!(g.derivatives(&s, 1.05, 1.01).p1 < 0.0);
    }

    #[test]
    fn exciter_steady_state() {
        let e = exc();
        let (s, v_ref) = e.steady_state(2.1, 1.03).unwrap();
        let d = e.derivatives(&s, v_ref, 1.03, 0.0);
        for v in [d.vr, d.efd, d.rf] {
            assert!(v.abs() < 1e-12);
        }
        assert!(e.steady_state(7.0, 1.0).is_err());
    }

    #[test]
    fn exciter_boosts_on_voltage_dip() {
        let e = exc();
        let (s, v_ref) = e.steady_state(2.0, 1.0).unwrap();
        assert!(e.derivatives(&s, v_ref, 0.9, 0.0).vr > 0.0);
    }

    #[test]
    fn pss_silent_at_nominal_speed() {
        let p = pss();
        let s = PssState::default();
        assert_eq!(p.output(&s, 1.0), 0.0);
        let d = p.derivatives(&s, 1.0);
        assert_eq!((d.washout, d.lead1, d.lead2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pss_output_limited() {
        let p = pss();
        assert_eq!(p.output(&PssState::default(), 1.05), 0.1);
        assert_eq!(p.output(&PssState::default(), 0.95), -0.1);
    }
}
