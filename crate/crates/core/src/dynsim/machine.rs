//! Sixth-order synchronous machine.
//!
//! Rotor: swing equation with damping. Flux: d-axis chain `xd -> x'd -> x''d`
//! driving `E'q`/`E''q` through `T'do`/`T''do`; q-axis chain driving
//! `E'd`/`E''d` through `T'qo`/`T''qo`. Each subtransient equation carries the
//! rate of its transient EMF. The stator is a source `E''` behind
//! `ra + j x''` (with `x''d = x''q`), which is what lets the network treat
//! every machine as a constant Norton admittance.

use std::f64::consts::FRAC_PI_2;

use nalgebra::SMatrix;
use num_complex::Complex64;

use super::params::SyncMachineParams;

/// Electrical base speed in rad/s for a 60 Hz system.
pub const OMEGA_BASE_60HZ: f64 = 2.0 * std::f64::consts::PI * 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncMachineState {
    /// Rotor angle against the synchronous reference (rad).
    pub delta: f64,
    /// Rotor speed (pu).
    pub omega: f64,
    pub eq_t: f64,
    pub ed_t: f64,
    pub eq_st: f64,
    pub ed_st: f64,
}

impl SyncMachineState {
    pub const LEN: usize = 6;

    pub fn to_array(self) -> [f64; 6] {
        [self.delta, self.omega, self.eq_t, self.ed_t, self.eq_st, self.ed_st]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self { delta: x[0], omega: x[1], eq_t: x[2], ed_t: x[3], eq_st: x[4], ed_st: x[5] }
    }
}

/// Quantities the machine exchanges with the network and its controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineInputs {
    /// Terminal voltage phasor in the network frame (pu).
    pub v_term: Complex64,
    /// Mechanical torque (pu on machine base).
    pub t_m: f64,
    pub e_fd: f64,
    /// Electrical base speed (rad/s).
    pub omega_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatorQuantities {
    pub v_d: f64,
    pub v_q: f64,
    pub i_d: f64,
    pub i_q: f64,
    /// Air-gap torque (pu).
    pub t_e: f64,
}

/// Rotation from the machine's dq frame into the network frame.
pub fn dq_to_network(delta: f64) -> Complex64 {
    Complex64::from_polar(1.0, delta - FRAC_PI_2)
}

pub fn stator(state: &SyncMachineState, p: &SyncMachineParams, v_term: Complex64) -> StatorQuantities {
    let v_dq = v_term * dq_to_network(state.delta).conj();
    let y = 1.0 / Complex64::new(p.ra, p.xd_st);
    let i = y * (Complex64::new(state.ed_st, state.eq_st) - v_dq);
    StatorQuantities {
        v_d: v_dq.re,
        v_q: v_dq.im,
        i_d: i.re,
        i_q: i.im,
        t_e: state.ed_st * i.re + state.eq_st * i.im + (p.xq_st - p.xd_st) * i.re * i.im,
    }
}

/// Time derivatives of the six machine states.
pub fn sg_derivatives(state: &SyncMachineState, p: &SyncMachineParams, u: &MachineInputs) -> SyncMachineState {
    let s = stator(state, p, u.v_term);
    let d_eq_t = (u.e_fd - state.eq_t - (p.xd - p.xd_t) * s.i_d) / p.td0_t;
    let d_ed_t = (-state.ed_t + (p.xq - p.xq_t) * s.i_q) / p.tq0_t;
    SyncMachineState {
        delta: u.omega_base * (state.omega - 1.0),
        omega: (u.t_m - s.t_e - p.damping * (state.omega - 1.0)) / p.t_j,
        eq_t: d_eq_t,
        ed_t: d_ed_t,
        eq_st: (state.eq_t - state.eq_st - (p.xd_t - p.xd_st) * s.i_d) / p.td0_st + d_eq_t,
        ed_st: (state.ed_t - state.ed_st + (p.xq_t - p.xq_st) * s.i_q) / p.tq0_st + d_ed_t,
    }
}

/// Analytic Jacobian of [`sg_derivatives`] with respect to the six machine
/// states, terminal voltage and controller inputs held fixed.
pub fn sg_jacobian(state: &SyncMachineState, p: &SyncMachineParams, u: &MachineInputs) -> SMatrix<f64, 6, 6> {
    const DELTA: usize = 0;
    const OMEGA: usize = 1;
    const EQT: usize = 2;
    const EDT: usize = 3;
    const EQS: usize = 4;
    const EDS: usize = 5;

    let s = stator(state, p, u.v_term);
    let y = 1.0 / Complex64::new(p.ra, p.xd_st);
    let (g, b) = (y.re, y.im);

    // current sensitivities: columns delta, E''d, E''q
    let did = [-g * s.v_q - b * s.v_d, g, -b];
    let diq = [-b * s.v_q + g * s.v_d, b, g];
    let cols = [DELTA, EDS, EQS];
    let dxs = p.xq_st - p.xd_st;
    let dte = [
        state.ed_st * did[0] + state.eq_st * diq[0] + dxs * (did[0] * s.i_q + s.i_d * diq[0]),
        s.i_d + state.ed_st * did[1] + state.eq_st * diq[1] + dxs * (did[1] * s.i_q + s.i_d * diq[1]),
        s.i_q + state.ed_st * did[2] + state.eq_st * diq[2] + dxs * (did[2] * s.i_q + s.i_d * diq[2]),
    ];

    let mut j = SMatrix::<f64, 6, 6>::zeros();
    j[(DELTA, OMEGA)] = u.omega_base;
    j[(OMEGA, OMEGA)] = -p.damping / p.t_j;
    for k in 0..3 {
        j[(OMEGA, cols[k])] = -dte[k] / p.t_j;
    }

    j[(EQT, EQT)] = -1.0 / p.td0_t;
    for k in 0..3 {
        j[(EQT, cols[k])] += -(p.xd - p.xd_t) * did[k] / p.td0_t;
    }
    j[(EDT, EDT)] = -1.0 / p.tq0_t;
    for k in 0..3 {
        j[(EDT, cols[k])] += (p.xq - p.xq_t) * diq[k] / p.tq0_t;
    }

    for c in 0..6 {
        j[(EQS, c)] = j[(EQT, c)];
        j[(EDS, c)] = j[(EDT, c)];
    }
    j[(EQS, EQT)] += 1.0 / p.td0_st;
    j[(EQS, EQS)] += -1.0 / p.td0_st;
    for k in 0..3 {
        j[(EQS, cols[k])] += -(p.xd_t - p.xd_st) * did[k] / p.td0_st;
    }
    j[(EDS, EDT)] += 1.0 / p.tq0_st;
    j[(EDS, EDS)] += -1.0 / p.tq0_st;
    for k in 0..3 {
        j[(EDS, cols[k])] += (p.xq_t - p.xq_st) * diq[k] / p.tq0_st;
    }
    j
}

/// Steady-state machine states, field voltage and torque that reproduce the
/// terminal voltage `v` and generated current `i` (both network frame,
/// machine base).
pub fn sg_steady_state(p: &SyncMachineParams, v: Complex64, i: Complex64) -> (SyncMachineState, f64, f64) {
    // q-axis lies along the EMF behind ra + j xq
    let e_q_axis = v + Complex64::new(p.ra, p.xq) * i;
    let delta = e_q_axis.arg();
    let rot = dq_to_network(delta).conj();
    let v_dq = v * rot;
    let i_dq = i * rot;
    let (i_d, i_q) = (i_dq.re, i_dq.im);

    let ed_t = (p.xq - p.xq_t) * i_q;
    let ed_st = ed_t + (p.xq_t - p.xq_st) * i_q;
    let e_st = v_dq + Complex64::new(p.ra, p.xd_st) * i_dq;
    let eq_st = e_st.im;
    let eq_t = eq_st + (p.xd_t - p.xd_st) * i_d;
    let e_fd = eq_t + (p.xd - p.xd_t) * i_d;
    let state = SyncMachineState { delta, omega: 1.0, eq_t, ed_t, eq_st, ed_st };
    let t_e = stator(&state, p, v).t_e;
    (state, e_fd, t_e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SyncMachineParams {
        SyncMachineParams {
            source: None,
            t_j: 8.66,
            damping: 2.0,
            ra: 0.003,
            xd: 2.065,
            xq: 1.974,
            xd_t: 0.488,
            xq_t: 1.19,
            xd_st: 0.34,
            xq_st: 0.34,
            td0_t: 6.56,
            tq0_t: 1.5,
            td0_st: 0.03,
            tq0_st: 0.05,
        }
    }

    fn loaded() -> (SyncMachineState, MachineInputs) {
        let p = params();
        let v = Complex64::from_polar(1.02, 0.3);
        let i = Complex64::from_polar(0.9, 0.1);
        let (x, efd, te) = sg_steady_state(&p, v, i);
        (x, MachineInputs { v_term: v, t_m: te, e_fd: efd, omega_base: OMEGA_BASE_60HZ })
    }

    #[test]
    fn balanced_torque_is_equilibrium() {
        let p = params();
        let (x, u) = loaded();
        let d = sg_derivatives(&x, &p, &u);
        for v in d.to_array() {
            assert!(v.abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn undamped_torque_step_ramps_speed() {
        let mut p = params();
        p.damping = 0.0;
        let (x, mut u) = loaded();
        u.t_m += 0.1;
        let d = sg_derivatives(&x, &p, &u);
        assert!((d.omega - 0.1 / p.t_j).abs() < 1e-12);
        assert!(d.delta.abs() < 1e-12);
    }

    #[test]
    fn no_load_angle_is_internal_emf_angle() {
        let p = params();
        let v = Complex64::from_polar(1.0, 0.4);
        let (x, efd, te) = sg_steady_state(&p, v, Complex64::default());
        assert!((x.delta - 0.4).abs() < 1e-12);
        assert!(te.abs() < 1e-12);
        assert!((efd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let p = params();
        let (mut x, u) = loaded();
        // move off equilibrium so every coupling is exercised
        x.delta += 0.2;
        x.omega += 0.01;
        x.eq_st -= 0.05;
        x.ed_st += 0.03;
        let j = sg_jacobian(&x, &p, &u);
        let base = x.to_array();
        for c in 0..6 {
            let h = 1e-6 * base[c].abs().max(1.0);
            let mut xp = base;
            let mut xm = base;
            xp[c] += h;
            xm[c] -= h;
            let fp = sg_derivatives(&SyncMachineState::from_slice(&xp), &p, &u).to_array();
            let fm = sg_derivatives(&SyncMachineState::from_slice(&xm), &p, &u).to_array();
            for r in 0..6 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let scale = j[(r, c)].abs().max(1.0);
                assert!(
                    (fd - j[(r, c)]).abs() / scale < 1e-6,
                    "entry ({r},{c}): analytic {} vs fd {fd}",
                    j[(r, c)]
                );
            }
        }
    }
}
