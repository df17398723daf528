//! Reduced third-order DFIG with a two-mass drive train.
//!
//! Stator transients are neglected, so the stator is the internal voltage
//! `e = e_d + j e_q` behind `rs + jX'` in the network frame (generator
//! current convention). The rotor-side converter sets the rotor voltage
//! from outer speed/voltage PI loops, and the grid-side converter returns
//! the slip power to the grid at unity power factor.

use num_complex::Complex64;

use super::controls::windup;
use super::params::DfigParams;

/// Grid-side converter current limit (pu on the unit rating).
pub const GSC_CURRENT_LIMIT: f64 = 0.4;
/// Below this terminal voltage the grid-side converter blocks.
const GSC_BLOCK_VOLTAGE: f64 = 0.05;
/// Integrator ranges of the outer loops (pu power).
const XP_RANGE: (f64, f64) = (0.0, 1.5);
const XQ_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DfigMachineState {
    pub e_d: f64,
    pub e_q: f64,
    /// Generator rotor speed (pu).
    pub omega_r: f64,
    /// Turbine speed (pu).
    pub omega_t: f64,
    /// Shaft twist angle (rad).
    pub theta_tw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DfigControlState {
    /// Active-power integrator of the speed loop.
    pub x_p: f64,
    /// Reactive-power integrator of the voltage loop.
    pub x_q: f64,
}

/// Operating-point quantities fixed at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfigSetpoints {
    /// Turbine mechanical power (pu), constant: wind does not vary.
    pub p_mech: f64,
    pub omega_ref: f64,
    pub v_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfigInputs {
    pub v_term: Complex64,
    /// Rotor voltage `v_dr + j v_qr`.
    pub v_rotor: Complex64,
    pub p_mech: f64,
    pub omega_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DfigOutputs {
    pub i_stator: Complex64,
    pub i_rotor: Complex64,
    pub p_stator: f64,
    pub q_stator: f64,
    /// Power drawn by the rotor circuit from the converter.
    pub p_rotor_in: f64,
    /// Unit output `P_s - P_r` (stator minus rotor terms).
    pub p_w: f64,
    pub q_w: f64,
    pub t_e: f64,
}

impl DfigParams {
    pub fn stator_impedance(&self) -> Complex64 {
        Complex64::new(self.rs, self.x_t)
    }
}

pub fn stator_current(p: &DfigParams, m: &DfigMachineState, v: Complex64) -> Complex64 {
    (Complex64::new(m.e_d, m.e_q) - v) / p.stator_impedance()
}

/// Machine and shaft derivatives for a given rotor voltage.
pub fn dfig_derivatives(p: &DfigParams, m: &DfigMachineState, u: &DfigInputs) -> (DfigMachineState, DfigOutputs) {
    let e = Complex64::new(m.e_d, m.e_q);
    let i_s = stator_current(p, m, u.v_term);
    let k = p.coupling();
    let slip = 1.0 - m.omega_r;
    let dx = p.x - p.x_t;
    let wb = u.omega_base;

    let de_d = -(m.e_d - dx * i_s.im) / p.t0 + wb * (slip * m.e_q - k * u.v_rotor.im);
    let de_q = -(m.e_q + dx * i_s.re) / p.t0 + wb * (-slip * m.e_d + k * u.v_rotor.re);

    let t_e = m.e_d * i_s.re + m.e_q * i_s.im;
    let shaft = p.k_tw * m.theta_tw + p.d_tw * (m.omega_t - m.omega_r);
    let d_omega_r = (shaft - t_e) / (2.0 * p.h_g);
    let d_omega_t = (u.p_mech / m.omega_t - shaft) / (2.0 * p.h_t);
    let d_theta = wb * (m.omega_t - m.omega_r);

    let i_r = Complex64::new(0.0, -1.0) * e / p.lm + (p.lm / (p.lm + p.lr)) * i_s;
    let s_s = u.v_term * i_s.conj();
    let p_r = (u.v_rotor * i_r.conj()).re;
    let out = DfigOutputs {
        i_stator: i_s,
        i_rotor: i_r,
        p_stator: s_s.re,
        q_stator: s_s.im,
        p_rotor_in: p_r,
        p_w: s_s.re - p_r,
        q_w: s_s.im,
        t_e,
    };
    let d = DfigMachineState { e_d: de_d, e_q: de_q, omega_r: d_omega_r, omega_t: d_omega_t, theta_tw: d_theta };
    (d, out)
}

/// Grid-side converter current returning `-p_rotor_in` at unity power factor.
pub fn grid_side_current(p_rotor_in: f64, v: Complex64) -> Complex64 {
    let vm = v.norm();
    if vm < GSC_BLOCK_VOLTAGE {
        return Complex64::default();
    }
    let i = Complex64::from(-p_rotor_in) / v.conj();
    let n = i.norm();
    if n > GSC_CURRENT_LIMIT {
        i * (GSC_CURRENT_LIMIT / n)
    } else {
        i
    }
}

/// Stator current reference from a power reference, limited to `i_max`
/// with reactive priority.
fn current_reference(p: &DfigParams, s_ref: Complex64, v: Complex64) -> Complex64 {
    let vm = v.norm().max(1e-3);
    let unit = v / vm;
    // active and reactive components along and against the voltage
    let mut i_p = s_ref.re / vm;
    let i_q = (s_ref.im / vm).clamp(-p.i_max, p.i_max);
    let room = (p.i_max * p.i_max - i_q * i_q).max(0.0).sqrt();
    i_p = i_p.clamp(-room, room);
    Complex64::new(i_p, -i_q) * unit
}

/// Power references of the outer loops.
pub fn power_reference(p: &DfigParams, m: &DfigMachineState, c: &DfigControlState, sp: &DfigSetpoints, v: Complex64) -> Complex64 {
    Complex64::new(
        c.x_p + p.kp_speed * (m.omega_r - sp.omega_ref),
        c.x_q + p.kp_volt * (sp.v_ref - v.norm()),
    )
}

/// Rotor voltage command. The inner loop cancels the machine dynamics so
/// that `e` approaches its reference with time constant `t_current`.
pub fn rotor_voltage(
    p: &DfigParams,
    m: &DfigMachineState,
    c: &DfigControlState,
    sp: &DfigSetpoints,
    v: Complex64,
    crowbar: bool,
    omega_base: f64,
) -> Complex64 {
    if crowbar {
        return Complex64::default();
    }
    let i_ref = current_reference(p, power_reference(p, m, c, sp, v), v);
    let e_ref = v + p.stator_impedance() * i_ref;
    let i_s = stator_current(p, m, v);
    let k = p.coupling();
    let slip = 1.0 - m.omega_r;
    let dx = p.x - p.x_t;
    let v_qr = (-(m.e_d - dx * i_s.im) / p.t0 + omega_base * slip * m.e_q - (e_ref.re - m.e_d) / p.t_current)
        / (omega_base * k);
    let v_dr = ((m.e_q + dx * i_s.re) / p.t0 + omega_base * slip * m.e_d + (e_ref.im - m.e_q) / p.t_current)
        / (omega_base * k);
    let v_r = Complex64::new(v_dr, v_qr);
    let n = v_r.norm();
    if n > p.vr_max {
        v_r * (p.vr_max / n)
    } else {
        v_r
    }
}

pub fn control_derivatives(
    p: &DfigParams,
    m: &DfigMachineState,
    c: &DfigControlState,
    sp: &DfigSetpoints,
    v: Complex64,
    crowbar: bool,
) -> DfigControlState {
    if crowbar {
        return DfigControlState::default();
    }
    let dp = p.ki_speed * (m.omega_r - sp.omega_ref);
    let dq = p.ki_volt * (sp.v_ref - v.norm());
    DfigControlState {
        x_p: windup(c.x_p, dp, XP_RANGE.0, XP_RANGE.1),
        x_q: windup(c.x_q, dq, XQ_RANGE.0, XQ_RANGE.1),
    }
}

pub fn clamp_control(c: &mut DfigControlState) {
    c.x_p = c.x_p.clamp(XP_RANGE.0, XP_RANGE.1);
    c.x_q = c.x_q.clamp(XQ_RANGE.0, XQ_RANGE.1);
}

/// Operating point delivering `s_out` (unit output, machine base) at
/// terminal voltage `v` with the rotor at its reference speed.
pub fn dfig_steady_state(
    p: &DfigParams,
    v: Complex64,
    s_out: Complex64,
    omega_base: f64,
) -> Result<(DfigMachineState, DfigControlState, DfigSetpoints), String> {
    let z = p.stator_impedance();
    let sp0 = DfigSetpoints { p_mech: 0.0, omega_ref: p.omega_r0, v_ref: v.norm() };
    let slip = 1.0 - p.omega_r0;
    let mut p_s = s_out.re / (1.0 - slip);
    let mut state = None;
    for _ in 0..100 {
        let i_s = (Complex64::new(p_s, s_out.im) / v).conj();
        let e = v + z * i_s;
        let m = DfigMachineState { e_d: e.re, e_q: e.im, omega_r: p.omega_r0, omega_t: p.omega_r0, theta_tw: 0.0 };
        let c = DfigControlState { x_p: p_s, x_q: s_out.im };
        let v_r = rotor_voltage(p, &m, &c, &sp0, v, false, omega_base);
        let u = DfigInputs { v_term: v, v_rotor: v_r, p_mech: 0.0, omega_base };
        let (_, out) = dfig_derivatives(p, &m, &u);
        let err = s_out.re - out.p_w;
        state = Some((m, c, out, v_r));
        if err.abs() < 1e-13 {
            break;
        }
        p_s += err / (1.0 - slip);
    }
    let (mut m, c, out, v_r) = state.expect("at least one iteration");
    if (out.p_w - s_out.re).abs() > 1e-10 {
        return Err(format!("rotor power balance did not converge (residual {:.3e})", out.p_w - s_out.re));
    }
    if out.i_stator.norm() > p.i_max {
        return Err(format!("stator current {:.4} pu exceeds converter limit {}", out.i_stator.norm(), p.i_max));
    }
    if v_r.norm() >= p.vr_max {
        return Err(format!("rotor voltage {:.4} pu at its limit {}", v_r.norm(), p.vr_max));
    }
    if c.x_p < XP_RANGE.0 || c.x_p > XP_RANGE.1 || c.x_q < XQ_RANGE.0 || c.x_q > XQ_RANGE.1 {
        return Err(format!("power reference ({:.4}, {:.4}) pu outside controller range", c.x_p, c.x_q));
    }
    if (-out.p_rotor_in / v.norm()).abs() > GSC_CURRENT_LIMIT {
        return Err("slip power exceeds grid-side converter rating".into());
    }
    m.theta_tw = out.t_e / p.k_tw;
    let sp = DfigSetpoints { p_mech: out.t_e * m.omega_t, ..sp0 };
    Ok((m, c, sp))
}
