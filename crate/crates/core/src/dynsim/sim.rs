//! Network-coupled integration of machine and controller dynamics.
//!
//! Every unit is a Norton source: a constant admittance stamped into the
//! network matrix plus a state-dependent current. The network therefore
//! reduces, per topology, to a fixed transfer matrix from unit currents to
//! bus voltages. Differential states advance with the trapezoidal rule,
//! alternating with the network solution until the unit terminal voltages
//! stop moving.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::controls::{ExciterState, GovernorState, PssState};
use super::dfig::{
    clamp_control, control_derivatives, dfig_derivatives, dfig_steady_state, grid_side_current, rotor_voltage,
    DfigControlState, DfigInputs, DfigMachineState, DfigSetpoints,
};
use super::fault::{fault_shunt_admittance, FaultEvent};
use super::machine::{dq_to_network, sg_derivatives, sg_steady_state, MachineInputs, SyncMachineState};
use super::params::{DfigParams, ExciterParams, GovernorParams, PssParams, SyncMachineParams};
use super::trajectory::{Termination, Trajectory};
use crate::error::{Error, Result};
use crate::netmodel::{
    build_sequence_ybus, build_ybus, split_line_at, thevenin_impedance, BusId, GeneratorModel,
    PowerSystemCase, Sequence, YBus,
};
use crate::powerflow::{generator_outputs, PowerFlowSolution};

const SG_STATES: usize = 14;
const DFIG_STATES: usize = 7;
/// Pairwise angle separation treated as numerical divergence (degrees).
pub const DIVERGENCE_ANGLE_DEG: f64 = 1000.0;
/// Pairwise angle separation flagged as loss of synchronism (degrees).
pub const SYNC_LOSS_ANGLE_DEG: f64 = 360.0;
/// Times closer than this are the same instant.
const TIME_EPS: f64 = 1e-9;

/// How fault instants that fall between grid points are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAlignment {
    /// Add the instant to the grid as an extra point.
    #[default]
    Insert,
    /// Reject events that are not whole multiples of the step.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    pub alignment: EventAlignment,
    /// Terminal-voltage change that ends the interface iteration (pu).
    pub interface_tol: f64,
    pub max_interface_iter: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { t_end: 10.0, dt: 0.005, alignment: EventAlignment::Insert, interface_tol: 1e-8, max_interface_iter: 10 }
    }
}

#[derive(Debug, Clone)]
enum UnitModel {
    Sync {
        machine: SyncMachineParams,
        governor: GovernorParams,
        exciter: ExciterParams,
        pss: PssParams,
        p_ref: f64,
        v_ref: f64,
    },
    Dfig {
        params: DfigParams,
        setpoints: DfigSetpoints,
    },
}

/// One generating unit prepared for simulation.
#[derive(Debug, Clone)]
pub struct DynamicUnit {
    pub id: String,
    pub bus: BusId,
    /// Rating over system base: converts machine-base currents.
    scale: f64,
    model: UnitModel,
    offset: usize,
}

impl DynamicUnit {
    pub fn is_synchronous(&self) -> bool {
        matches!(self.model, UnitModel::Sync { .. })
    }

    pub fn state_len(&self) -> usize {
        if self.is_synchronous() {
            SG_STATES
        } else {
            DFIG_STATES
        }
    }

    pub fn state_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.state_len()
    }

    /// Norton admittance on the system base.
    fn norton_admittance(&self) -> Complex64 {
        let z = match &self.model {
            UnitModel::Sync { machine, .. } => Complex64::new(machine.ra, machine.xd_st),
            UnitModel::Dfig { params, .. } => params.stator_impedance(),
        };
        self.scale / z
    }

    fn derivatives(&self, x: &[f64], v: Complex64, crowbar: bool, wb: f64, f: &mut [f64]) {
        match &self.model {
            UnitModel::Sync { machine, governor, exciter, pss, p_ref, v_ref } => {
                let ms = SyncMachineState::from_slice(x);
                let gs = GovernorState { p1: x[6], x2: x[7] };
                let es = ExciterState { vr: x[8], efd: x[9], rf: x[10] };
                let ps = PssState { washout: x[11], lead1: x[12], lead2: x[13] };
                let v_s = pss.output(&ps, ms.omega);
                let u = MachineInputs { v_term: v, t_m: governor.output(&gs), e_fd: es.efd, omega_base: wb };
                let dm = sg_derivatives(&ms, machine, &u);
                let dg = governor.derivatives(&gs, *p_ref, ms.omega);
                let de = exciter.derivatives(&es, *v_ref, v.norm(), v_s);
                let dp = pss.derivatives(&ps, ms.omega);
                f[..6].copy_from_slice(&dm.to_array());
                f[6..].copy_from_slice(&[dg.p1, dg.x2, de.vr, de.efd, de.rf, dp.washout, dp.lead1, dp.lead2]);
            }
            UnitModel::Dfig { params, setpoints } => {
                let (m, c) = dfig_states(x);
                let v_r = rotor_voltage(params, &m, &c, setpoints, v, crowbar, wb);
                let u = DfigInputs { v_term: v, v_rotor: v_r, p_mech: setpoints.p_mech, omega_base: wb };
                let (dm, _) = dfig_derivatives(params, &m, &u);
                let dc = control_derivatives(params, &m, &c, setpoints, v, crowbar);
                f.copy_from_slice(&[dm.e_d, dm.e_q, dm.omega_r, dm.omega_t, dm.theta_tw, dc.x_p, dc.x_q]);
            }
        }
    }

    /// Norton source current on the system base.
    fn injection(&self, x: &[f64], v: Complex64, crowbar: bool, wb: f64) -> Complex64 {
        match &self.model {
            UnitModel::Sync { .. } => {
                let e = Complex64::new(x[5], x[4]) * dq_to_network(x[0]);
                e * self.norton_admittance()
            }
            UnitModel::Dfig { params, setpoints } => {
                let (m, c) = dfig_states(x);
                let v_r = rotor_voltage(params, &m, &c, setpoints, v, crowbar, wb);
                let u = DfigInputs { v_term: v, v_rotor: v_r, p_mech: setpoints.p_mech, omega_base: wb };
                let (_, out) = dfig_derivatives(params, &m, &u);
                Complex64::new(m.e_d, m.e_q) * self.norton_admittance()
                    + grid_side_current(out.p_rotor_in, v) * self.scale
            }
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        match &self.model {
            UnitModel::Sync { governor, exciter, .. } => {
                x[6] = x[6].clamp(governor.p_min, governor.p_max);
                x[8] = x[8].clamp(exciter.vr_min, exciter.vr_max);
            }
            UnitModel::Dfig { .. } => {
                let mut c = DfigControlState { x_p: x[5], x_q: x[6] };
                clamp_control(&mut c);
                x[5] = c.x_p;
                x[6] = c.x_q;
            }
        }
    }

    /// Output `(P, Q)` on the system base at terminal voltage `v`.
    fn dfig_output(&self, x: &[f64], v: Complex64, crowbar: bool, wb: f64) -> (f64, f64) {
        let i_total = self.injection(x, v, crowbar, wb) - v * self.norton_admittance();
        let s = v * i_total.conj();
        (s.re, s.im)
    }
}

fn dfig_states(x: &[f64]) -> (DfigMachineState, DfigControlState) {
    (
        DfigMachineState { e_d: x[0], e_q: x[1], omega_r: x[2], omega_t: x[3], theta_tw: x[4] },
        DfigControlState { x_p: x[5], x_q: x[6] },
    )
}

/// Units, operating-point references and initial states of a case.
#[derive(Debug, Clone)]
pub struct DynamicModel {
    case: PowerSystemCase,
    pf_vmag: Vec<f64>,
    pf_v: Vec<Complex64>,
    units: Vec<DynamicUnit>,
    x0: Vec<f64>,
    omega_base: f64,
}

/// Initializes every unit from its power-flow terminal conditions so that
/// all state derivatives vanish at t = 0.
pub fn init_dynamics(case: &PowerSystemCase, pf: &PowerFlowSolution) -> Result<DynamicModel> {
    if pf.bus_ids.len() != case.buses.len() || pf.bus_ids.iter().zip(&case.buses).any(|(a, b)| *a != b.id) {
        return Err(Error::InvalidArgument("power-flow solution does not belong to this case".into()));
    }
    let base = case.system.mva_base;
    let wb = 2.0 * std::f64::consts::PI * case.system.nominal_hz;
    let pos = case.bus_positions();
    let outputs = generator_outputs(case, pf);
    let mut units = Vec::with_capacity(case.generators.len());
    let mut x0 = Vec::new();
    for (g, s_sys) in case.generators.iter().zip(outputs) {
        let v = pf.voltage(pos[&g.bus]);
        let scale = g.mva_rating / base;
        let s = s_sys / scale;
        let init_err = |reason: String| Error::Initialization { unit: g.id.clone(), reason };
        let offset = x0.len();
        let model = match &g.model {
            GeneratorModel::Synchronous { machine, governor, exciter, pss } => {
                let i = (s / v).conj();
                let (ms, e_fd, t_e) = sg_steady_state(machine, v, i);
                let (gs, p_ref) = governor.steady_state(t_e).map_err(init_err)?;
                let (es, v_ref) = exciter.steady_state(e_fd, v.norm()).map_err(init_err)?;
                x0.extend_from_slice(&ms.to_array());
                x0.extend_from_slice(&[gs.p1, gs.x2, es.vr, es.efd, es.rf, 0.0, 0.0, 0.0]);
                UnitModel::Sync {
                    machine: machine.clone(),
                    governor: governor.clone(),
                    exciter: exciter.clone(),
                    pss: pss.clone(),
                    p_ref,
                    v_ref,
                }
            }
            GeneratorModel::Dfig { dfig } => {
                let (m, c, setpoints) = dfig_steady_state(dfig, v, s, wb).map_err(init_err)?;
                x0.extend_from_slice(&[m.e_d, m.e_q, m.omega_r, m.omega_t, m.theta_tw, c.x_p, c.x_q]);
                UnitModel::Dfig { params: dfig.clone(), setpoints }
            }
        };
        units.push(DynamicUnit { id: g.id.clone(), bus: g.bus, scale, model, offset });
    }
    Ok(DynamicModel { case: case.clone(), pf_vmag: pf.v_mag.clone(), pf_v: pf.voltages(), units, x0, omega_base: wb })
}

/// Simulates `case` from its power-flow operating point.
pub fn run_simulation(
    case: &PowerSystemCase,
    pf: &PowerFlowSolution,
    fault: Option<&FaultEvent>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let opts = SimOptions { t_end, dt, ..SimOptions::default() };
    init_dynamics(case, pf)?.simulate(fault, &opts)
}

/// Bus-voltage response of one network topology to unit currents.
struct Network {
    n: usize,
    m: usize,
    triplets: Vec<(usize, usize, Complex64)>,
    /// `n x m`, row-major.
    zfull: Vec<Complex64>,
    /// Rows of `zfull` at the unit buses, `m x m`.
    zdd: Vec<Complex64>,
}

impl Network {
    fn build(y: &YBus, dev_pos: &[usize]) -> Result<Network> {
        let n = y.dim();
        let m = dev_pos.len();
        let lu = y.to_dense().lu();
        let mut zfull = vec![Complex64::default(); n * m];
        for (c, &p) in dev_pos.iter().enumerate() {
            let mut e = DVector::zeros(n);
            e[p] = Complex64::new(1.0, 0.0);
            let col = lu.solve(&e).ok_or_else(|| Error::SingularNetwork("network matrix is singular".into()))?;
            for r in 0..n {
                if !col[r].is_finite() || col[r].norm() > 1e8 {
                    return Err(Error::SingularNetwork(format!(
                        "network matrix is singular (bus {} has no path to ground)",
                        y.bus_ids()[r]
                    )));
                }
                zfull[r * m + c] = col[r];
            }
        }
        let mut zdd = vec![Complex64::default(); m * m];
        for (r, &p) in dev_pos.iter().enumerate() {
            zdd[r * m..(r + 1) * m].copy_from_slice(&zfull[p * m..(p + 1) * m]);
        }
        Ok(Network { n, m, triplets: y.iter().collect(), zfull, zdd })
    }

    fn dev_voltages(&self, i: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.zdd[r * self.m..(r + 1) * self.m].iter().zip(i).map(|(z, c)| z * c).sum();
        }
    }

    fn bus_voltages(&self, i: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.zfull[r * self.m..(r + 1) * self.m].iter().zip(i).map(|(z, c)| z * c).sum();
        }
    }

    /// Infinity norm of `Y V - I` with `i` injected at the unit buses.
    fn residual(&self, v: &[Complex64], i: &[Complex64], dev_pos: &[usize]) -> f64 {
        let mut r = vec![Complex64::default(); self.n];
        for &(a, b, y) in &self.triplets {
            r[a] += y * v[b];
        }
        for (k, &p) in dev_pos.iter().enumerate() {
            r[p] -= i[k];
        }
        r.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

struct Topologies {
    pre: Network,
    during: Option<Network>,
    post: Option<std::result::Result<Network, String>>,
}

impl DynamicModel {
    pub fn case(&self) -> &PowerSystemCase {
        &self.case
    }

    pub fn units(&self) -> &[DynamicUnit] {
        &self.units
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    /// Largest state derivative at t = 0 on the intact network.
    pub fn initial_residual(&self) -> Result<f64> {
        let (y, _) = self.network_matrix(&self.case)?;
        let dev_pos = self.device_positions(&self.case);
        let net = Network::build(&y, &dev_pos.0)?;
        let mut run = Run::new(self, net, dev_pos, &SimOptions::default());
        run.settle_network(&run.x.clone(), 50);
        let mut f = vec![0.0; self.x0.len()];
        run.eval(&run.x.clone(), &mut f);
        Ok(f.iter().map(|v| v.abs()).fold(0.0, f64::max))
    }

    /// Unique unit buses (network positions) and the slot of each unit.
    fn device_positions(&self, case: &PowerSystemCase) -> (Vec<usize>, Vec<usize>) {
        let pos = case.bus_positions();
        let mut buses: Vec<usize> = Vec::new();
        let mut slot = Vec::with_capacity(self.units.len());
        for u in &self.units {
            let p = pos[&u.bus];
            let s = match buses.iter().position(|&b| b == p) {
                Some(s) => s,
                None => {
                    buses.push(p);
                    buses.len() - 1
                }
            };
            slot.push(s);
        }
        (buses, slot)
    }

    /// Network admittances with loads as constant impedances and unit
    /// Norton admittances; also returns the load voltages used.
    fn network_matrix(&self, case: &PowerSystemCase) -> Result<(YBus, Vec<f64>)> {
        let orig = self.case.bus_positions();
        let vm: Vec<f64> = case.buses.iter().map(|b| orig.get(&b.id).map_or(1.0, |&i| self.pf_vmag[i])).collect();
        let mut y = build_ybus(case, true, Some(&vm))?;
        let pos = case.bus_positions();
        for u in &self.units {
            let p = pos[&u.bus];
            y.add(p, p, u.norton_admittance());
        }
        Ok((y, vm))
    }

    fn topologies(&self, fault: Option<&FaultEvent>) -> Result<(PowerSystemCase, Option<BusId>, Topologies)> {
        let Some(f) = fault else {
            let (y, _) = self.network_matrix(&self.case)?;
            let net = Network::build(&y, &self.device_positions(&self.case).0)?;
            return Ok((self.case.clone(), None, Topologies { pre: net, during: None, post: None }));
        };
        f.check()?;
        let split = split_line_at(&self.case, f.line, f.location_pct)?;
        let case = split.case;
        let fpos = case.buses.len() - 1;
        let dev_pos = self.device_positions(&case).0;
        let (y_pre, vm) = self.network_matrix(&case)?;
        let pre = Network::build(&y_pre, &dev_pos)?;

        let z1 = thevenin_impedance(&y_pre, fpos)?;
        let mut y2 = build_sequence_ybus(&case, Sequence::Negative, &vm)?;
        // sequence networks see the same loads; machine terms are already in
        let z2 = thevenin_impedance(&y2, fpos)?;
        y2 = build_sequence_ybus(&case, Sequence::Zero, &vm)?;
        let z0 = thevenin_impedance(&y2, fpos)?;
        let shunt = fault_shunt_admittance(f.fault_type, z1, z2, z0)?;
        let mut y_f = y_pre.clone();
        y_f.add(fpos, fpos, shunt);
        let during = Network::build(&y_f, &dev_pos)?;

        let post = if f.trip_line {
            let mut tripped = case.clone();
            tripped.branches.retain(|b| !split.sections.contains(&b.id));
            let (mut y_t, _) = self.network_matrix(&tripped)?;
            // the dead fault bus is held at zero
            y_t.add(fpos, fpos, Complex64::new(1.0, 0.0));
            Network::build(&y_t, &dev_pos).map_err(|e| e.to_string())
        } else {
            Network::build(&y_pre, &dev_pos).map_err(|e| e.to_string())
        };
        Ok((case, Some(split.fault_bus), Topologies { pre, during: Some(during), post: Some(post) }))
    }

    /// Runs the model from its initial state, optionally through a fault.
    pub fn simulate(&self, fault: Option<&FaultEvent>, opts: &SimOptions) -> Result<Trajectory> {
        if !(opts.dt > 0.0 && opts.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", opts.dt)));
        }
        if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("end time must be positive, got {}", opts.t_end)));
        }
        if let Some(f) = fault {
            if f.t_clear > opts.t_end + TIME_EPS {
                return Err(Error::InvalidArgument(format!(
                    "fault clears at {} s, after the end of the run at {} s",
                    f.t_clear, opts.t_end
                )));
            }
        }
        let grid = time_grid(opts, fault)?;
        let (sim_case, fault_bus, mut topo) = self.topologies(fault)?;
        let dev_pos = self.device_positions(&sim_case);
        let pre = std::mem::replace(&mut topo.pre, Network { n: 0, m: 0, triplets: vec![], zfull: vec![], zdd: vec![] });
        let mut run = Run::new(self, pre, dev_pos, opts);
        let mut rec = Recorder::new(self, &sim_case, fault, fault_bus, opts.t_end);

        run.settle_network(&run.x.clone(), 50);
        run.refresh_derivatives();
        rec.push(&run, 0.0);

        let mut termination = Termination::Completed;
        for w in grid.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            run.step(t1 - t0);
            if let Some(cause) = run.check_divergence() {
                rec.push(&run, t1);
                termination = Termination::Diverged { t: t1, cause };
                break;
            }
            let mut switched = false;
            if let Some(f) = fault {
                if (t1 - f.t_apply).abs() < TIME_EPS {
                    if let Some(net) = topo.during.take() {
                        run.net = net;
                        switched = true;
                    }
                } else if (t1 - f.t_clear).abs() < TIME_EPS {
                    match topo.post.take() {
                        Some(Ok(net)) => {
                            run.net = net;
                            switched = true;
                        }
                        Some(Err(cause)) => {
                            rec.push(&run, t1);
                            termination =
                                Termination::Diverged { t: t1, cause: format!("post-clearing network: {cause}") };
                            break;
                        }
                        None => {}
                    }
                }
            }
            if run.update_crowbars(t1) {
                switched = true;
            }
            if switched {
                run.settle_network(&run.x.clone(), 20);
                run.refresh_derivatives();
                run.jacobian_h = None;
            }
            run.record_residual();
            rec.push(&run, t1);
            if let Some(cause) = run.check_divergence() {
                termination = Termination::Diverged { t: t1, cause };
                break;
            }
        }
        Ok(rec.finish(termination, run.max_residual, run.unconverged))
    }
}

/// Uniform grid with fault instants inserted.
fn time_grid(opts: &SimOptions, fault: Option<&FaultEvent>) -> Result<Vec<f64>> {
    let steps = opts.t_end / opts.dt;
    let n = steps.round();
    if (steps - n).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "end time {} s is not a whole number of {} s steps",
            opts.t_end, opts.dt
        )));
    }
    let n = n as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * opts.dt).collect();
    if let Some(f) = fault {
        for t in [f.t_apply, f.t_clear] {
            let k = (t / opts.dt).round();
            let on_grid = (t - k * opts.dt).abs() < TIME_EPS;
            if on_grid {
                continue;
            }
            if opts.alignment == EventAlignment::Strict {
                return Err(Error::InvalidArgument(format!(
                    "event at {t} s does not fall on the {} s grid",
                    opts.dt
                )));
            }
            grid.push(t);
        }
        grid.sort_by(f64::total_cmp);
        // snap near-grid events onto the grid value so comparisons are exact
        for g in grid.iter_mut() {
            for t in [f.t_apply, f.t_clear] {
                if (*g - t).abs() < TIME_EPS {
                    *g = t;
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Clone, Copy)]
struct Crowbar {
    on: bool,
    since: f64,
}

/// Integration state of one run.
struct Run<'a> {
    model: &'a DynamicModel,
    net: Network,
    dev_pos: Vec<usize>,
    slot: Vec<usize>,
    tol: f64,
    max_iter: usize,
    x: Vec<f64>,
    f: Vec<f64>,
    /// Voltage at each unit bus.
    v_dev: Vec<Complex64>,
    i_dev: Vec<Complex64>,
    v_bus: Vec<Complex64>,
    crowbar: Vec<Crowbar>,
    /// Inverse iteration matrices `(I - h/2 J)^-1`, one per unit.
    m_inv: Vec<DMatrix<f64>>,
    jacobian_h: Option<f64>,
    slow_steps: usize,
    max_residual: f64,
    unconverged: usize,
    // scratch
    x_prev: Vec<f64>,
    f_prev: Vec<f64>,
    f_tmp: Vec<f64>,
}

impl<'a> Run<'a> {
    fn new(model: &'a DynamicModel, net: Network, (dev_pos, slot): (Vec<usize>, Vec<usize>), opts: &SimOptions) -> Self {
        let nx = model.x0.len();
        let m = dev_pos.len();
        let n = net.n;
        // unit buses keep their case positions; a fault bus is appended
        let v_dev = dev_pos.iter().map(|&p| model.pf_v.get(p).copied().unwrap_or(Complex64::new(1.0, 0.0))).collect();
        Run {
            model,
            net,
            dev_pos,
            slot,
            tol: opts.interface_tol,
            max_iter: opts.max_interface_iter.max(1),
            x: model.x0.clone(),
            f: vec![0.0; nx],
            v_dev,
            i_dev: vec![Complex64::default(); m],
            v_bus: vec![Complex64::default(); n],
            crowbar: vec![Crowbar { on: false, since: 0.0 }; model.units.len()],
            m_inv: Vec::new(),
            jacobian_h: None,
            slow_steps: 0,
            max_residual: 0.0,
            unconverged: 0,
            x_prev: vec![0.0; nx],
            f_prev: vec![0.0; nx],
            f_tmp: vec![0.0; nx],
        }
    }

    fn unit_voltage(&self, k: usize) -> Complex64 {
        self.v_dev[self.slot[k]]
    }

    fn currents(&mut self, x: &[f64]) {
        self.i_dev.iter_mut().for_each(|c| *c = Complex64::default());
        let wb = self.model.omega_base;
        for (k, u) in self.model.units.iter().enumerate() {
            let v = self.v_dev[self.slot[k]];
            self.i_dev[self.slot[k]] += u.injection(&x[u.state_range()], v, self.crowbar[k].on, wb);
        }
    }

    /// Solves the network for fixed states. Synchronous units inject
    /// voltage-independent currents; converter currents need a few passes.
    fn settle_network(&mut self, x: &[f64], extra_passes: usize) {
        let mut next = vec![Complex64::default(); self.v_dev.len()];
        for pass in 0..=extra_passes.max(1) {
            self.currents(x);
            self.net.dev_voltages(&self.i_dev, &mut next);
            let change = next.iter().zip(&self.v_dev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            self.v_dev.copy_from_slice(&next);
            if pass > 0 && change < 1e-13 {
                break;
            }
        }
        self.currents(x);
        self.net.bus_voltages(&self.i_dev, &mut self.v_bus);
    }

    fn eval(&self, x: &[f64], f: &mut [f64]) {
        let wb = self.model.omega_base;
        for (k, u) in self.model.units.iter().enumerate() {
            let r = u.state_range();
            u.derivatives(&x[r.clone()], self.unit_voltage(k), self.crowbar[k].on, wb, &mut f[r]);
        }
    }

    fn refresh_derivatives(&mut self) {
        let mut f = std::mem::take(&mut self.f);
        self.eval(&self.x, &mut f);
        self.f = f;
    }

    /// Iteration matrices per unit. The unit's own current feeds back on its
    /// terminal voltage through the driving-point impedance of its bus, so
    /// the derivatives are differentiated along that path too.
    fn refresh_jacobians(&mut self, h: f64, x: &[f64]) {
        let wb = self.model.omega_base;
        let m_dev = self.net.m;
        self.m_inv.clear();
        for (k, u) in self.model.units.iter().enumerate() {
            let r = u.state_range();
            let len = r.len();
            let v = self.unit_voltage(k);
            let z_self = self.net.zdd[self.slot[k] * m_dev + self.slot[k]];
            let cb = self.crowbar[k].on;
            let mut xs = x[r.clone()].to_vec();
            let i0 = u.injection(&xs, v, cb, wb);
            let mut f0 = vec![0.0; len];
            let mut f1 = vec![0.0; len];
            u.derivatives(&xs, v, cb, wb, &mut f0);
            let mut m = DMatrix::<f64>::identity(len, len);
            for c in 0..len {
                let eps = 1e-7 * xs[c].abs().max(1.0);
                let keep = xs[c];
                xs[c] += eps;
                let vp = v + z_self * (u.injection(&xs, v, cb, wb) - i0);
                u.derivatives(&xs, vp, cb, wb, &mut f1);
                xs[c] = keep;
                for rr in 0..len {
                    m[(rr, c)] -= 0.5 * h * (f1[rr] - f0[rr]) / eps;
                }
            }
            let inv = m.try_inverse().unwrap_or_else(|| DMatrix::identity(len, len));
            self.m_inv.push(inv);
        }
        self.jacobian_h = Some(h);
    }

    /// One trapezoidal step of length `h` from the current state.
    fn step(&mut self, h: f64) {
        let nx = self.x.len();
        self.x_prev.copy_from_slice(&self.x);
        self.f_prev.copy_from_slice(&self.f);
        for i in 0..nx {
            self.x[i] = self.x_prev[i] + h * self.f_prev[i];
        }
        for u in &self.model.units {
            u.clamp(&mut self.x[u.state_range()]);
        }
        let needs_jac = match self.jacobian_h {
            Some(hj) => (hj - h).abs() > 1e-12 * h || self.slow_steps > 0,
            None => true,
        };
        if needs_jac {
            let x = self.x.clone();
            self.settle_network(&x, 0);
            self.refresh_jacobians(h, &x);
            self.slow_steps = 0;
        }

        let mut converged = false;
        let mut iters = 0;
        let mut next = vec![Complex64::default(); self.v_dev.len()];
        for attempt in 0..2 {
            for _ in 0..self.max_iter {
                iters += 1;
                // device corrections at the present terminal voltages
                let mut f = std::mem::take(&mut self.f_tmp);
                self.eval(&self.x.clone(), &mut f);
                let mut dx_max: f64 = 0.0;
                for (k, u) in self.model.units.iter().enumerate() {
                    let r = u.state_range();
                    let res = DVector::from_iterator(
                        r.len(),
                        r.clone().map(|i| self.x[i] - self.x_prev[i] - 0.5 * h * (self.f_prev[i] + f[i])),
                    );
                    let dx = &self.m_inv[k] * res;
                    for (j, i) in r.clone().enumerate() {
                        self.x[i] -= dx[j];
                        dx_max = dx_max.max(dx[j].abs());
                    }
                    u.clamp(&mut self.x[r]);
                }
                self.f_tmp = f;
                // network update
                self.currents(&self.x.clone());
                self.net.dev_voltages(&self.i_dev, &mut next);
                let dv = next.iter().zip(&self.v_dev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                self.v_dev.copy_from_slice(&next);
                if dv < self.tol && dx_max < self.tol {
                    converged = true;
                    break;
                }
            }
            if converged || attempt == 1 {
                break;
            }
            let x = self.x.clone();
            self.refresh_jacobians(h, &x);
        }
        if !converged {
            self.unconverged += 1;
        }
        if iters > 8 {
            self.slow_steps += 1;
        }
        self.currents(&self.x.clone());
        self.net.bus_voltages(&self.i_dev, &mut self.v_bus);
        self.refresh_derivatives();
    }

    fn record_residual(&mut self) {
        let r = self.net.residual(&self.v_bus, &self.i_dev, &self.dev_pos);
        self.max_residual = self.max_residual.max(r);
    }

    /// Crowbar switching on the accepted state; true when any unit changed.
    fn update_crowbars(&mut self, t: f64) -> bool {
        let mut changed = false;
        for (k, u) in self.model.units.iter().enumerate() {
            let UnitModel::Dfig { params, .. } = &u.model else { continue };
            let vm = self.unit_voltage(k).norm();
            let cb = &mut self.crowbar[k];
            if !cb.on && vm < params.crowbar_on {
                *cb = Crowbar { on: true, since: t };
                changed = true;
            } else if cb.on && vm > params.crowbar_off && t - cb.since >= params.crowbar_min_time - TIME_EPS {
                cb.on = false;
                changed = true;
            }
        }
        changed
    }

    fn check_divergence(&self) -> Option<String> {
        if let Some(i) = self.x.iter().position(|v| !v.is_finite()) {
            let u = self.model.units.iter().find(|u| u.state_range().contains(&i));
            return Some(format!("non-finite state in unit {}", u.map_or("?", |u| u.id.as_str())));
        }
        if self.v_bus.iter().any(|v| !v.is_finite()) {
            return Some("non-finite bus voltage".into());
        }
        let spread = self.angle_spread_deg();
        if spread > DIVERGENCE_ANGLE_DEG {
            return Some(format!("machine angle separation {spread:.0} deg exceeds {DIVERGENCE_ANGLE_DEG} deg"));
        }
        None
    }

    fn angle_spread_deg(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for u in self.model.units.iter().filter(|u| u.is_synchronous()) {
            let d = self.x[u.offset];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi >= lo {
            (hi - lo).to_degrees()
        } else {
            0.0
        }
    }
}

struct Recorder {
    traj: Trajectory,
    sg: Vec<usize>,
    dfig: Vec<usize>,
    bus_rows: Vec<usize>,
}

impl Recorder {
    fn new(
        model: &DynamicModel,
        sim_case: &PowerSystemCase,
        fault: Option<&FaultEvent>,
        fault_bus: Option<BusId>,
        t_end: f64,
    ) -> Self {
        let sg: Vec<usize> = (0..model.units.len()).filter(|&k| model.units[k].is_synchronous()).collect();
        let dfig: Vec<usize> = (0..model.units.len()).filter(|&k| !model.units[k].is_synchronous()).collect();
        let bus_ids: Vec<BusId> = sim_case.buses.iter().map(|b| b.id).collect();
        let cap = (t_end / 0.005) as usize + 4;
        let series = |n: usize| vec![Vec::with_capacity(cap); n];
        let traj = Trajectory {
            time: Vec::with_capacity(cap),
            nominal_hz: model.case.system.nominal_hz,
            sg_ids: sg.iter().map(|&k| model.units[k].id.clone()).collect(),
            delta_deg: series(sg.len()),
            freq_hz: series(sg.len()),
            vmag: series(bus_ids.len()),
            dfig_ids: dfig.iter().map(|&k| model.units[k].id.clone()).collect(),
            dfig_omega_r: series(dfig.len()),
            dfig_p_w: series(dfig.len()),
            dfig_q_w: series(dfig.len()),
            bus_ids,
            t_apply: fault.map(|f| f.t_apply),
            t_clear: fault.map(|f| f.t_clear),
            t_end,
            fault_bus,
            termination: Termination::Completed,
            lost_synchronism: false,
            max_network_residual: 0.0,
            unconverged_steps: 0,
        };
        let bus_rows = (0..traj.bus_ids.len()).collect();
        Recorder { traj, sg, dfig, bus_rows }
    }

    fn push(&mut self, run: &Run, t: f64) {
        let tr = &mut self.traj;
        tr.time.push(t);
        let hz = tr.nominal_hz;
        for (c, &k) in self.sg.iter().enumerate() {
            let off = run.model.units[k].offset;
            tr.delta_deg[c].push(run.x[off].to_degrees());
            tr.freq_hz[c].push(hz * run.x[off + 1]);
        }
        for (c, &r) in self.bus_rows.iter().enumerate() {
            tr.vmag[c].push(run.v_bus[r].norm());
        }
        let wb = run.model.omega_base;
        for (c, &k) in self.dfig.iter().enumerate() {
            let u = &run.model.units[k];
            let xs = &run.x[u.state_range()];
            let (p, q) = u.dfig_output(xs, run.unit_voltage(k), run.crowbar[k].on, wb);
            tr.dfig_omega_r[c].push(xs[2]);
            tr.dfig_p_w[c].push(p);
            tr.dfig_q_w[c].push(q);
        }
        if run.angle_spread_deg() > SYNC_LOSS_ANGLE_DEG {
            tr.lost_synchronism = true;
        }
    }

    fn finish(mut self, termination: Termination, residual: f64, unconverged: usize) -> Trajectory {
        self.traj.termination = termination;
        self.traj.max_network_residual = residual;
        self.traj.unconverged_steps = unconverged;
        self.traj
    }
}
