//! Newton-Raphson AC power flow in polar form.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{build_ybus, BusId, BusKind, PowerSystemCase};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Switch PV buses to PQ when a generator leaves its capability circle.
    /// Off by default: the bundled data carries no reactive limits.
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 20, enforce_q_limits: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub bus_ids: Vec<BusId>,
    pub v_mag: Vec<f64>,
    /// Radians; the slack angle is zero.
    pub v_ang: Vec<f64>,
    /// Net injections in per unit on the system base.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, i: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag[i], self.v_ang[i])
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        (0..self.v_mag.len()).map(|i| self.voltage(i)).collect()
    }

    /// Total active losses (sum of injections), per unit.
    pub fn losses_pu(&self) -> f64 {
        self.p_inj.iter().sum()
    }

    /// Tabular export: `bus,v_mag_pu,v_ang_deg,p_pu,q_pu`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("bus,v_mag_pu,v_ang_deg,p_pu,q_pu\n");
        for i in 0..self.bus_ids.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.bus_ids[i],
                self.v_mag[i],
                self.v_ang[i].to_degrees(),
                self.p_inj[i],
                self.q_inj[i]
            );
        }
        out
    }
}

/// Solves with default options and the given tolerance and iteration cap.
pub fn solve_power_flow(case: &PowerSystemCase, tol: f64, max_iter: usize) -> Result<PowerFlowSolution> {
    solve_power_flow_with(case, &PowerFlowOptions { tol, max_iter, ..Default::default() })
}

/// Scheduled (P, Q) per bus in per unit: generation minus load. Q is only
/// meaningful on PQ buses.
fn scheduled_injections(case: &PowerSystemCase) -> (Vec<f64>, Vec<f64>) {
    let pos = case.bus_positions();
    let base = case.system.mva_base;
    let n = case.buses.len();
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for g in &case.generators {
        p[pos[&g.bus]] += g.p_mw / base;
    }
    for l in &case.loads {
        p[pos[&l.bus]] -= l.p_mw / base;
        q[pos[&l.bus]] -= l.q_mvar / base;
    }
    (p, q)
}

fn power_injections(y: &DMatrix<Complex64>, v: &DVector<Complex64>) -> (DVector<Complex64>, DVector<Complex64>) {
    let i = y * v;
    let s = v.component_mul(&i.map(|c| c.conj()));
    (i, s)
}

pub fn solve_power_flow_with(case: &PowerSystemCase, opts: &PowerFlowOptions) -> Result<PowerFlowSolution> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let n = case.buses.len();
    let y = build_ybus(case, false, None)?.to_dense();
    let (p_sched, mut q_sched) = scheduled_injections(case);
    let mut kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();

    let mut vm: Vec<f64> = case.buses.iter().map(|b| b.v_setpoint.filter(|_| b.kind != BusKind::Pq).unwrap_or(1.0)).collect();
    let mut va = vec![0.0; n];

    let q_cap: Vec<Option<(f64, f64)>> = {
        let pos = case.bus_positions();
        let base = case.system.mva_base;
        let mut cap = vec![None; n];
        for g in &case.generators {
            let i = pos[&g.bus];
            let qmax = (g.mva_rating.powi(2) - g.p_mw.powi(2)).max(0.0).sqrt() / base;
            let load_q: f64 = case.loads.iter().filter(|l| l.bus == g.bus).map(|l| l.q_mvar / base).sum();
            let (lo, hi) = cap[i].unwrap_or((-load_q, -load_q));
            cap[i] = Some((lo - qmax, hi + qmax));
        }
        cap
    };

    let mut iterations = 0;
    loop {
        let pv: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pv).collect();
        let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
        let ang_idx: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();
        let npv_pq = ang_idx.len();
        let dim = npv_pq + pq.len();

        let mut converged = false;
        let mut worst = (0usize, f64::INFINITY);
        for _ in 0..=opts.max_iter {
            let v = DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(vm[i], va[i])));
            let (ibus, s) = power_injections(&y, &v);
            let mut f = DVector::zeros(dim);
            worst = (0, 0.0);
            for (k, &i) in ang_idx.iter().enumerate() {
                f[k] = s[i].re - p_sched[i];
                if f[k].abs() > worst.1 {
                    worst = (i, f[k].abs());
                }
            }
            for (k, &i) in pq.iter().enumerate() {
                f[npv_pq + k] = s[i].im - q_sched[i];
                if f[npv_pq + k].abs() > worst.1 {
                    worst = (i, f[npv_pq + k].abs());
                }
            }
            if worst.1 <= opts.tol {
                converged = true;
                break;
            }
            if iterations == opts.max_iter {
                break;
            }
            iterations += 1;

            // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
            // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
            let vnorm: Vec<Complex64> = (0..n).map(|i| v[i] / vm[i]).collect();
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            let ds = |r: usize, c: usize| -> (Complex64, Complex64) {
                let mut dva = -Complex64::i() * v[r] * (y[(r, c)] * v[c]).conj();
                let mut dvm = v[r] * (y[(r, c)] * vnorm[c]).conj();
                if r == c {
                    dva += Complex64::i() * v[r] * ibus[r].conj();
                    dvm += ibus[r].conj() * vnorm[r];
                }
                (dva, dvm)
            };
            for (ri, &r) in ang_idx.iter().enumerate() {
                for (ci, &c) in ang_idx.iter().enumerate() {
                    jac[(ri, ci)] = ds(r, c).0.re;
                }
                for (ci, &c) in pq.iter().enumerate() {
                    jac[(ri, npv_pq + ci)] = ds(r, c).1.re;
                }
            }
            for (ri, &r) in pq.iter().enumerate() {
                for (ci, &c) in ang_idx.iter().enumerate() {
                    jac[(npv_pq + ri, ci)] = ds(r, c).0.im;
                }
                for (ci, &c) in pq.iter().enumerate() {
                    jac[(npv_pq + ri, npv_pq + ci)] = ds(r, c).1.im;
                }
            }
            let dx = jac
                .lu()
                .solve(&(-f))
                .filter(|d| d.iter().all(|x| x.is_finite()))
                .ok_or(Error::SingularJacobian { iteration: iterations })?;
            for (k, &i) in ang_idx.iter().enumerate() {
                va[i] += dx[k];
            }
            for (k, &i) in pq.iter().enumerate() {
                vm[i] += dx[npv_pq + k];
            }
        }
        if !converged {
            return Err(Error::PowerFlowDiverged {
                iterations,
                bus: case.buses[worst.0].id,
                mismatch: worst.1,
            });
        }

        let v = DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(vm[i], va[i])));
        let (_, s) = power_injections(&y, &v);
        if opts.enforce_q_limits {
            let mut switched = false;
            for &i in &pv {
                if let Some((lo, hi)) = q_cap[i] {
                    let q = s[i].im;
                    if q > hi || q < lo {
                        kinds[i] = BusKind::Pq;
                        q_sched[i] = q.clamp(lo, hi);
                        switched = true;
                    }
                }
            }
            if switched {
                continue;
            }
        }
        return Ok(PowerFlowSolution {
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            v_mag: vm,
            v_ang: va,
            p_inj: s.iter().map(|c| c.re).collect(),
            q_inj: s.iter().map(|c| c.im).collect(),
            iterations,
            max_mismatch: worst.1,
        });
    }
}

/// Complex output (system-base pu) of each generator in case order. Units
/// sharing a bus split P by dispatch and Q by MVA rating.
pub fn generator_outputs(case: &PowerSystemCase, sol: &PowerFlowSolution) -> Vec<Complex64> {
    let pos = case.bus_positions();
    let base = case.system.mva_base;
    case.generators
        .iter()
        .map(|g| {
            let i = pos[&g.bus];
            let (lp, lq) = case
                .loads
                .iter()
                .filter(|l| l.bus == g.bus)
                .fold((0.0, 0.0), |(p, q), l| (p + l.p_mw / base, q + l.q_mvar / base));
            let peers: Vec<_> = case.generators.iter().filter(|o| o.bus == g.bus).collect();
            let p_total = sol.p_inj[i] + lp;
            let q_total = sol.q_inj[i] + lq;
            let (p_share, q_share) = if peers.len() == 1 {
                (1.0, 1.0)
            } else {
                let pd: f64 = peers.iter().map(|o| o.p_mw).sum();
                let rating: f64 = peers.iter().map(|o| o.mva_rating).sum();
                let p_share = if pd > 0.0 { g.p_mw / pd } else { 1.0 / peers.len() as f64 };
                (p_share, g.mva_rating / rating)
            };
            Complex64::new(p_total * p_share, q_total * q_share)
        })
        .collect()
}

/// Balance check of a solved case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchReport {
    pub slack_generator: String,
    pub slack_output_mw: f64,
    pub slack_rating_mva: f64,
    pub total_generation_mw: f64,
    pub total_load_mw: f64,
    pub losses_mw: f64,
    pub warnings: Vec<String>,
}

pub fn verify_dispatch(case: &PowerSystemCase, sol: &PowerFlowSolution) -> DispatchReport {
    let base = case.system.mva_base;
    let outputs = generator_outputs(case, sol);
    let slack_bus = case.slack_bus().map(|b| b.id);
    let mut warnings = Vec::new();
    let mut slack = (String::new(), 0.0, 0.0);
    for (g, s) in case.generators.iter().zip(&outputs) {
        let mva = s.norm() * base;
        if Some(g.bus) == slack_bus {
            slack = (g.id.clone(), s.re * base, g.mva_rating);
            if mva > g.mva_rating {
                warnings.push(format!(
                    "slack generator {} output {:.1} MVA exceeds its rating {:.1} MVA",
                    g.id, mva, g.mva_rating
                ));
            }
        }
    }
    let total_generation_mw: f64 = outputs.iter().map(|s| s.re * base).sum();
    DispatchReport {
        slack_generator: slack.0,
        slack_output_mw: slack.1,
        slack_rating_mva: slack.2,
        total_generation_mw,
        total_load_mw: case.total_load_mw(),
        losses_mw: sol.losses_pu() * base,
        warnings,
    }
}
