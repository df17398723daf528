#![allow(dead_code)]

use num_complex::Complex64;
use stabrisk::dynsim::{FaultEvent, FaultType};
use stabrisk::metrics::Severities;
use stabrisk::netmodel::{BranchKind, BusKind, PowerSystemCase};
use stabrisk::riskmc::{Evaluation, FaultDistributions};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Dense Y-bus built from the raw branch data with the hyperbolic line
/// equivalent written in characteristic-impedance form.
pub fn reference_ybus(case: &PowerSystemCase) -> Vec<Vec<Complex64>> {
    let n = case.buses.len();
    let pos = case.bus_positions();
    let mut y = vec![vec![Complex64::default(); n]; n];
    for (i, b) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    for br in &case.branches {
        let z = Complex64::new(br.r, br.x);
        let (ys, yh) = match br.kind {
            BranchKind::Line if br.b != 0.0 => {
                let ysh = J * br.b;
                let zc = (z / ysh).sqrt();
                let gl = (z * ysh).sqrt();
                (1.0 / (zc * gl.sinh()), (gl / 2.0).tanh() / zc)
            }
            _ => (1.0 / z, J * br.b / 2.0),
        };
        let (f, t, a) = (pos[&br.from], pos[&br.to], br.tap);
        y[f][f] += (ys + yh) / (a * a);
        y[t][t] += ys + yh;
        y[f][t] -= ys / a;
        y[t][f] -= ys / a;
    }
    y
}

/// Gauss-Seidel power flow with PV voltage-magnitude reset. Returns the
/// bus voltages in case order once the largest power mismatch is below `tol`.
pub fn gauss_seidel(case: &PowerSystemCase, tol: f64, max_sweeps: usize) -> Vec<Complex64> {
    let n = case.buses.len();
    let y = reference_ybus(case);
    let pos = case.bus_positions();
    let base = case.system.mva_base;
    let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
    for g in &case.generators {
        p[pos[&g.bus]] += g.p_mw / base;
    }
    for l in &case.loads {
        p[pos[&l.bus]] -= l.p_mw / base;
        q[pos[&l.bus]] -= l.q_mvar / base;
    }
    let kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();
    let vset: Vec<f64> = case.buses.iter().map(|b| b.v_setpoint.unwrap_or(1.0)).collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(if kinds[i] == BusKind::Pq { 1.0 } else { vset[i] }, 0.0))
        .collect();
    let injection = |v: &[Complex64], i: usize| -> Complex64 {
        let cur: Complex64 = (0..n).map(|k| y[i][k] * v[k]).sum();
        v[i] * cur.conj()
    };
    for _ in 0..max_sweeps {
        for i in 0..n {
            if kinds[i] == BusKind::Slack {
                continue;
            }
            let qi = if kinds[i] == BusKind::Pv { injection(&v, i).im } else { q[i] };
            let s = Complex64::new(p[i], qi);
            let others: Complex64 = (0..n).filter(|&k| k != i).map(|k| y[i][k] * v[k]).sum();
            let mut vi = (s.conj() / v[i].conj() - others) / y[i][i];
            if kinds[i] == BusKind::Pv {
                vi = vi / vi.norm() * vset[i];
            }
            v[i] = vi;
        }
        let worst = (0..n)
            .filter(|&i| kinds[i] != BusKind::Slack)
            .map(|i| {
                let s = injection(&v, i);
                let dq = if kinds[i] == BusKind::Pq { (s.im - q[i]).abs() } else { 0.0 };
                (s.re - p[i]).abs().max(dq)
            })
            .fold(0.0, f64::max);
        if worst < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel did not reach {tol}");
}

/// Closed-form severity of a fault tuple, used in place of simulation.
pub fn synthetic_severity(f: &FaultEvent) -> Severities {
    let t = match f.fault_type {
        FaultType::Lll => 1.0,
        FaultType::Llg => 0.6,
        FaultType::Ll => 0.4,
        FaultType::Lg => 0.1,
    };
    let x = f.location_pct as f64 / 100.0;
    let line = (f.line % 7) as f64 / 7.0;
    Severities {
        sev_a: t * (1.0 - x) * (0.5 + line),
        sev_v: 0.3 * t * x * x + 0.05 * line,
        sev_f: 0.2 * t * (1.0 + (6.0 * x).sin()),
    }
}

pub fn synthetic_evaluation(f: &FaultEvent) -> stabrisk::Result<Evaluation> {
    Ok(Evaluation { severities: synthetic_severity(f), diverged: false })
}

/// Exact expectation of the synthetic severities over every line, location
/// and type, returned as (R_AM, R_VM, R_FM).
pub fn enumerate_expectation(lines: &[u32], dist: &FaultDistributions) -> (f64, f64, f64) {
    let (mut a, mut v, mut f) = (0.0, 0.0, 0.0);
    for &line in lines {
        for loc in 1..=100u8 {
            for t in FaultType::ALL {
                let w = dist.type_probability(t) / (lines.len() as f64 * 100.0);
                let ev = FaultEvent {
                    line,
                    location_pct: loc,
                    fault_type: t,
                    t_apply: 1.0,
                    t_clear: 1.2,
                    trip_line: true,
                };
                let s = synthetic_severity(&ev);
                a += w * s.sev_a;
                v += w * s.sev_v;
                f += w * s.sev_f;
            }
        }
    }
    (a, v, f)
}

/// Two-area system small enough for fast end-to-end runs: two machines
/// joined by a double line, with a load at each end.
pub fn two_machine_case() -> PowerSystemCase {
    let base = PowerSystemCase::ieee39();
    let g1 = base.generator("G2").unwrap().clone();
    let g2 = base.generator("G3").unwrap().clone();
    let text = r#"
[system]
name = "two machine"
mva_base = 100.0

[[bus]]
id = 1
base_kv = 20.0
kind = "slack"
v_setpoint = 1.02

[[bus]]
id = 2
base_kv = 345.0
kind = "pq"

[[bus]]
id = 3
base_kv = 345.0
kind = "pq"

[[bus]]
id = 4
base_kv = 20.0
kind = "pv"
v_setpoint = 1.01

[[branch]]
id = 1
from = 1
to = 2
r = 0.0
x = 0.02
kind = "transformer"

[[branch]]
id = 2
from = 2
to = 3
r = 0.002
x = 0.03
b = 0.4
kind = "line"

[[branch]]
id = 3
from = 2
to = 3
r = 0.002
x = 0.03
b = 0.4
kind = "line"

[[branch]]
id = 4
from = 4
to = 3
r = 0.0
x = 0.02
kind = "transformer"

[[load]]
bus = 2
p_mw = 500.0
q_mvar = 100.0

[[load]]
bus = 3
p_mw = 700.0
q_mvar = 150.0
"#;
    let mut case = PowerSystemCase::from_toml_str(text).unwrap();
    let mut a = g1;
    a.id = "G1".into();
    a.bus = 1;
    a.p_mw = 600.0;
    a.v_setpoint = Some(1.02);
    let mut b = g2;
    b.id = "G2".into();
    b.bus = 4;
    b.p_mw = 600.0;
    b.v_setpoint = Some(1.01);
    case.generators = vec![a, b];
    case
}
