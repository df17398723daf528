mod common;

use stabrisk::dynsim::{init_dynamics, FaultEvent, FaultType, SimOptions, Termination, Trajectory};
use stabrisk::metrics::{evaluate_trajectory, MetricsConfig};
use stabrisk::netmodel::{BranchId, PowerSystemCase};
use stabrisk::powerflow::solve_power_flow;
use stabrisk::scenario::{apply_wind_penetration, replacement_set};

fn line(case: &PowerSystemCase, from: u32, to: u32) -> BranchId {
    case.branches.iter().find(|b| (b.from, b.to) == (from, to)).unwrap().id
}

fn fault(line: BranchId, kind: FaultType, fct: f64) -> FaultEvent {
    FaultEvent { line, location_pct: 50, fault_type: kind, t_apply: 1.0, t_clear: 1.0 + fct, trip_line: true }
}

fn simulate(case: &PowerSystemCase, f: Option<&FaultEvent>, dt: f64) -> Trajectory {
    let pf = solve_power_flow(case, 1e-10, 20).unwrap();
    let opts = SimOptions { dt, ..SimOptions::default() };
    init_dynamics(case, &pf).unwrap().simulate(f, &opts).unwrap()
}

fn max_drift(channels: &[Vec<f64>]) -> f64 {
    channels.iter().map(|c| c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max)
}

#[test]
fn undisturbed_run_stays_at_equilibrium() {
    let case = PowerSystemCase::ieee39();
    let tr = simulate(&case, None, 0.005);
    assert_eq!(tr.termination, Termination::Completed);
    assert!(max_drift(&tr.delta_deg).to_radians() < 1e-6);
    assert!(max_drift(&tr.vmag) < 1e-6);
    assert!(max_drift(&tr.freq_hz) < 1e-6);
    assert!(tr.max_network_residual < 1e-6);
}

#[test]
fn undisturbed_run_with_wind_stays_at_equilibrium() {
    let base = PowerSystemCase::ieee39();
    let case = apply_wind_penetration(&base, &replacement_set(50).unwrap()).unwrap();
    let pf = solve_power_flow(&case, 1e-10, 20).unwrap();
    assert!(init_dynamics(&case, &pf).unwrap().initial_residual().unwrap() < 1e-8);
    let tr = simulate(&case, None, 0.005);
    assert_eq!(tr.termination, Termination::Completed);
    assert!(max_drift(&tr.delta_deg) < 1e-6);
    assert!(max_drift(&tr.vmag) < 1e-6);
    assert!(max_drift(&tr.dfig_p_w) < 1e-6);
    for (k, id) in tr.dfig_ids.iter().enumerate() {
        let g = case.generator(id).unwrap();
        let expect = if g.bus == case.slack_bus().unwrap().id {
            stabrisk::powerflow::generator_outputs(&case, &pf)[case.generators.iter().position(|x| x.id == *id).unwrap()].re
        } else {
            g.p_mw / case.system.mva_base
        };
        assert!((tr.dfig_p_w[k][0] - expect).abs() < 1e-8, "{id}: {} vs {expect}", tr.dfig_p_w[k][0]);
    }
}

#[test]
fn three_phase_fault_collapses_fault_point_voltage() {
    let case = PowerSystemCase::ieee39();
    let f = fault(line(&case, 16, 17), FaultType::Lll, 0.1);
    let tr = simulate(&case, Some(&f), 0.005);
    let fb = tr.fault_bus.unwrap();
    let v = tr.bus_channel(fb).unwrap();
    let during: Vec<f64> =
        tr.time.iter().zip(v).filter(|(t, _)| **t > 1.0 + 1e-9 && **t < 1.1 - 1e-9).map(|(_, v)| *v).collect();
    assert!(!during.is_empty());
    assert!(during.iter().all(|v| *v < 0.01), "{during:?}");
    assert_eq!(tr.termination, Termination::Completed);
    let m = evaluate_trajectory(&tr, &MetricsConfig::default()).unwrap();
    assert!(m.angle.tsi > 0.0);
}

#[test]
fn halving_the_step_barely_moves_the_swing() {
    let case = PowerSystemCase::ieee39();
    let f = fault(line(&case, 16, 17), FaultType::Lll, 0.1);
    let cfg = MetricsConfig::default();
    let a = evaluate_trajectory(&simulate(&case, Some(&f), 0.005), &cfg).unwrap();
    let b = evaluate_trajectory(&simulate(&case, Some(&f), 0.0025), &cfg).unwrap();
    assert!((a.angle.delta_max_deg - b.angle.delta_max_deg).abs() < 0.5, "{} vs {}", a.angle.delta_max_deg, b.angle.delta_max_deg);
}

#[test]
fn unbalanced_faults_are_milder_than_three_phase() {
    let case = PowerSystemCase::ieee39();
    let l = line(&case, 16, 17);
    let cfg = MetricsConfig::default();
    for fct in [0.08, 0.1, 0.12] {
        let d: Vec<f64> = FaultType::ALL
            .iter()
            .map(|&k| evaluate_trajectory(&simulate(&case, Some(&fault(l, k, fct)), 0.005), &cfg).unwrap().angle.delta_max_deg)
            .collect();
        assert!(d.windows(2).all(|w| w[0] > w[1]), "fct {fct}: {d:?}");
    }
}

#[test]
fn sustained_fault_diverges() {
    let case = PowerSystemCase::ieee39();
    let f = fault(line(&case, 16, 17), FaultType::Lll, 8.0);
    let tr = simulate(&case, Some(&f), 0.005);
    assert!(tr.termination.is_diverged(), "{:?}", tr.termination);
    assert!(tr.lost_synchronism);
    let m = evaluate_trajectory(&tr, &MetricsConfig::default()).unwrap();
    assert_eq!((m.angle.tsi, m.angle.sev_a), (-1.0, 1.0));
}

#[test]
fn trajectory_csv_has_one_row_per_sample() {
    let case = common::two_machine_case();
    let tr = simulate(&case, None, 0.01);
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t_s,delta_deg:G1,delta_deg:G2,"), "{header}");
    assert_eq!(lines.count(), tr.len());
}
