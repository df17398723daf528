//! Stability index and severity functions evaluated on a trajectory.

use serde::{Deserialize, Serialize};

use crate::dynsim::Trajectory;
use crate::error::{Error, Result};
use crate::netmodel::BusId;

/// Thresholds and extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Bus voltage deviation that counts as a violation (pu).
    pub voltage_threshold_pu: f64,
    /// Frequency deviation that counts as a violation (Hz).
    pub frequency_threshold_hz: f64,
    /// Length of the closing window that defines the post-fault steady state (s).
    pub window_s: f64,
    /// A channel is settled when its peak-to-peak in the window is below
    /// this fraction of its mean.
    pub settle_band: f64,
    /// Count wind units in the frequency severity, using their rotor-speed
    /// deviation expressed in Hz.
    pub include_dfig_frequency: bool,
    /// Per-bus deviation charged to a diverged run (pu).
    pub diverged_voltage_dev: f64,
    /// Per-machine deviation charged to a diverged run (Hz).
    pub diverged_frequency_dev: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            voltage_threshold_pu: 0.05,
            frequency_threshold_hz: 0.5,
            window_s: 1.0,
            settle_band: 0.02,
            include_dfig_frequency: false,
            diverged_voltage_dev: 1.0,
            diverged_frequency_dev: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleMetrics {
    pub delta_max_deg: f64,
    pub tsi: f64,
    pub sev_a: f64,
}

/// `(360 - d) / (360 + d)`.
pub fn tsi_from_delta(delta_max_deg: f64) -> f64 {
    (360.0 - delta_max_deg) / (360.0 + delta_max_deg)
}

/// Angle severity: the magnitude of a negative index, else zero.
pub fn angle_severity(tsi: f64) -> f64 {
    if tsi < 0.0 {
        tsi.abs()
    } else {
        0.0
    }
}

impl AngleMetrics {
    pub fn from_delta(delta_max_deg: f64) -> Self {
        let tsi = tsi_from_delta(delta_max_deg);
        Self { delta_max_deg, tsi, sev_a: angle_severity(tsi) }
    }
}

/// Largest pairwise machine angle separation from fault application (or the
/// start, without a fault) to the end of the record.
pub fn compute_tsi(tr: &Trajectory) -> Result<AngleMetrics> {
    if tr.delta_deg.len() < 2 {
        return Err(Error::UndefinedIndex(format!(
            "angle index needs at least two synchronous machines, found {}",
            tr.delta_deg.len()
        )));
    }
    let t0 = tr.t_apply.unwrap_or(0.0);
    let delta_max = (0..tr.len())
        .filter(|&k| tr.time[k] >= t0 - 1e-9)
        .map(|k| tr.angle_spread_deg(k))
        .fold(0.0, f64::max);
    if tr.termination.is_diverged() {
        return Ok(AngleMetrics { delta_max_deg: delta_max, tsi: -1.0, sev_a: 1.0 });
    }
    Ok(AngleMetrics::from_delta(delta_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyValue {
    pub value: f64,
    pub settled: bool,
}

/// Mean of the last `window_s` seconds of a channel, flagged unsettled when
/// its peak-to-peak exceeds `settle_band` times the mean.
pub fn steady_state_window(time: &[f64], channel: &[f64], t_end: f64, window_s: f64, settle_band: f64) -> Result<SteadyValue> {
    let start = t_end - window_s - 1e-9;
    let vals: Vec<f64> = time
        .iter()
        .zip(channel)
        .filter(|(t, _)| **t >= start && **t <= t_end + 1e-9)
        .map(|(_, v)| *v)
        .collect();
    if vals.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no samples in the steady-state window [{:.3}, {t_end:.3}] s",
            t_end - window_s
        )));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(SteadyValue { value: mean, settled: hi - lo < settle_band * mean.abs() })
}

/// Post-fault steady state with the default window (final 1 s, 2 % band).
pub fn post_fault_steady_state(time: &[f64], channel: &[f64], t_clear: f64, t_end: f64) -> Result<SteadyValue> {
    if t_end - t_clear < 2.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "steady state needs at least 2 s after clearing, have {:.3} s",
            t_end - t_clear
        )));
    }
    let cfg = MetricsConfig::default();
    steady_state_window(time, channel, t_end, cfg.window_s, cfg.settle_band)
}

fn steady(tr: &Trajectory, channel: &[f64], cfg: &MetricsConfig) -> Result<SteadyValue> {
    let t_clear = tr.t_clear.unwrap_or(0.0);
    if tr.t_end - t_clear < 2.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "steady state needs at least 2 s after clearing, have {:.3} s",
            tr.t_end - t_clear
        )));
    }
    steady_state_window(&tr.time, channel, tr.t_end, cfg.window_s, cfg.settle_band)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageMetrics {
    pub bus_ids: Vec<BusId>,
    /// Post-fault steady-state magnitude per bus (pu).
    pub v_k: Vec<f64>,
    /// `1 - V_k` per bus.
    pub v_dev: Vec<f64>,
    pub sev_v: f64,
    /// Every bus channel settled.
    pub settled: bool,
}

/// Sum of `|1 - V_k|` over buses whose deviation exceeds the threshold.
pub fn voltage_severity_from(v_k: &[f64], threshold: f64) -> f64 {
    v_k.iter().map(|v| (1.0 - v).abs()).filter(|d| *d > threshold).fold(0.0, |a, d| a + d)
}

pub fn voltage_severity(tr: &Trajectory) -> Result<VoltageMetrics> {
    voltage_severity_with(tr, &MetricsConfig::default())
}

/// Voltage severity over the case buses. The bus created for the fault is
/// not a bus of the system and is left out.
pub fn voltage_severity_with(tr: &Trajectory, cfg: &MetricsConfig) -> Result<VoltageMetrics> {
    let rows: Vec<usize> = (0..tr.bus_ids.len()).filter(|&i| Some(tr.bus_ids[i]) != tr.fault_bus).collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no bus voltage channels".into()));
    }
    let bus_ids: Vec<BusId> = rows.iter().map(|&i| tr.bus_ids[i]).collect();
    if tr.termination.is_diverged() {
        let n = rows.len();
        return Ok(VoltageMetrics {
            bus_ids,
            v_k: vec![f64::NAN; n],
            v_dev: vec![cfg.diverged_voltage_dev; n],
            sev_v: cfg.diverged_voltage_dev * n as f64,
            settled: false,
        });
    }
    let mut v_k = Vec::with_capacity(rows.len());
    let mut settled = true;
    for &i in &rows {
        let s = steady(tr, &tr.vmag[i], cfg)?;
        settled &= s.settled;
        v_k.push(s.value);
    }
    let v_dev = v_k.iter().map(|v| 1.0 - v).collect();
    let sev_v = voltage_severity_from(&v_k, cfg.voltage_threshold_pu);
    Ok(VoltageMetrics { bus_ids, v_k, v_dev, sev_v, settled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub unit_ids: Vec<String>,
    /// Post-fault steady-state deviation from nominal per unit (Hz).
    pub f_dev_hz: Vec<f64>,
    pub sev_f: f64,
    pub settled: bool,
}

/// Sum of `|f_dev|` over units whose deviation exceeds the threshold.
pub fn frequency_severity_from(f_dev_hz: &[f64], threshold: f64) -> f64 {
    f_dev_hz.iter().map(|d| d.abs()).filter(|d| *d > threshold).fold(0.0, |a, d| a + d)
}

pub fn frequency_severity(tr: &Trajectory) -> Result<FrequencyMetrics> {
    frequency_severity_with(tr, &MetricsConfig::default())
}

pub fn frequency_severity_with(tr: &Trajectory, cfg: &MetricsConfig) -> Result<FrequencyMetrics> {
    let mut unit_ids = tr.sg_ids.clone();
    if cfg.include_dfig_frequency {
        unit_ids.extend(tr.dfig_ids.iter().cloned());
    }
    if unit_ids.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no frequency channels".into()));
    }
    if tr.termination.is_diverged() {
        let n = unit_ids.len();
        return Ok(FrequencyMetrics {
            unit_ids,
            f_dev_hz: vec![cfg.diverged_frequency_dev; n],
            sev_f: cfg.diverged_frequency_dev * n as f64,
            settled: false,
        });
    }
    let mut f_dev_hz = Vec::with_capacity(unit_ids.len());
    let mut settled = true;
    for ch in &tr.freq_hz {
        let s = steady(tr, ch, cfg)?;
        settled &= s.settled;
        f_dev_hz.push(s.value - tr.nominal_hz);
    }
    if cfg.include_dfig_frequency {
        for ch in &tr.dfig_omega_r {
            let s = steady(tr, ch, cfg)?;
            settled &= s.settled;
            f_dev_hz.push((s.value - ch[0]) * tr.nominal_hz);
        }
    }
    let sev_f = frequency_severity_from(&f_dev_hz, cfg.frequency_threshold_hz);
    Ok(FrequencyMetrics { unit_ids, f_dev_hz, sev_f, settled })
}

/// The three severities of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Severities {
    pub sev_a: f64,
    pub sev_v: f64,
    pub sev_f: f64,
}

impl Severities {
    /// Per-run global value: the largest of the three.
    pub fn g(&self) -> f64 {
        self.sev_a.max(self.sev_v).max(self.sev_f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub angle: AngleMetrics,
    pub voltage: VoltageMetrics,
    pub frequency: FrequencyMetrics,
}

impl RunMetrics {
    pub fn severities(&self) -> Severities {
        Severities { sev_a: self.angle.sev_a, sev_v: self.voltage.sev_v, sev_f: self.frequency.sev_f }
    }
}

pub fn evaluate_trajectory(tr: &Trajectory, cfg: &MetricsConfig) -> Result<RunMetrics> {
    Ok(RunMetrics {
        angle: compute_tsi(tr)?,
        voltage: voltage_severity_with(tr, cfg)?,
        frequency: frequency_severity_with(tr, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsim::Termination;
    use proptest::prelude::*;

    /// Flat record with given per-bus voltages and per-machine frequencies.
    fn synthetic(v: &[f64], f: &[f64], angles: &[f64]) -> Trajectory {
        let time: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let n = time.len();
        Trajectory {
            nominal_hz: 60.0,
            sg_ids: (0..f.len()).map(|i| format!("G{i}")).collect(),
            delta_deg: angles.iter().map(|a| vec![*a; n]).collect(),
            freq_hz: f.iter().map(|x| vec![*x; n]).collect(),
            bus_ids: (1..=v.len() as u32).collect(),
            vmag: v.iter().map(|x| vec![*x; n]).collect(),
            dfig_ids: vec![],
            dfig_omega_r: vec![],
            dfig_p_w: vec![],
            dfig_q_w: vec![],
            t_apply: Some(1.0),
            t_clear: Some(1.2),
            t_end: 10.0,
            fault_bus: None,
            termination: Termination::Completed,
            lost_synchronism: false,
            max_network_residual: 0.0,
            unconverged_steps: 0,
            time,
        }
    }

    #[test]
    fn tsi_at_zero_and_540() {
        let a = AngleMetrics::from_delta(0.0);
        assert_eq!((a.tsi, a.sev_a), (1.0, 0.0));
        let b = AngleMetrics::from_delta(540.0);
        assert!((b.tsi + 0.2).abs() < 1e-15);
        assert!((b.sev_a - 0.2).abs() < 1e-15);
    }

    #[test]
    fn tsi_needs_two_machines() {
        let tr = synthetic(&[1.0], &[60.0], &[10.0]);
        assert!(matches!(compute_tsi(&tr), Err(Error::UndefinedIndex(_))));
    }

    #[test]
    fn tsi_from_constant_spread() {
        let tr = synthetic(&[1.0], &[60.0; 3], &[10.0, 40.0, -20.0]);
        let a = compute_tsi(&tr).unwrap();
        assert!((a.delta_max_deg - 60.0).abs() < 1e-12);
        assert!(a.tsi > 0.0);
    }

    #[test]
    fn diverged_run_is_maximal() {
        let mut tr = synthetic(&[1.0; 4], &[60.0; 3], &[0.0, 1.0, 2.0]);
        tr.termination = Termination::Diverged { t: 3.0, cause: "test".into() };
        let a = compute_tsi(&tr).unwrap();
        assert_eq!((a.tsi, a.sev_a), (-1.0, 1.0));
        assert_eq!(voltage_severity(&tr).unwrap().sev_v, 4.0);
        assert_eq!(frequency_severity(&tr).unwrap().sev_f, 6.0);
    }

    #[test]
    fn steady_constant() {
        let t: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let s = post_fault_steady_state(&t, &vec![0.98; t.len()], 1.2, 10.0).unwrap();
        assert!((s.value - 0.98).abs() < 1e-12 && s.settled);
    }

    #[test]
    fn steady_decaying_oscillation() {
        let t: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        // 0.95 + 0.1 e^{-(t-1.2)} cos(2 pi t): ripple bound in the window is 0.1 e^{-7.8}
        let ch: Vec<f64> = t
            .iter()
            .map(|&x| 0.95 + 0.1 * (-(x - 1.2_f64).max(0.0)).exp() * (2.0 * std::f64::consts::PI * x).cos())
            .collect();
        let s = post_fault_steady_state(&t, &ch, 1.2, 10.0).unwrap();
        assert!((s.value - 0.95).abs() <= 0.1 * (-7.8_f64).exp());
        assert!(s.settled);
    }

    #[test]
    fn steady_sustained_oscillation_unsettled() {
        let t: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let ch: Vec<f64> = t.iter().map(|&x| 1.0 + 0.05 * (2.0 * std::f64::consts::PI * 1.5 * x).sin()).collect();
        let s = post_fault_steady_state(&t, &ch, 1.2, 10.0).unwrap();
        let mean = ch[1800..].iter().sum::<f64>() / ch[1800..].len() as f64;
        assert!((s.value - mean).abs() < 1e-12);
        assert!(!s.settled);
    }

    #[test]
    fn steady_window_errors() {
        let t: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let ch = vec![1.0; t.len()];
        assert!(post_fault_steady_state(&t, &ch, 9.0, 10.0).is_err());
        assert!(post_fault_steady_state(&[], &[], 1.0, 10.0).is_err());
    }

    #[test]
    fn voltage_threshold_arithmetic() {
        assert_eq!(voltage_severity(&synthetic(&[1.0; 5], &[60.0; 2], &[0.0, 0.0])).unwrap().sev_v, 0.0);
        let mut v = vec![0.99; 10];
        v[3] = 0.92;
        let m = voltage_severity(&synthetic(&v, &[60.0; 2], &[0.0, 0.0])).unwrap();
        assert!((m.sev_v - 0.08).abs() < 1e-12);
        assert_eq!(voltage_severity(&synthetic(&[0.96], &[60.0; 2], &[0.0, 0.0])).unwrap().sev_v, 0.0);
    }

    #[test]
    fn fault_bus_excluded() {
        let mut tr = synthetic(&[1.0, 1.0, 0.0], &[60.0; 2], &[0.0, 0.0]);
        tr.fault_bus = Some(3);
        let m = voltage_severity(&tr).unwrap();
        assert_eq!(m.sev_v, 0.0);
        assert_eq!(m.bus_ids, vec![1, 2]);
    }

    #[test]
    fn frequency_threshold_arithmetic() {
        let sev = |f: &[f64]| frequency_severity(&synthetic(&[1.0], f, &vec![0.0; f.len()])).unwrap().sev_f;
        assert_eq!(sev(&[60.0, 60.0, 60.0]), 0.0);
        assert!((sev(&[59.2, 60.0]) - 0.8).abs() < 1e-12);
        assert_eq!(sev(&[59.7, 60.0]), 0.0);
    }

    #[test]
    fn dfig_frequency_flag() {
        let mut tr = synthetic(&[1.0], &[60.0, 60.0], &[0.0, 0.0]);
        let n = tr.len();
        tr.dfig_ids = vec!["W1".into()];
        let mut w = vec![1.2; n];
        for x in w.iter_mut().skip(100) {
            *x = 1.22;
        }
        tr.dfig_omega_r = vec![w];
        assert_eq!(frequency_severity(&tr).unwrap().sev_f, 0.0);
        let cfg = MetricsConfig { include_dfig_frequency: true, ..Default::default() };
        let m = frequency_severity_with(&tr, &cfg).unwrap();
        assert!((m.sev_f - 1.2).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn tsi_bounds_and_sign(d in 0.0f64..1e6) {
            let t = tsi_from_delta(d);
            prop_assert!(t > -1.0 && t <= 1.0);
            prop_assert_eq!(t < 0.0, d > 360.0);
            prop_assert!(angle_severity(t) >= 0.0);
        }

        #[test]
        fn tsi_strictly_decreasing(a in 0.0f64..1e5, step in 1e-3f64..1e3) {
            prop_assert!(tsi_from_delta(a + step) < tsi_from_delta(a));
        }

        #[test]
        fn delta_max_permutation_invariant(mut angles in proptest::collection::vec(-500.0f64..500.0, 2..8), rot in 0usize..8) {
            let f = vec![60.0; angles.len()];
            let a = compute_tsi(&synthetic(&[1.0], &f, &angles)).unwrap().delta_max_deg;
            let r = rot % angles.len();
            angles.rotate_left(r);
            angles.reverse();
            let b = compute_tsi(&synthetic(&[1.0], &f, &angles)).unwrap().delta_max_deg;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn severities_zero_iff_no_crossing(v in proptest::collection::vec(0.8f64..1.2, 1..20), th in 0.01f64..0.2) {
            let s = voltage_severity_from(&v, th);
            let crossing = v.iter().any(|x| (1.0 - x).abs() > th);
            prop_assert!(s >= 0.0);
            prop_assert_eq!(s > 0.0, crossing);
        }

        #[test]
        fn lowering_threshold_never_lowers_severity(v in proptest::collection::vec(0.8f64..1.2, 1..20), a in 0.0f64..0.2, b in 0.0f64..0.2) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(voltage_severity_from(&v, lo) >= voltage_severity_from(&v, hi));
            let f: Vec<f64> = v.iter().map(|x| (x - 1.0) * 10.0).collect();
            prop_assert!(frequency_severity_from(&f, lo * 5.0) >= frequency_severity_from(&f, hi * 5.0));
        }
    }
}
