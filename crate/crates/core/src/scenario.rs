//! Case transforms for the wind-penetration, generation and load studies.
//!
//! Every transform returns a new case and leaves its input untouched.

use serde::{Deserialize, Serialize};

use crate::dynsim::params::DfigParams;
use crate::error::{Error, Result};
use crate::netmodel::{GeneratorModel, PowerSystemCase};
use crate::powerflow::{solve_power_flow_with, PowerFlowOptions};

/// Units replaced by wind at the tabulated penetration levels of the
/// 39-bus case.
pub const PENETRATION_SETS: [(u32, &[&str]); 4] = [
    (0, &[]),
    (25, &["G1", "G3"]),
    (50, &["G1", "G3", "G5", "G9", "G10"]),
    (80, &["G1", "G3", "G4", "G5", "G6", "G7", "G9", "G10"]),
];

/// Replacement set for a tabulated penetration level.
pub fn replacement_set(level_pct: u32) -> Option<Vec<String>> {
    PENETRATION_SETS
        .iter()
        .find(|(l, _)| *l == level_pct)
        .map(|(_, ids)| ids.iter().map(|s| s.to_string()).collect())
}

/// Replaces each listed synchronous unit by a DFIG aggregate with the same
/// dispatch, rating, bus and voltage setpoint.
pub fn apply_wind_penetration<S: AsRef<str>>(case: &PowerSystemCase, replaced: &[S]) -> Result<PowerSystemCase> {
    let mut out = case.clone();
    for id in replaced {
        let id = id.as_ref();
        let g = out
            .generators
            .iter_mut()
            .find(|g| g.id == id)
            .ok_or_else(|| Error::Scenario(format!("no generator named {id}")))?;
        if !g.is_synchronous() {
            return Err(Error::Scenario(format!("generator {id} is not synchronous")));
        }
        g.model = GeneratorModel::Dfig { dfig: DfigParams::typical() };
    }
    let remaining = out.generators.iter().filter(|g| g.is_synchronous()).count();
    if remaining < 2 {
        return Err(Error::Scenario(format!(
            "only {remaining} synchronous generator(s) would remain; the angle index needs two"
        )));
    }
    Ok(out)
}

/// Wind dispatch as a percentage of total dispatch.
pub fn compute_penetration(case: &PowerSystemCase) -> Result<f64> {
    let total = case.total_dispatch_mw();
    if total <= 0.0 {
        return Err(Error::Scenario("total generation dispatch is zero".into()));
    }
    let wind: f64 = case.generators.iter().filter(|g| g.is_dfig()).fold(0.0, |a, g| a + g.p_mw);
    Ok(100.0 * wind / total)
}

/// Scales every unit rating. Machine constants stay on their own base, so
/// system-base inertia grows and reactances shrink; dispatch is unchanged.
pub fn scale_generation(case: &PowerSystemCase, factor: f64) -> Result<PowerSystemCase> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::Scenario(format!("generation scale must be at least 1, got {factor}")));
    }
    let mut out = case.clone();
    for g in &mut out.generators {
        g.mva_rating *= factor;
    }
    Ok(out)
}

/// Scales every load; the slack unit takes up the difference. Fails when
/// the scaled case has no power-flow solution.
pub fn scale_load(case: &PowerSystemCase, factor: f64) -> Result<PowerSystemCase> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Scenario(format!("load scale must be positive, got {factor}")));
    }
    let mut out = case.clone();
    for l in &mut out.loads {
        l.p_mw *= factor;
        l.q_mvar *= factor;
    }
    solve_power_flow_with(&out, &PowerFlowOptions::default())
        .map_err(|e| Error::LoadScalePowerFlow { factor, source: Box::new(e) })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Either a tabulated level or an explicit list of replaced units.
    WindPenetration {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        penetration_pct: Option<u32>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        replaced: Vec<String>,
    },
    GenerationScale { factor: f64 },
    LoadScale { factor: f64 },
}

impl ScenarioSpec {
    pub fn apply(&self, case: &PowerSystemCase) -> Result<PowerSystemCase> {
        match self {
            ScenarioSpec::WindPenetration { penetration_pct, replaced } => {
                let ids = match penetration_pct {
                    Some(level) => replacement_set(*level).ok_or_else(|| {
                        Error::Scenario(format!("no replacement set for {level}% penetration (use 0, 25, 50 or 80)"))
                    })?,
                    None => replaced.clone(),
                };
                apply_wind_penetration(case, &ids)
            }
            ScenarioSpec::GenerationScale { factor } => scale_generation(case, *factor),
            ScenarioSpec::LoadScale { factor } => scale_load(case, *factor),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::solve_power_flow;

    #[test]
    fn empty_replacement_is_identity() {
        let case = PowerSystemCase::ieee39();
        let out = apply_wind_penetration::<&str>(&case, &[]).unwrap();
        assert_eq!(out, case);
        assert_eq!(compute_penetration(&out).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_levels() {
        let case = PowerSystemCase::ieee39();
        for (level, ids) in PENETRATION_SETS {
            let out = apply_wind_penetration(&case, ids).unwrap();
            let p = compute_penetration(&out).unwrap();
            assert!((p - level as f64).abs() < 1.0, "level {level}: {p}");
        }
    }

    #[test]
    fn replacement_keeps_rating_and_dispatch() {
        let case = PowerSystemCase::ieee39();
        let out = apply_wind_penetration(&case, &["G3"]).unwrap();
        let (a, b) = (case.generator("G3").unwrap(), out.generator("G3").unwrap());
        assert!(b.is_dfig());
        assert_eq!((a.bus, a.mva_rating, a.p_mw, a.v_setpoint), (b.bus, b.mva_rating, b.p_mw, b.v_setpoint));
        assert!(case.generator("G3").unwrap().is_synchronous(), "input untouched");
    }

    #[test]
    fn replacement_errors() {
        let case = PowerSystemCase::ieee39();
        assert!(apply_wind_penetration(&case, &["G42"]).is_err());
        let once = apply_wind_penetration(&case, &["G3"]).unwrap();
        assert!(apply_wind_penetration(&once, &["G3"]).is_err());
        let all: Vec<String> = case.generators.iter().skip(1).map(|g| g.id.clone()).collect();
        assert!(apply_wind_penetration(&case, &all).is_err());
    }

    #[test]
    fn all_wind_is_full_penetration() {
        let mut case = PowerSystemCase::ieee39();
        for g in &mut case.generators {
            g.model = GeneratorModel::Dfig { dfig: DfigParams::typical() };
        }
        assert!((compute_penetration(&case).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn generation_scaling() {
        let case = PowerSystemCase::ieee39();
        assert_eq!(scale_generation(&case, 1.0).unwrap(), case);
        let out = scale_generation(&case, 1.2).unwrap();
        for (a, b) in case.generators.iter().zip(&out.generators) {
            assert!((b.mva_rating - 1.2 * a.mva_rating).abs() < 1e-9);
            assert_eq!(a.p_mw, b.p_mw);
        }
        let pa = solve_power_flow(&case, 1e-8, 20).unwrap();
        let pb = solve_power_flow(&out, 1e-8, 20).unwrap();
        assert_eq!(pa.v_mag, pb.v_mag);
        assert!(scale_generation(&case, 0.9).is_err());
    }

    #[test]
    fn load_scaling() {
        let case = PowerSystemCase::ieee39();
        assert_eq!(scale_load(&case, 1.0).unwrap(), case);
        let out = scale_load(&case, 1.1).unwrap();
        assert!((out.total_load_mw() - 6706.81).abs() < 1e-6);
        let err = scale_load(&case, 3.0).unwrap_err().to_string();
        assert!(err.contains('3'), "{err}");
        assert!(scale_load(&case, 0.0).is_err());
    }

    #[test]
    fn spec_roundtrip() {
        let spec = ScenarioSpec::WindPenetration { penetration_pct: Some(50), replaced: vec![] };
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<ScenarioSpec>(&text).unwrap(), spec);
        let case = PowerSystemCase::ieee39();
        let out = spec.apply(&case).unwrap();
        assert_eq!(out.generators.iter().filter(|g| g.is_dfig()).count(), 5);
        assert!(ScenarioSpec::WindPenetration { penetration_pct: Some(33), replaced: vec![] }.apply(&case).is_err());
    }
}
