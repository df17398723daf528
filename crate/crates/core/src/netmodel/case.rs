use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynsim::params::{
    DfigParams, ExciterParams, GovernorParams, PssParams, SyncMachineParams,
};
use crate::error::{Error, Result};

pub type BusId = u32;
pub type BranchId = u32;

/// The 39-bus case shipped with the crate.
pub const IEEE39_TOML: &str = include_str!("../../../../cases/ieee39.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub name: String,
    pub base_kv: f64,
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_setpoint: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shunt_g: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub shunt_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub tap: f64,
    pub kind: BranchKind,
    /// Negative-sequence series impedance `[r, x]`; defaults to the positive sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<[f64; 2]>,
    /// Zero-sequence series impedance `[r, x]`; defaults to three times the positive sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<[f64; 2]>,
}

impl Branch {
    pub fn is_line(&self) -> bool {
        self.kind == BranchKind::Line
    }

    pub fn z1(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }

    pub fn z2(&self) -> Complex64 {
        self.z2
            .map(|[r, x]| Complex64::new(r, x))
            .unwrap_or_else(|| self.z1())
    }

    pub fn z0(&self) -> Complex64 {
        self.z0
            .map(|[r, x]| Complex64::new(r, x))
            .unwrap_or_else(|| 3.0 * self.z1())
    }
}

/// Constant-power in the power flow, constant-impedance in the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: BusId,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorModel {
    Synchronous {
        machine: SyncMachineParams,
        governor: GovernorParams,
        exciter: ExciterParams,
        pss: PssParams,
    },
    Dfig {
        dfig: DfigParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorUnit {
    pub id: String,
    pub bus: BusId,
    pub mva_rating: f64,
    pub p_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_setpoint: Option<f64>,
    #[serde(flatten)]
    pub model: GeneratorModel,
}

impl GeneratorUnit {
    pub fn is_synchronous(&self) -> bool {
        matches!(self.model, GeneratorModel::Synchronous { .. })
    }

    pub fn is_dfig(&self) -> bool {
        matches!(self.model, GeneratorModel::Dfig { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemInfo {
    #[serde(default)]
    pub name: String,
    pub mva_base: f64,
    #[serde(default = "sixty")]
    pub nominal_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystemCase {
    pub system: SystemInfo,
    #[serde(rename = "bus", default)]
    pub buses: Vec<Bus>,
    #[serde(rename = "branch", default)]
    pub branches: Vec<Branch>,
    #[serde(rename = "load", default)]
    pub loads: Vec<Load>,
    #[serde(rename = "generator", default)]
    pub generators: Vec<GeneratorUnit>,
}

/// Non-fatal findings from [`PowerSystemCase::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}
fn is_one(v: &f64) -> bool {
    *v == 1.0
}
fn one() -> f64 {
    1.0
}
fn sixty() -> f64 {
    60.0
}

/// Reads and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<PowerSystemCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let case = PowerSystemCase::from_toml_str(&text)?;
    case.validate()?;
    Ok(case)
}

impl PowerSystemCase {
    /// The bundled IEEE 39-bus case, validated.
    pub fn ieee39() -> Self {
        let case = Self::from_toml_str(IEEE39_TOML).expect("bundled case parses");
        case.validate().expect("bundled case validates");
        case
    }

    /// Parses without validating.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn bus_position(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_positions(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorUnit> {
        self.generators.iter().find(|g| g.id == id)
    }

    /// Branches eligible as fault targets (lines only), in file order.
    pub fn fault_eligible_lines(&self) -> Vec<BranchId> {
        self.branches
            .iter()
            .filter(|b| b.is_line())
            .map(|b| b.id)
            .collect()
    }

    pub fn line_count(&self) -> usize {
        self.branches.iter().filter(|b| b.is_line()).count()
    }

    pub fn transformer_count(&self) -> usize {
        self.branches.len() - self.line_count()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.loads.iter().map(|l| l.p_mw).sum()
    }

    pub fn total_dispatch_mw(&self) -> f64 {
        self.generators.iter().map(|g| g.p_mw).sum()
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack)
    }

    /// Checks every structural and parameter invariant. Errors name the
    /// offending element; sequence-data defaults are reported as warnings.
    pub fn validate(&self) -> Result<ValidationReport> {
        let mut report = ValidationReport::default();
        let fail = |msg: String| Err(Error::Validation(msg));

        if self.system.mva_base <= 0.0 {
            return fail(format!("system mva_base must be positive, got {}", self.system.mva_base));
        }
        if self.buses.is_empty() {
            return fail("case has no buses".into());
        }

        let mut ids = HashSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return fail(format!("duplicate bus id {}", bus.id));
            }
            if bus.base_kv <= 0.0 || !bus.base_kv.is_finite() {
                return fail(format!("bus {}: base_kv must be positive", bus.id));
            }
            if bus.kind != BusKind::Pq {
                match bus.v_setpoint {
                    Some(v) if v > 0.0 && v.is_finite() => {}
                    _ => return fail(format!("bus {}: PV/slack bus needs a positive v_setpoint", bus.id)),
                }
            }
        }
        let slack: Vec<_> = self.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
        match slack.len() {
            1 => {}
            0 => return fail("case has no slack bus".into()),
            _ => {
                return fail(format!(
                    "case has {} slack buses ({}); exactly one is required",
                    slack.len(),
                    slack.iter().map(|b| b.id.to_string()).collect::<Vec<_>>().join(", ")
                ))
            }
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return fail(format!("duplicate branch id {}", br.id));
            }
            if br.from == br.to {
                return fail(format!("branch {}: from and to bus are both {}", br.id, br.from));
            }
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return fail(format!("branch {}: unknown bus {}", br.id, end));
                }
            }
            if br.x == 0.0 || !br.x.is_finite() || !br.r.is_finite() {
                return fail(format!("branch {}: series reactance must be nonzero and finite", br.id));
            }
            if br.tap <= 0.0 {
                return fail(format!("branch {}: tap must be positive", br.id));
            }
            if br.z2.is_none() || br.z0.is_none() {
                report.warnings.push(format!(
                    "branch {}: sequence impedance defaulted (z2 = z1, z0 = 3 z1)",
                    br.id
                ));
            }
        }

        for (i, load) in self.loads.iter().enumerate() {
            if !ids.contains(&load.bus) {
                return fail(format!("load #{}: unknown bus {}", i + 1, load.bus));
            }
        }

        let mut gen_ids = HashSet::new();
        let mut gen_buses = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id.as_str()) {
                return fail(format!("duplicate generator id {}", g.id));
            }
            let Some(bus) = self.buses.iter().find(|b| b.id == g.bus) else {
                return fail(format!("generator {}: unknown bus {}", g.id, g.bus));
            };
            if bus.kind == BusKind::Pq {
                return fail(format!("generator {}: bus {} is a PQ bus", g.id, g.bus));
            }
            if let (Some(gv), Some(bv)) = (g.v_setpoint, bus.v_setpoint) {
                if (gv - bv).abs() > 1e-9 {
                    return fail(format!(
                        "generator {}: v_setpoint {} disagrees with bus {} setpoint {}",
                        g.id, gv, g.bus, bv
                    ));
                }
            }
            if g.mva_rating <= 0.0 {
                return fail(format!("generator {}: mva_rating must be positive", g.id));
            }
            if g.p_mw > g.mva_rating {
                return fail(format!(
                    "generator {}: dispatch {} MW exceeds rating {} MVA",
                    g.id, g.p_mw, g.mva_rating
                ));
            }
            match &g.model {
                GeneratorModel::Synchronous { machine, governor, exciter, pss } => {
                    machine.validate().map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
                    governor.validate().map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
                    exciter.validate().map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
                    pss.validate().map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
                }
                GeneratorModel::Dfig { dfig } => {
                    dfig.validate().map_err(|m| Error::Validation(format!("generator {}: {m}", g.id)))?;
                }
            }
            gen_buses.insert(g.bus);
        }
        for bus in &self.buses {
            if bus.kind != BusKind::Pq && !gen_buses.contains(&bus.id) {
                return fail(format!("bus {}: PV/slack bus without a generator", bus.id));
            }
        }
        let rating: f64 = self.generators.iter().map(|g| g.mva_rating).sum();
        if self.total_dispatch_mw() > rating {
            return fail(format!(
                "total dispatch {:.2} MW exceeds installed capacity {:.2} MVA",
                self.total_dispatch_mw(),
                rating
            ));
        }

        if let Some(island) = self.disconnected_bus() {
            return fail(format!("network is not connected: bus {island} is unreachable from the slack bus"));
        }
        Ok(report)
    }

    fn disconnected_bus(&self) -> Option<BusId> {
        let pos = self.bus_positions();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (a, b) = (pos[&br.from], pos[&br.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let start = self.buses.iter().position(|b| b.kind == BusKind::Slack).unwrap_or(0);
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().position(|s| !s).map(|i| self.buses[i].id)
    }
}

impl std::str::FromStr for PowerSystemCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_toml_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_case_counts() {
        let case = PowerSystemCase::ieee39();
        assert_eq!(case.buses.len(), 39);
        assert_eq!(case.generators.len(), 10);
        assert_eq!(case.line_count(), 34);
        assert_eq!(case.transformer_count(), 12);
        assert_eq!(case.loads.len(), 19);
        assert!((case.total_load_mw() - 6097.1).abs() < 1e-9);
    }

    #[test]
    fn two_slack_buses_rejected() {
        let mut case = PowerSystemCase::ieee39();
        case.buses[0].kind = BusKind::Slack;
        case.buses[0].v_setpoint = Some(1.0);
        case.generators[0].bus = case.buses[0].id;
        let err = case.validate().unwrap_err().to_string();
        assert!(err.contains("slack"), "{err}");
    }

    #[test]
    fn duplicate_bus_named() {
        let mut case = PowerSystemCase::ieee39();
        case.buses[5].id = 3;
        let err = case.validate().unwrap_err().to_string();
        assert!(err.contains("duplicate bus id 3"), "{err}");
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut case = PowerSystemCase::ieee39();
        // bus 30 hangs off bus 2 through a single transformer
        case.branches.retain(|b| !(b.from == 2 && b.to == 30));
        let err = case.validate().unwrap_err().to_string();
        assert!(err.contains("bus 30"), "{err}");
    }

    #[test]
    fn sequence_defaults_flagged() {
        let case = PowerSystemCase::ieee39();
        let report = case.validate().unwrap();
        assert_eq!(report.warnings.len(), 46);
        let br = &case.branches[0];
        assert_eq!(br.z2(), br.z1());
        assert_eq!(br.z0(), 3.0 * br.z1());
    }

    #[test]
    fn malformed_file_is_parse_error() {
        let err = PowerSystemCase::from_toml_str("[system]\nmva_base = \"x\"").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn toml_round_trip() {
        let case = PowerSystemCase::ieee39();
        let text = case.to_toml_string().unwrap();
        let back = PowerSystemCase::from_toml_str(&text).unwrap();
        assert_eq!(case, back);
    }
}
