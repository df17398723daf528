use super::case::{Branch, BranchId, BranchKind, Bus, BusId, BusKind, PowerSystemCase};
use crate::error::{Error, Result};

/// Largest fraction of the line placed on the near side of the fault bus.
/// A fault at 100 % sits electrically on the far terminal without producing a
/// zero-impedance section.
pub const MAX_SPLIT_FRACTION: f64 = 0.999;

/// A case with one line replaced by two sections meeting at a new fault bus.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCase {
    pub case: PowerSystemCase,
    pub fault_bus: BusId,
    /// Branch ids of the (from-side, to-side) sections.
    pub sections: [BranchId; 2],
    pub original_line: BranchId,
}

/// Fraction of the line between its from-bus and a fault at `location_pct`.
pub fn split_fraction(location_pct: u8) -> f64 {
    (f64::from(location_pct) / 100.0).min(MAX_SPLIT_FRACTION)
}

/// Replaces `line` with two series sections joined at a new fault bus placed
/// `location_pct` percent of the way from the line's from-bus. Series
/// impedance, charging and sequence impedances split linearly; the input case
/// is untouched.
pub fn split_line_at(case: &PowerSystemCase, line: BranchId, location_pct: u8) -> Result<SplitCase> {
    if !(1..=100).contains(&location_pct) {
        return Err(Error::InvalidArgument(format!(
            "fault location must be 1..=100 percent, got {location_pct}"
        )));
    }
    let idx = case
        .branches
        .iter()
        .position(|b| b.id == line)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown branch {line}")))?;
    let original = &case.branches[idx];
    if original.kind != BranchKind::Line {
        return Err(Error::InvalidArgument(format!(
            "branch {line} is a transformer; only lines can be faulted"
        )));
    }
    let frac = split_fraction(location_pct);
    let fault_bus = case.buses.iter().map(|b| b.id).max().unwrap_or(0) + 1;
    let next_branch = case.branches.iter().map(|b| b.id).max().unwrap_or(0) + 1;

    let from_kv = case
        .buses
        .iter()
        .find(|b| b.id == original.from)
        .map(|b| b.base_kv)
        .unwrap_or(1.0);

    let section = |id: BranchId, from: BusId, to: BusId, k: f64| Branch {
        id,
        from,
        to,
        r: original.r * k,
        x: original.x * k,
        b: original.b * k,
        tap: 1.0,
        kind: BranchKind::Line,
        z2: Some({
            let z = original.z2();
            [z.re * k, z.im * k]
        }),
        z0: Some({
            let z = original.z0();
            [z.re * k, z.im * k]
        }),
    };

    let mut derived = case.clone();
    derived.buses.push(Bus {
        id: fault_bus,
        name: format!("F{line}@{location_pct}%"),
        base_kv: from_kv,
        kind: BusKind::Pq,
        v_setpoint: None,
        shunt_g: 0.0,
        shunt_b: 0.0,
    });
    let near = section(next_branch, original.from, fault_bus, frac);
    let far = section(next_branch + 1, fault_bus, original.to, 1.0 - frac);
    derived.branches.splice(idx..=idx, [near, far]);

    Ok(SplitCase {
        case: derived,
        fault_bus,
        sections: [next_branch, next_branch + 1],
        original_line: line,
    })
}
